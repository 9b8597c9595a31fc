#include "typecase/curation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

namespace typecase {
namespace {

template <class Vec, class IdT>
auto find_by_id(Vec& items, IdT id) {
  auto it = std::lower_bound(items.begin(), items.end(), id, [](const auto& item, IdT v) { return item.id < v; });
  return (it != items.end() && it->id == id) ? it : items.end();
}

template <class D>
auto& segment_ref(D& ds, SegmentId id) {
  auto it = find_by_id(ds.segments, id);
  if (it == ds.segments.end()) throw Error(ErrorCode::UnknownId, "no such segment " + std::to_string(id.value), entity_ref(id));
  return *it;
}

Block* find_block(Dataset& ds, BlockId id) {
  auto it = find_by_id(ds.blocks, id);
  return it == ds.blocks.end() ? nullptr : &*it;
}

template <class D>
auto& block_ref(D& ds, BlockId id) {
  auto it = find_by_id(ds.blocks, id);
  if (it != ds.blocks.end()) return *it;
  throw Error(ErrorCode::UnknownId, "no such block " + std::to_string(id.value), entity_ref(id));
}

Block& insert_block(Dataset& ds, BlockId id, CharacterKey key) {
  auto it = std::lower_bound(ds.blocks.begin(), ds.blocks.end(), id, [](const Block& b, BlockId v) { return b.id < v; });
  return *ds.blocks.insert(it, Block{id, std::move(key), {}});
}

void erase_block(Dataset& ds, BlockId id) {
  std::erase_if(ds.blocks, [&](const Block& b) { return b.id == id; });
}

void sort_members(Dataset& ds, Block& block) {
  auto seg = [&](SegmentId id) -> const Segment& { return segment_ref(ds, id); };
  std::sort(block.member_ids.begin(), block.member_ids.end(),
            [&](SegmentId a, SegmentId b) { return reading_order_less(seg(a), seg(b)); });
}

// Moves one segment between existing blocks without any checks.
void relink(Dataset& ds, Segment& seg, Block& from, Block& to) {
  std::erase(from.member_ids, seg.id);
  seg.block_id = to.id;
  to.member_ids.push_back(seg.id);
  sort_members(ds, to);
}

void require_same_key(const CharacterKey& a, const CharacterKey& b, const std::string& what, const std::string& entity) {
  if (a != b) {
    throw Error(ErrorCode::KeyMismatch, what + ": character " + describe(a) + " differs from " + describe(b), entity);
  }
}

Error log_mismatch(const std::string& what, const std::string& entity) {
  return Error(ErrorCode::IntegrityError, "edit does not match dataset state: " + what, entity);
}

std::vector<BlockChange> apply_move(Dataset& ds, const MoveSegment& op) {
  Segment& seg = segment_ref(ds, op.segment);
  Block& to = block_ref(ds, op.to);
  if (seg.block_id != op.from) throw log_mismatch("segment is not in the recorded source block", entity_ref(op.segment));
  if (op.from == op.to) throw Error(ErrorCode::SameBlock, "move source and target are the same block", entity_ref(op.to));
  require_same_key(seg.key, to.key, "move " + entity_ref(op.segment) + " to " + entity_ref(op.to), entity_ref(op.segment));
  Block& from = block_ref(ds, op.from);
  relink(ds, seg, from, to);
  std::vector<BlockChange> changes{{op.from, false, from.member_ids.empty()}, {op.to, false, false}};
  if (from.member_ids.empty()) erase_block(ds, op.from);
  return changes;
}

std::vector<BlockChange> revert_move(Dataset& ds, const MoveSegment& op) {
  Segment& seg = segment_ref(ds, op.segment);
  if (seg.block_id != op.to) throw log_mismatch("segment is not in the recorded target block", entity_ref(op.segment));
  Block* from = find_block(ds, op.from);
  const bool recreated = from == nullptr;
  if (from && from->key != seg.key) throw log_mismatch("source block changed character", entity_ref(op.from));
  if (recreated) from = &insert_block(ds, op.from, seg.key);
  Block& to = block_ref(ds, op.to);
  relink(ds, seg, to, *from);
  std::vector<BlockChange> changes{{op.from, recreated, false}, {op.to, false, to.member_ids.empty()}};
  if (to.member_ids.empty()) erase_block(ds, op.to);
  return changes;
}

std::vector<BlockChange> apply_merge(Dataset& ds, const MergeBlocks& op) {
  if (op.src == op.dst) throw Error(ErrorCode::SameBlock, "cannot merge a block into itself", entity_ref(op.src));
  Block& src = block_ref(ds, op.src);
  Block& dst = block_ref(ds, op.dst);
  require_same_key(src.key, dst.key, "merge " + entity_ref(op.src) + " into " + entity_ref(op.dst), entity_ref(op.src));
  if (src.member_ids != op.moved) throw log_mismatch("source membership differs from the recorded one", entity_ref(op.src));
  for (SegmentId sid : src.member_ids) {
    segment_ref(ds, sid).block_id = op.dst;
    dst.member_ids.push_back(sid);
  }
  sort_members(ds, dst);
  erase_block(ds, op.src);
  return {{op.src, false, true}, {op.dst, false, false}};
}

std::vector<BlockChange> revert_merge(Dataset& ds, const MergeBlocks& op) {
  if (find_block(ds, op.src)) throw log_mismatch("merged source block still exists", entity_ref(op.src));
  Block& dst_check = block_ref(ds, op.dst);
  for (SegmentId sid : op.moved) {
    if (segment_ref(ds, sid).block_id != op.dst) throw log_mismatch("moved segment left the merge target", entity_ref(sid));
  }
  if (dst_check.member_ids.size() <= op.moved.size()) throw log_mismatch("merge target would become empty", entity_ref(op.dst));
  CharacterKey key = dst_check.key;
  Block& src = insert_block(ds, op.src, key);
  Block& dst = block_ref(ds, op.dst);  // re-fetch: insertion may reallocate
  for (SegmentId sid : op.moved) {
    std::erase(dst.member_ids, sid);
    segment_ref(ds, sid).block_id = op.src;
  }
  src.member_ids = op.moved;
  sort_members(ds, src);
  return {{op.src, true, false}, {op.dst, false, false}};
}

std::vector<BlockChange> apply_detach(Dataset& ds, const DetachSegment& op) {
  Segment& seg = segment_ref(ds, op.segment);
  if (seg.block_id != op.from) throw log_mismatch("segment is not in the recorded source block", entity_ref(op.segment));
  if (find_block(ds, op.new_block)) throw log_mismatch("new block id already in use", entity_ref(op.new_block));
  if (block_ref(ds, op.from).member_ids.size() < 2) {
    throw Error(ErrorCode::SingletonBlock, "cannot detach the only member of a block", entity_ref(op.from));
  }
  Block& created = insert_block(ds, op.new_block, seg.key);
  relink(ds, seg, block_ref(ds, op.from), created);
  return {{op.from, false, false}, {op.new_block, true, false}};
}

std::vector<BlockChange> revert_detach(Dataset& ds, const DetachSegment& op) {
  Segment& seg = segment_ref(ds, op.segment);
  Block& created = block_ref(ds, op.new_block);
  if (seg.block_id != op.new_block || created.member_ids.size() != 1) {
    throw log_mismatch("detached block no longer holds exactly the detached segment", entity_ref(op.new_block));
  }
  Block& from = block_ref(ds, op.from);
  if (from.key != seg.key) throw log_mismatch("source block changed character", entity_ref(op.from));
  relink(ds, seg, block_ref(ds, op.new_block), block_ref(ds, op.from));
  erase_block(ds, op.new_block);
  return {{op.from, false, false}, {op.new_block, false, true}};
}

std::int64_t max_block_id(const Dataset& ds, const EditLog& log) {
  std::int64_t top = -1;
  for (const auto& b : ds.blocks) top = std::max(top, b.id.value);
  for (const auto& e : log.entries) {
    std::visit([&](const auto& op) {
      using T = std::decay_t<decltype(op)>;
      if constexpr (std::is_same_v<T, MoveSegment>) top = std::max({top, op.from.value, op.to.value});
      if constexpr (std::is_same_v<T, MergeBlocks>) top = std::max({top, op.src.value, op.dst.value});
      if constexpr (std::is_same_v<T, DetachSegment>) top = std::max({top, op.from.value, op.new_block.value});
    }, e.op);
  }
  return top;
}

EditResult commit(const CurationState& state, EditOp op, std::string timestamp) {
  EditResult out{state, {}};
  out.changes = apply_edit(out.state.dataset, op);
  if (const auto* d = std::get_if<DetachSegment>(&op)) {
    out.state.next_block_id = std::max(out.state.next_block_id, d->new_block.value + 1);
  }
  out.state.log.entries.push_back(Edit{std::move(op), state.revision() + 1, std::move(timestamp)});
  return out;
}

}  // namespace

std::vector<BlockChange> apply_edit(Dataset& ds, const EditOp& op) {
  return std::visit([&](const auto& e) {
    using T = std::decay_t<decltype(e)>;
    if constexpr (std::is_same_v<T, MoveSegment>) return apply_move(ds, e);
    if constexpr (std::is_same_v<T, MergeBlocks>) return apply_merge(ds, e);
    if constexpr (std::is_same_v<T, DetachSegment>) return apply_detach(ds, e);
  }, op);
}

std::vector<BlockChange> revert_edit(Dataset& ds, const EditOp& op) {
  return std::visit([&](const auto& e) {
    using T = std::decay_t<decltype(e)>;
    if constexpr (std::is_same_v<T, MoveSegment>) return revert_move(ds, e);
    if constexpr (std::is_same_v<T, MergeBlocks>) return revert_merge(ds, e);
    if constexpr (std::is_same_v<T, DetachSegment>) return revert_detach(ds, e);
  }, op);
}

Dataset replay(Dataset pristine, const EditLog& log) {
  for (const auto& e : log.entries) apply_edit(pristine, e.op);
  return pristine;
}

Dataset rewind(Dataset edited, const EditLog& log) {
  for (auto it = log.entries.rbegin(); it != log.entries.rend(); ++it) revert_edit(edited, it->op);
  return edited;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

CurationState make_state(Dataset ds, EditLog log) {
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    if (log.entries[i].revision != static_cast<std::int64_t>(i) + 1) {
      throw Error(ErrorCode::IntegrityError, "edit log revisions must run 1..n", "edit_log:" + std::to_string(i));
    }
  }
  rewind(ds, log);  // throws if the log does not describe how ds was reached
  CurationState state{std::move(ds), std::move(log), 0};
  state.next_block_id = max_block_id(state.dataset, state.log) + 1;
  return state;
}

EditResult move_segment(const CurationState& state, SegmentId segment, BlockId to, std::string timestamp) {
  const Dataset& ds = state.dataset;
  const Segment& seg = segment_ref(ds, segment);
  block_ref(ds, to);
  if (seg.block_id == to) return {state, {}};
  return commit(state, MoveSegment{segment, seg.block_id, to}, std::move(timestamp));
}

EditResult merge_blocks(const CurationState& state, BlockId src, BlockId dst, std::string timestamp) {
  const Dataset& ds = state.dataset;
  const Block& s = block_ref(ds, src);
  block_ref(ds, dst);
  return commit(state, MergeBlocks{src, dst, s.member_ids}, std::move(timestamp));
}

EditResult detach_segment(const CurationState& state, SegmentId segment, std::string timestamp) {
  const Dataset& ds = state.dataset;
  const Segment& seg = segment_ref(ds, segment);
  return commit(state, DetachSegment{segment, seg.block_id, BlockId{state.next_block_id}}, std::move(timestamp));
}

EditResult undo(const CurationState& state) {
  if (state.log.entries.empty()) throw Error(ErrorCode::EmptyLog, "nothing to undo");
  EditResult out{state, {}};
  out.changes = revert_edit(out.state.dataset, out.state.log.entries.back().op);
  out.state.log.entries.pop_back();
  return out;
}

Curator::Curator(CurationState state, Clock clock) : clock_(std::move(clock)) {
  auto snap = std::make_shared<Snapshot>();
  snap->indexed = IndexedDataset::build(state.dataset);
  snap->state = std::move(state);
  current_ = std::move(snap);
}

std::shared_ptr<const Snapshot> Curator::snapshot() const {
  std::lock_guard lock(publish_mutex_);
  return current_;
}

template <class F>
EditOutcome Curator::mutate(std::optional<std::int64_t> expected_revision, F&& f) {
  std::lock_guard writer(write_mutex_);
  auto base = snapshot();
  if (expected_revision && *expected_revision != base->revision()) {
    throw Error(ErrorCode::RevisionConflict,
                "expected revision " + std::to_string(*expected_revision) + " but current is " +
                    std::to_string(base->revision()),
                "revision:" + std::to_string(base->revision()));
  }
  EditResult result = f(base->state);
  if (result.changes.empty()) return {base, {}, {}};

  std::vector<CharacterKey> keys;
  for (const auto& change : result.changes) {
    if (const Block* b = base->indexed.find_block(change.id)) keys.push_back(b->key);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  auto next = std::make_shared<Snapshot>();
  next->indexed = IndexedDataset::build(result.state.dataset);
  next->state = std::move(result.state);
  next->serial = base->serial + 1;
  {
    std::lock_guard lock(publish_mutex_);
    current_ = next;
  }
  return {std::move(next), std::move(result.changes), std::move(keys)};
}

EditOutcome Curator::move_segment(SegmentId segment, BlockId to, std::optional<std::int64_t> expected_revision) {
  return mutate(expected_revision, [&](const CurationState& s) { return typecase::move_segment(s, segment, to, clock_()); });
}

EditOutcome Curator::merge_blocks(BlockId src, BlockId dst, std::optional<std::int64_t> expected_revision) {
  return mutate(expected_revision, [&](const CurationState& s) { return typecase::merge_blocks(s, src, dst, clock_()); });
}

EditOutcome Curator::detach_segment(SegmentId segment, std::optional<std::int64_t> expected_revision) {
  return mutate(expected_revision, [&](const CurationState& s) { return typecase::detach_segment(s, segment, clock_()); });
}

EditOutcome Curator::undo(std::optional<std::int64_t> expected_revision) {
  return mutate(expected_revision, [&](const CurationState& s) { return typecase::undo(s); });
}

}  // namespace typecase
