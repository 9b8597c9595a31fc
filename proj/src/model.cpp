#include "typecase/model.hpp"

#include <algorithm>
#include <tuple>

namespace typecase {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::UnknownCharacter: return "UnknownCharacter";
    case ErrorCode::UnknownSpread: return "UnknownSpread";
    case ErrorCode::IndexConflict: return "IndexConflict";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::SameBlock: return "SameBlock";
    case ErrorCode::SingletonBlock: return "SingletonBlock";
    case ErrorCode::EmptyLog: return "EmptyLog";
    case ErrorCode::RevisionConflict: return "RevisionConflict";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::TooFewNodes: return "TooFewNodes";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::TooFewBlocks: return "TooFewBlocks";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::ConstantImage: return "ConstantImage";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::BadRequest: return "BadRequest";
  }
  return "Unknown";
}

std::string describe(const CharacterKey& key) {
  if (key.jibo) return key.text + "/" + *key.jibo;
  return key.text;
}

bool Spread::has_line(int index) const {
  return std::any_of(lines.begin(), lines.end(), [&](const LineLayout& l) { return l.index == index; });
}

bool reading_order_less(const Segment& a, const Segment& b) {
  return std::tie(a.spread_id, a.line_index, a.bbox.y, a.id) <
         std::tie(b.spread_id, b.line_index, b.bbox.y, b.id);
}

void canonicalize(Dataset& ds) {
  std::sort(ds.spreads.begin(), ds.spreads.end(), [](const Spread& a, const Spread& b) { return a.id < b.id; });
  for (auto& spread : ds.spreads) {
    std::sort(spread.lines.begin(), spread.lines.end(),
              [](const LineLayout& a, const LineLayout& b) { return a.index < b.index; });
  }
  std::sort(ds.blocks.begin(), ds.blocks.end(), [](const Block& a, const Block& b) { return a.id < b.id; });
  std::sort(ds.segments.begin(), ds.segments.end(),
            [](const Segment& a, const Segment& b) { return a.id < b.id; });

  std::unordered_map<BlockId, std::size_t> pos;
  for (std::size_t i = 0; i < ds.blocks.size(); ++i) {
    ds.blocks[i].member_ids.clear();
    pos.emplace(ds.blocks[i].id, i);
  }
  std::vector<const Segment*> ordered;
  ordered.reserve(ds.segments.size());
  for (const auto& s : ds.segments) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](const Segment* a, const Segment* b) { return reading_order_less(*a, *b); });
  for (const Segment* s : ordered) {
    if (auto it = pos.find(s->block_id); it != pos.end()) ds.blocks[it->second].member_ids.push_back(s->id);
  }
  std::erase_if(ds.blocks, [](const Block& b) { return b.member_ids.empty(); });
}

IndexedDataset IndexedDataset::build(Dataset ds) {
  IndexedDataset out;
  out.data_ = std::move(ds);
  const Dataset& d = out.data_;

  for (std::size_t i = 0; i < d.spreads.size(); ++i) out.spread_pos_.emplace(d.spreads[i].id, i);
  for (std::size_t i = 0; i < d.segments.size(); ++i) out.segment_pos_.emplace(d.segments[i].id, i);
  for (std::size_t i = 0; i < d.blocks.size(); ++i) out.block_pos_.emplace(d.blocks[i].id, i);

  std::unordered_map<SegmentId, BlockId> owner;
  owner.reserve(d.segments.size());
  for (const auto& block : d.blocks) {
    for (SegmentId sid : block.member_ids) {
      auto [it, inserted] = owner.emplace(sid, block.id);
      if (!inserted) {
        throw Error(ErrorCode::IndexConflict,
                    entity_ref(sid) + " is a member of both " + entity_ref(it->second) + " and " + entity_ref(block.id),
                    entity_ref(sid));
      }
    }
  }
  for (const auto& seg : d.segments) {
    auto it = owner.find(seg.id);
    if (it == owner.end() || it->second != seg.block_id) {
      throw Error(ErrorCode::IndexConflict,
                  entity_ref(seg.id) + " references " + entity_ref(seg.block_id) + " but is not listed as its member",
                  entity_ref(seg.id));
    }
  }
  if (owner.size() != d.segments.size()) {
    throw Error(ErrorCode::IndexConflict, "block member lists reference unknown segments");
  }

  out.segments_by_spread_.resize(d.spreads.size());
  std::vector<const Segment*> ordered;
  ordered.reserve(d.segments.size());
  for (const auto& s : d.segments) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](const Segment* a, const Segment* b) { return reading_order_less(*a, *b); });
  for (const Segment* s : ordered) {
    if (auto it = out.spread_pos_.find(s->spread_id); it != out.spread_pos_.end()) {
      out.segments_by_spread_[it->second].push_back(s->id);
    }
  }

  out.spreads_by_block_.resize(d.blocks.size());
  for (std::size_t i = 0; i < d.blocks.size(); ++i) {
    const Block& block = d.blocks[i];
    out.blocks_by_key_[block.key].push_back(block.id);
    auto& spreads = out.spreads_by_block_[i];
    for (SegmentId sid : block.member_ids) spreads.push_back(d.segments[out.segment_pos_.at(sid)].spread_id);
    std::sort(spreads.begin(), spreads.end());
    spreads.erase(std::unique(spreads.begin(), spreads.end()), spreads.end());
  }
  return out;
}

const Segment* IndexedDataset::find_segment(SegmentId id) const {
  auto it = segment_pos_.find(id);
  return it == segment_pos_.end() ? nullptr : &data_.segments[it->second];
}

const Block* IndexedDataset::find_block(BlockId id) const {
  auto it = block_pos_.find(id);
  return it == block_pos_.end() ? nullptr : &data_.blocks[it->second];
}

const Spread* IndexedDataset::find_spread(SpreadId id) const {
  auto it = spread_pos_.find(id);
  return it == spread_pos_.end() ? nullptr : &data_.spreads[it->second];
}

const Segment& IndexedDataset::segment(SegmentId id) const {
  if (const Segment* s = find_segment(id)) return *s;
  throw Error(ErrorCode::UnknownId, "no such segment " + std::to_string(id.value), entity_ref(id));
}

const Block& IndexedDataset::block(BlockId id) const {
  if (const Block* b = find_block(id)) return *b;
  throw Error(ErrorCode::UnknownId, "no such block " + std::to_string(id.value), entity_ref(id));
}

const Spread& IndexedDataset::spread(SpreadId id) const {
  if (const Spread* s = find_spread(id)) return *s;
  throw Error(ErrorCode::UnknownSpread, "no such spread " + std::to_string(id.value), entity_ref(id));
}

std::span<const BlockId> IndexedDataset::blocks_of(const CharacterKey& key) const {
  auto it = blocks_by_key_.find(key);
  if (it == blocks_by_key_.end()) {
    throw Error(ErrorCode::UnknownCharacter, "no such character " + describe(key), "character:" + describe(key));
  }
  return it->second;
}

std::span<const SegmentId> IndexedDataset::segments_on(SpreadId id) const {
  auto it = spread_pos_.find(id);
  if (it == spread_pos_.end()) {
    throw Error(ErrorCode::UnknownSpread, "no such spread " + std::to_string(id.value), entity_ref(id));
  }
  return segments_by_spread_[it->second];
}

std::span<const SpreadId> IndexedDataset::spreads_of(BlockId id) const {
  auto it = block_pos_.find(id);
  if (it == block_pos_.end()) {
    throw Error(ErrorCode::UnknownId, "no such block " + std::to_string(id.value), entity_ref(id));
  }
  return spreads_by_block_[it->second];
}

Selection selection_union(const Selection& a, const Selection& b) {
  Selection out = a;
  out.characters.insert(b.characters.begin(), b.characters.end());
  out.whole_characters.insert(b.whole_characters.begin(), b.whole_characters.end());
  out.blocks.insert(b.blocks.begin(), b.blocks.end());
  out.segments.insert(b.segments.begin(), b.segments.end());
  return out;
}

Selection expand_selection(const Selection& sel, const IndexedDataset& ds) {
  Selection out = sel;

  // Validate every reference before mutating so errors leave no partial work.
  for (const auto& key : sel.characters) ds.blocks_of(key);
  for (const auto& key : sel.whole_characters) ds.blocks_of(key);
  for (BlockId b : sel.blocks) ds.block(b);
  for (SegmentId s : sel.segments) ds.segment(s);

  auto add_block_down = [&](const Block& block) {
    out.blocks.insert(block.id);
    out.characters.insert(block.key);
    out.segments.insert(block.member_ids.begin(), block.member_ids.end());
  };

  for (const auto& key : sel.whole_characters) {
    out.characters.insert(key);
    for (BlockId b : ds.blocks_of(key)) add_block_down(ds.block(b));
  }
  for (BlockId b : sel.blocks) add_block_down(ds.block(b));
  for (SegmentId s : sel.segments) add_block_down(ds.block_of(s));
  return out;
}

DatasetSummary summary(const IndexedDataset& ds) {
  DatasetSummary out;
  out.n_spreads = ds.spreads().size();
  out.n_segments = ds.segments().size();
  out.n_blocks = ds.blocks().size();
  out.n_characters = ds.characters().size();
  out.unit_height_px = ds.meta().unit_height_px;

  std::map<int, std::size_t> widths;
  for (const auto& s : ds.segments()) ++widths[s.bbox.w];
  std::size_t best = 0;
  for (const auto& [w, n] : widths) {  // ascending width, so ties keep the smaller
    if (n > best) {
      best = n;
      out.modal_segment_width_px = w;
    }
  }
  return out;
}

}  // namespace typecase
