#include <doctest.h>

#include <atomic>
#include <thread>

#include "support.hpp"
#include "typecase/rng.hpp"
#include "typecase/synth.hpp"

using namespace typecase;
using namespace typecase::testing;

namespace {

constexpr const char* kTs = "2024-05-01T12:00:00Z";

// b1{s1,s3}, b2{s2} on one spread, plus an allograph block b3{s4}.
struct Toy {
  ToyBook book{2};
  BlockId b1, b2, b3;
  SegmentId s1, s2, s3, s4;

  Toy() {
    b1 = book.block(kana_key("の", "乃"));
    b2 = book.block(kana_key("の", "乃"));
    b3 = book.block(kana_key("の", "能"));
    s1 = book.segment(0, b1);
    s2 = book.segment(0, b2);
    s3 = book.segment(1, b1);
    s4 = book.segment(1, b3);
  }

  CurationState state() const { return make_state(book.build()); }
};

const Block& block(const CurationState& s, BlockId id) {
  for (const auto& b : s.dataset.blocks) {
    if (b.id == id) return b;
  }
  throw std::runtime_error("no block");
}

bool has_block(const CurationState& s, BlockId id) {
  return std::any_of(s.dataset.blocks.begin(), s.dataset.blocks.end(), [&](const Block& b) { return b.id == id; });
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::BadRequest;
}

}  // namespace

TEST_CASE("moving a segment between blocks of one character") {
  Toy t;
  const auto r = move_segment(t.state(), t.s3, t.b2, kTs);
  CHECK(r.state.revision() == 1);
  CHECK(block(r.state, t.b1).member_ids == std::vector{t.s1});
  CHECK(block(r.state, t.b2).member_ids == std::vector{t.s2, t.s3});
  CHECK(r.changes == std::vector<BlockChange>{{t.b1, false, false}, {t.b2, false, false}});
  CHECK(invariant_violation(r.state.dataset).empty());
  CHECK(r.state.log.entries[0].op == EditOp{MoveSegment{t.s3, t.b1, t.b2}});
  CHECK(r.state.log.entries[0].timestamp == kTs);
}

TEST_CASE("moving the last member deletes the source block") {
  Toy t;
  const auto r = move_segment(t.state(), t.s2, t.b1, kTs);
  CHECK_FALSE(has_block(r.state, t.b2));
  CHECK(block(r.state, t.b1).member_ids == std::vector{t.s1, t.s2, t.s3});
  CHECK(r.changes == std::vector<BlockChange>{{t.b2, false, true}, {t.b1, false, false}});
  const auto back = undo(r.state);
  CHECK(back.state == t.state());
}

TEST_CASE("moving a segment to its own block is a silent no-op") {
  Toy t;
  const auto s = t.state();
  const auto r = move_segment(s, t.s1, t.b1, kTs);
  CHECK(r.state == s);
  CHECK(r.changes.empty());
  CHECK(r.state.revision() == 0);
}

TEST_CASE("edits refuse to cross character boundaries") {
  Toy t;
  const auto s = t.state();
  CHECK(code_of([&] { move_segment(s, t.s1, t.b3, kTs); }) == ErrorCode::KeyMismatch);
  CHECK(code_of([&] { merge_blocks(s, t.b3, t.b1, kTs); }) == ErrorCode::KeyMismatch);
  CHECK(code_of([&] { merge_blocks(s, t.b1, t.b1, kTs); }) == ErrorCode::SameBlock);
  CHECK(code_of([&] { move_segment(s, SegmentId{40}, t.b1, kTs); }) == ErrorCode::UnknownId);
  CHECK(code_of([&] { move_segment(s, t.s1, BlockId{40}, kTs); }) == ErrorCode::UnknownId);
  CHECK(code_of([&] { merge_blocks(s, BlockId{40}, t.b1, kTs); }) == ErrorCode::UnknownId);
  CHECK(code_of([&] { detach_segment(s, SegmentId{40}, kTs); }) == ErrorCode::UnknownId);
}

TEST_CASE("merging appends in reading order and undo restores the source") {
  Toy t;
  const auto pristine = t.state();
  const auto r = merge_blocks(pristine, t.b2, t.b1, kTs);
  CHECK(r.state.dataset.blocks.size() == 2);
  CHECK(block(r.state, t.b1).member_ids == std::vector{t.s1, t.s2, t.s3});
  CHECK(r.state.log.entries[0].op == EditOp{MergeBlocks{t.b2, t.b1, {t.s2}}});
  CHECK(r.changes == std::vector<BlockChange>{{t.b2, false, true}, {t.b1, false, false}});
  const auto back = undo(r.state);
  CHECK(back.state == pristine);
  CHECK(block(back.state, t.b2).member_ids == std::vector{t.s2});
}

TEST_CASE("merging two single-use blocks yields a reuse count of two") {
  ToyBook book(2);
  const auto a = book.block(kanji_key("事"));
  const auto b = book.block(kanji_key("事"));
  book.segment(0, a);
  book.segment(1, b);
  const auto r = merge_blocks(make_state(book.build()), a, b, kTs);
  REQUIRE(r.state.dataset.blocks.size() == 1);
  CHECK(r.state.dataset.blocks[0].member_ids.size() == 2);
}

TEST_CASE("detaching gives the segment a fresh block") {
  Toy t;
  const auto s = t.state();
  CHECK(s.next_block_id == 3);
  const auto r = detach_segment(s, t.s3, kTs);
  const BlockId fresh{3};
  CHECK(block(r.state, t.b1).member_ids == std::vector{t.s1});
  CHECK(block(r.state, fresh).member_ids == std::vector{t.s3});
  CHECK(block(r.state, fresh).key == block(s, t.b1).key);
  CHECK(r.state.next_block_id == 4);
  CHECK(r.changes == std::vector<BlockChange>{{t.b1, false, false}, {fresh, true, false}});
  CHECK(code_of([&] { detach_segment(s, t.s2, kTs); }) == ErrorCode::SingletonBlock);

  // merging back restores the original partition under a surviving id
  const auto merged = merge_blocks(r.state, fresh, t.b1, kTs);
  CHECK(merged.state.dataset == s.dataset);
}

TEST_CASE("block ids are never reused after undo") {
  Toy t;
  auto s = detach_segment(t.state(), t.s3, kTs).state;
  s = undo(s).state;
  CHECK(s.dataset == t.state().dataset);
  const auto again = detach_segment(s, t.s3, kTs);
  CHECK(has_block(again.state, BlockId{4}));
  CHECK_FALSE(has_block(again.state, BlockId{3}));
}

TEST_CASE("undo with an empty log") {
  Toy t;
  CHECK(code_of([&] { undo(t.state()); }) == ErrorCode::EmptyLog);
}

TEST_CASE("failed edits leave no trace") {
  Toy t;
  Dataset ds = t.book.build();
  const Dataset before = ds;
  CHECK_THROWS(apply_edit(ds, MoveSegment{t.s1, t.b2, t.b1}));
  CHECK_THROWS(apply_edit(ds, MergeBlocks{t.b2, t.b1, {t.s3}}));
  CHECK_THROWS(apply_edit(ds, DetachSegment{t.s1, t.b1, t.b2}));
  CHECK_THROWS(revert_edit(ds, MoveSegment{t.s2, t.b1, t.b3}));
  CHECK(ds == before);
}

TEST_CASE("make_state resumes an exported log") {
  Toy t;
  auto s = t.state();
  s = merge_blocks(s, t.b2, t.b1, kTs).state;
  s = detach_segment(s, t.s1, kTs).state;
  const auto parsed = parse_dataset(export_dataset(s.dataset, s.log));
  const auto resumed = make_state(parsed.dataset, parsed.log);
  CHECK(resumed == s);
  CHECK(replay(t.book.build(), s.log) == s.dataset);
  CHECK(rewind(s.dataset, s.log) == t.book.build());

  EditLog gap = s.log;
  gap.entries[1].revision = 5;
  CHECK(code_of([&] { make_state(s.dataset, gap); }) == ErrorCode::IntegrityError);
}

TEST_CASE("timestamps are ISO-8601 UTC") {
  const auto ts = utc_timestamp();
  REQUIRE(ts.size() == 20);
  CHECK(ts[4] == '-');
  CHECK(ts[10] == 'T');
  CHECK(ts.back() == 'Z');
}

namespace {

// One random valid edit, or nothing if the draw was a no-op.
std::optional<EditResult> random_edit(Rng& rng, const CurationState& s) {
  const auto& ds = s.dataset;
  switch (rng.below(3)) {
    case 0: {
      const Segment& seg = ds.segments[rng.below(ds.segments.size())];
      std::vector<BlockId> targets;
      for (const auto& b : ds.blocks) {
        if (b.key == seg.key) targets.push_back(b.id);
      }
      return move_segment(s, seg.id, targets[rng.below(targets.size())], kTs);
    }
    case 1: {
      const Block& src = ds.blocks[rng.below(ds.blocks.size())];
      std::vector<BlockId> targets;
      for (const auto& b : ds.blocks) {
        if (b.key == src.key && b.id != src.id) targets.push_back(b.id);
      }
      if (targets.empty()) return std::nullopt;
      return merge_blocks(s, src.id, targets[rng.below(targets.size())], kTs);
    }
    default: {
      const Segment& seg = ds.segments[rng.below(ds.segments.size())];
      for (const auto& b : ds.blocks) {
        if (b.id == seg.block_id && b.member_ids.size() < 2) return std::nullopt;
      }
      return detach_segment(s, seg.id, kTs);
    }
  }
}

}  // namespace

TEST_CASE("random edit sequences keep every invariant and unwind exactly") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    SynthConfig cfg;
    cfg.seed = 500 + static_cast<std::uint64_t>(trial);
    cfg.n_characters = 5;
    cfg.blocks_per_character = 3;
    cfg.n_spreads = 5;
    const auto book = generate(cfg);
    const auto pristine = make_state(book.dataset);
    const std::string pristine_export = export_dataset(pristine.dataset, pristine.log);
    auto s = pristine;
    for (int step = 0; step < 25; ++step) {
      if (!s.log.entries.empty() && rng.chance(0.25)) {
        const auto before_undo = s;
        s = undo(s).state;
        CHECK(s.revision() == before_undo.revision() - 1);
      } else if (auto r = random_edit(rng, s)) {
        if (r->changes.empty()) {
          CHECK(r->state == s);
          continue;
        }
        const auto before = s;
        s = r->state;
        const auto reverted = undo(s).state;
        CHECK(reverted.dataset == before.dataset);
        CHECK(reverted.log == before.log);
      }
      REQUIRE(invariant_violation(s.dataset).empty());
      CHECK(s.dataset.segments.size() == pristine.dataset.segments.size());
    }
    CHECK(replay(pristine.dataset, s.log) == s.dataset);
    while (!s.log.entries.empty()) s = undo(s).state;
    CHECK(export_dataset(s.dataset, s.log) == pristine_export);
  }
}

TEST_CASE("curator enforces expected revisions and publishes snapshots") {
  Toy t;
  int tick = 0;
  Curator curator(t.state(), [&] { return "2024-01-01T00:00:0" + std::to_string(tick++) + "Z"; });
  const auto first = curator.snapshot();
  CHECK(first->revision() == 0);

  const auto out = curator.move_segment(t.s3, t.b2, 0);
  CHECK(out.snapshot->revision() == 1);
  CHECK(out.snapshot->serial == first->serial + 1);
  CHECK(out.affected_characters == std::vector{kana_key("の", "乃")});
  CHECK(curator.snapshot() == out.snapshot);
  CHECK(first->revision() == 0);  // old snapshots stay intact

  CHECK(code_of([&] { curator.merge_blocks(t.b1, t.b2, 0); }) == ErrorCode::RevisionConflict);
  CHECK(curator.snapshot()->revision() == 1);

  const auto noop = curator.move_segment(t.s3, t.b2, 1);
  CHECK(noop.changes.empty());
  CHECK(noop.snapshot == out.snapshot);

  curator.undo(1);
  CHECK(curator.snapshot()->revision() == 0);
  CHECK(curator.snapshot()->state.dataset == t.state().dataset);
  CHECK(code_of([&] { curator.undo(); }) == ErrorCode::EmptyLog);
}

TEST_CASE("readers see whole snapshots while a writer edits") {
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.n_characters = 6;
  cfg.blocks_per_character = 3;
  cfg.n_spreads = 6;
  Curator curator(make_state(generate(cfg).dataset));
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&] {
      while (!done) {
        const auto snap = curator.snapshot();
        if (!invariant_violation(snap->state.dataset).empty()) ++bad;
        if (snap->indexed.data() != snap->state.dataset) ++bad;
      }
    });
  }
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto snap = curator.snapshot();
    if (snap->revision() > 0 && rng.chance(0.3)) {
      curator.undo(snap->revision());
    } else if (auto r = random_edit(rng, snap->state)) {
      if (r->changes.empty()) continue;
      const auto& op = r->state.log.entries.back().op;
      if (const auto* m = std::get_if<MoveSegment>(&op)) curator.move_segment(m->segment, m->to, snap->revision());
      if (const auto* m = std::get_if<MergeBlocks>(&op)) curator.merge_blocks(m->src, m->dst, snap->revision());
      if (const auto* m = std::get_if<DetachSegment>(&op)) curator.detach_segment(m->segment, snap->revision());
    }
  }
  done = true;
  for (auto& th : readers) th.join();
  CHECK(bad == 0);
}
