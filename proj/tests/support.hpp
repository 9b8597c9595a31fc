#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>

#include "typecase/curation.hpp"
#include "typecase/io.hpp"
#include "typecase/model.hpp"

namespace typecase::testing {

inline CharacterKey kanji_key(std::string text) { return {std::move(text), std::nullopt}; }
inline CharacterKey kana_key(std::string text, std::string jibo) { return {std::move(text), std::move(jibo)}; }

// Small hand-built books. Segments stack top-down per (spread, line) so the
// insertion order within a line is the reading order.
class ToyBook {
 public:
  explicit ToyBook(int n_spreads, int lines_per_spread = 2, double unit = 100.0, int width = 80) {
    ds_.meta = {"toy", unit, width};
    for (int s = 0; s < n_spreads; ++s) {
      Spread sp{SpreadId{s}, std::nullopt, 400, 1200, {}};
      for (int l = 0; l < lines_per_spread; ++l) sp.lines.push_back({l, 300 - 100 * l});
      ds_.spreads.push_back(std::move(sp));
    }
  }

  BlockId block(const CharacterKey& key) {
    BlockId id{next_block_++};
    ds_.blocks.push_back({id, key, {}});
    return id;
  }

  BlockId block_with_id(std::int64_t id, const CharacterKey& key) {
    ds_.blocks.push_back({BlockId{id}, key, {}});
    next_block_ = std::max(next_block_, id + 1);
    return BlockId{id};
  }

  SegmentId segment(int spread, BlockId block, int line = 0, int h = 100, int w = 0) {
    const CharacterKey key = key_of(block);
    int& cursor = cursor_[{spread, line}];
    SegmentId id{next_segment_++};
    Segment seg{id, SpreadId{spread}, line, {300 - 100 * line, 10 + cursor, w > 0 ? w : ds_.meta.segment_width_px, h}, key,
                block};
    cursor += h + 5;
    ds_.segments.push_back(std::move(seg));
    return id;
  }

  Dataset build() const {
    Dataset out = ds_;
    canonicalize(out);
    return out;
  }

  IndexedDataset indexed() const { return IndexedDataset::build(build()); }

 private:
  CharacterKey key_of(BlockId id) const {
    for (const auto& b : ds_.blocks) {
      if (b.id == id) return b.key;
    }
    return kanji_key("?");
  }

  Dataset ds_;
  std::int64_t next_block_ = 0;
  std::int64_t next_segment_ = 0;
  std::map<std::pair<int, int>, int> cursor_;
};

// Structural checks every curated dataset must pass.
inline std::string invariant_violation(const Dataset& ds) {
  std::set<SegmentId> seen;
  std::map<SegmentId, const Segment*> by_id;
  for (const auto& s : ds.segments) by_id[s.id] = &s;
  for (const auto& b : ds.blocks) {
    if (b.member_ids.empty()) return "empty " + entity_ref(b.id);
    for (std::size_t i = 0; i < b.member_ids.size(); ++i) {
      const SegmentId sid = b.member_ids[i];
      if (!seen.insert(sid).second) return entity_ref(sid) + " in two blocks";
      auto it = by_id.find(sid);
      if (it == by_id.end()) return "dangling " + entity_ref(sid);
      if (it->second->block_id != b.id) return entity_ref(sid) + " disagrees with its block";
      if (it->second->key != b.key) return entity_ref(sid) + " key mismatch";
      if (i > 0 && !reading_order_less(*by_id[b.member_ids[i - 1]], *it->second)) return entity_ref(b.id) + " order";
    }
  }
  if (seen.size() != ds.segments.size()) return "segments outside every block";
  const auto report = validate(ds);
  if (!report.ok()) return format_report(report);
  return {};
}

}  // namespace typecase::testing
