#pragma once

// Core ontology of a movable-type book: spreads hold lines, lines hold
// segments (single impressions), segments are clustered into hypothesized
// physical blocks, and blocks sharing a character key are allographs.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "typecase/error.hpp"
#include "typecase/ids.hpp"

namespace typecase {

// Identity of a character sequence. A kana carries its mother kanji (jibo);
// the same Unicode text with a different jibo is a different character.
// An absent jibo is distinct from every present one, including "".
struct CharacterKey {
  std::string text;
  std::optional<std::string> jibo;

  auto operator<=>(const CharacterKey&) const = default;
  bool operator==(const CharacterKey&) const = default;
};

std::string describe(const CharacterKey& key);

struct LineLayout {
  int index = 0;
  int x_px = 0;

  bool operator==(const LineLayout&) const = default;
};

struct Spread {
  SpreadId id;
  std::optional<std::string> image;
  int width_px = 0;
  int height_px = 0;
  std::vector<LineLayout> lines;

  bool has_line(int index) const;
  bool operator==(const Spread&) const = default;
};

struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::int64_t area() const { return std::int64_t{w} * h; }
  bool operator==(const BBox&) const = default;
};

struct Segment {
  SegmentId id;
  SpreadId spread_id;
  int line_index = 0;
  BBox bbox;
  CharacterKey key;
  BlockId block_id;

  bool operator==(const Segment&) const = default;
};

struct Block {
  BlockId id;
  CharacterKey key;
  std::vector<SegmentId> member_ids;  // reading order

  bool operator==(const Block&) const = default;
};

struct DatasetMeta {
  std::string title;
  double unit_height_px = 0.0;
  int segment_width_px = 0;

  bool operator==(const DatasetMeta&) const = default;
};

// Plain value type. Canonical form keeps spreads, blocks and segments sorted
// by id and every block's member list in reading order, so structural
// equality is semantic equality.
struct Dataset {
  DatasetMeta meta;
  std::vector<Spread> spreads;
  std::vector<Block> blocks;
  std::vector<Segment> segments;

  bool operator==(const Dataset&) const = default;
};

// Strict weak ordering used for member lists: (spread, line, y, id).
bool reading_order_less(const Segment& a, const Segment& b);

// Sorts entity vectors by id and recomputes every block's member list from
// the segments' block references. Blocks left without members are dropped.
void canonicalize(Dataset& ds);

class IndexedDataset {
 public:
  IndexedDataset() = default;

  // Throws IndexConflict if block member lists overlap or disagree with the
  // segments' block references.
  static IndexedDataset build(Dataset ds);

  const Dataset& data() const { return data_; }
  const DatasetMeta& meta() const { return data_.meta; }
  std::span<const Spread> spreads() const { return data_.spreads; }
  std::span<const Block> blocks() const { return data_.blocks; }
  std::span<const Segment> segments() const { return data_.segments; }

  const Segment* find_segment(SegmentId id) const;
  const Block* find_block(BlockId id) const;
  const Spread* find_spread(SpreadId id) const;

  // Throwing lookups (UnknownId / UnknownSpread).
  const Segment& segment(SegmentId id) const;
  const Block& block(BlockId id) const;
  const Spread& spread(SpreadId id) const;

  const Block& block_of(SegmentId id) const { return block(segment(id).block_id); }
  std::span<const SegmentId> members(BlockId id) const { return block(id).member_ids; }

  bool has_character(const CharacterKey& key) const { return blocks_by_key_.contains(key); }
  // Blocks of a character in ascending id order; throws UnknownCharacter.
  std::span<const BlockId> blocks_of(const CharacterKey& key) const;
  const std::map<CharacterKey, std::vector<BlockId>>& characters() const { return blocks_by_key_; }

  // Segments printed on a spread, reading order.
  std::span<const SegmentId> segments_on(SpreadId id) const;
  // Distinct spreads where a block appears, ascending.
  std::span<const SpreadId> spreads_of(BlockId id) const;

 private:
  Dataset data_;
  std::unordered_map<SegmentId, std::size_t> segment_pos_;
  std::unordered_map<BlockId, std::size_t> block_pos_;
  std::unordered_map<SpreadId, std::size_t> spread_pos_;
  std::map<CharacterKey, std::vector<BlockId>> blocks_by_key_;
  std::vector<std::vector<SegmentId>> segments_by_spread_;  // parallel to spreads
  std::vector<std::vector<SpreadId>> spreads_by_block_;     // parallel to blocks
};

// Tri-level selection. `characters` holds every character key the selection
// touches; `whole_characters` are the keys selected at character level, which
// pull in all of their blocks. A key reached upward from a block or segment is
// listed in `characters` only and does not fan out to sibling blocks.
struct Selection {
  std::set<CharacterKey> characters;
  std::set<CharacterKey> whole_characters;
  std::set<BlockId> blocks;
  std::set<SegmentId> segments;

  bool empty() const {
    return characters.empty() && whole_characters.empty() && blocks.empty() && segments.empty();
  }
  bool operator==(const Selection&) const = default;
};

Selection selection_union(const Selection& a, const Selection& b);

// Least closed superset of `sel`. Throws UnknownId / UnknownCharacter for
// dangling references.
Selection expand_selection(const Selection& sel, const IndexedDataset& ds);

struct DatasetSummary {
  std::size_t n_spreads = 0;
  std::size_t n_segments = 0;
  std::size_t n_blocks = 0;
  std::size_t n_characters = 0;
  double unit_height_px = 0.0;
  int modal_segment_width_px = 0;

  bool operator==(const DatasetSummary&) const = default;
};

DatasetSummary summary(const IndexedDataset& ds);

}  // namespace typecase
