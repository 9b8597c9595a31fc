#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "typecase/analytics.hpp"
#include "typecase/model.hpp"
#include "typecase/raster.hpp"

namespace typecase {

struct UsageDistribution {
  enum class Kind { Constant, Zipf };
  Kind kind = Kind::Constant;
  double exponent = 1.0;  // Zipf only: weight of rank r is r^-exponent
};

struct PartitionConfig {
  std::int64_t boundary_spread = 0;    // first spread of the second volume
  double pool_overlap_fraction = 0.0;  // share of blocks available to both volumes
};

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_characters = 10;
  int blocks_per_character = 2;
  UsageDistribution usage;
  int n_spreads = 4;
  int lines_per_spread = 2;
  int segments_per_line = 3;
  double unit_height_px = 100.0;
  int segment_width_px = 80;
  std::optional<PartitionConfig> partition;
  int planted_duplicates = 0;
  int planted_oversize = 0;
  bool render_images = false;
  double noise_density = 0.02;  // salt-and-pepper share per impression
  double height_jitter = 0.03;  // max per-impression height change, in units
  int twin_stamp_pairs = 0;     // block pairs rendered from one identical stamp
  std::string title = "synthetic book";
};

enum class Pool { Shared = 0, First = 1, Second = 2 };

struct TrueBlock {
  BlockId id;
  CharacterKey key;
  Pool pool = Pool::Shared;
  int units = 1;           // nominal height in unit lengths
  std::size_t usage = 0;   // impressions in the emitted book
  std::uint64_t stamp = 0; // glyph key used for rendering
};

struct GroundTruth {
  std::vector<TrueBlock> blocks;                       // by id
  std::vector<std::vector<BlockId>> spread_usage;      // per spread, slot order
  std::vector<DuplicateHit> duplicates;                // planted, sorted (spread, block)
  std::vector<SegmentId> oversize;                     // planted, ascending
  std::vector<std::pair<BlockId, BlockId>> twin_pairs; // identical stamps
};

struct SynthBook {
  Dataset dataset;
  GroundTruth truth;
  std::vector<GrayRaster> pages;  // per spread when render_images is set
};

// Deterministic for a given config. InfeasibleConfig when the layout cannot
// hold the block inventory or a pool is smaller than one spread's slots.
SynthBook generate(const SynthConfig& cfg);

std::string image_name(SpreadId spread);

// Procedural glyph keyed by `stamp`: dark strokes on a light field.
GrayRaster render_stamp(std::uint64_t stamp, int width, int height);

// {"ground_truth": {...}} in canonical object notation.
std::string export_ground_truth(const GroundTruth& truth);

}  // namespace typecase
