#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "typecase/model.hpp"

namespace typecase {

// block id -> number of member segments
std::map<BlockId, std::size_t> reuse_counts(const IndexedDataset& ds);

struct ZipfFit {
  double exponent = 0.0;
  double r2 = 0.0;
};

// Rank-frequency fit: counts sorted descending, OLS of ln(count) on ln(rank)
// with ranks from 1. exponent = -slope. A flat distribution reports (0, 0).
// Needs at least three counts (InsufficientData); counts must be positive.
ZipfFit zipf_fit(std::span<const std::size_t> counts);

struct DuplicateHit {
  BlockId block;
  SpreadId spread;
  std::size_t count = 0;
  bool operator==(const DuplicateHit&) const = default;
};

// (block, spread) pairs where one block is printed two or more times on the
// same spread, sorted by (spread, block).
std::vector<DuplicateHit> same_spread_duplicates(const IndexedDataset& ds);

struct Anomaly {
  SegmentId segment;
  double score = 0.0;           // robust z-score of the bbox area
  bool area_outlier = false;    // |score| > k
  bool height_off_unit = false; // would carry H_NOT_UNIT_MULTIPLE
};

struct AnomalyOptions {
  double k = 3.5;
  double height_tolerance = 0.15;
  std::size_t min_segments = 10;
};

// Flags segments whose area has a robust z-score above k (median / MAD with
// the 1.4826 consistency constant; when MAD is zero the mean absolute
// deviation scaled by 1.2533 stands in) plus every segment whose height is
// off the unit grid. Sorted by descending |score|, then id.
std::vector<Anomaly> bbox_anomalies(const IndexedDataset& ds, const AnomalyOptions& options = {});

struct CoAppearanceMatrix {
  std::vector<BlockId> block_ids;     // ascending
  std::vector<std::int64_t> values;   // row-major n x n

  std::size_t size() const { return block_ids.size(); }
  std::int64_t at(std::size_t i, std::size_t j) const { return values[i * block_ids.size() + j]; }
  std::int64_t& at(std::size_t i, std::size_t j) { return values[i * block_ids.size() + j]; }
};

using BlockFilter = std::function<bool(const Block&)>;

// m[i][j] = spreads containing both blocks, m[i][i] = spreads containing i.
CoAppearanceMatrix co_appearance(const IndexedDataset& ds, const BlockFilter& filter = {});

struct SpreadEdge {
  SpreadId u;
  SpreadId v;
  std::int64_t weight = 0;
  bool operator==(const SpreadEdge&) const = default;
};

struct SpreadGraph {
  std::size_t n_spreads = 0;  // nodes are spread ids 0..n-1
  std::vector<SpreadEdge> edges;  // u < v, sorted
};

// Edge (u, v) iff the spreads share at least min_shared distinct blocks.
SpreadGraph spread_graph(const IndexedDataset& ds, std::int64_t min_shared = 1);

double graph_density(const SpreadGraph& g);

// Weighted Newman modularity of a grouping (groups[i] is spread i's group).
double partition_modularity(const SpreadGraph& g, std::span<const int> groups);

struct EmbeddingOptions {
  std::size_t dims = 2;
  double tolerance = 1e-9;
  int max_iterations = 1000;
};

struct Embedding {
  std::vector<BlockId> block_ids;
  std::vector<std::vector<double>> coords;  // per block, `dims` values
  std::vector<double> eigenvalues;          // descending
  std::vector<int> iterations;              // per axis
};

// PCA of the L2-normalized, column-centered co-appearance rows. Axes come
// from power iteration with deflation starting at e1; each axis is signed so
// its first non-zero loading is positive.
Embedding block_embedding(const CoAppearanceMatrix& m, const EmbeddingOptions& options = {});

struct TimelineRow {
  BlockId block;
  std::vector<std::int64_t> counts;  // per spread 0..n-1
};

struct Timeline {
  CharacterKey key;
  std::vector<TimelineRow> rows;  // descending reuse, then earliest first spread
};

Timeline character_timeline(const IndexedDataset& ds, const CharacterKey& key);

struct LineRhythm {
  int line_index = 0;
  std::vector<int> units;  // top to bottom
};

std::vector<LineRhythm> line_rhythm(const IndexedDataset& ds, SpreadId spread);

}  // namespace typecase
