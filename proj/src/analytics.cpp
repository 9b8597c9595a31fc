#include "typecase/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "typecase/io.hpp"

namespace typecase {
namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::map<BlockId, std::size_t> reuse_counts(const IndexedDataset& ds) {
  std::map<BlockId, std::size_t> out;
  for (const auto& b : ds.blocks()) out.emplace(b.id, b.member_ids.size());
  return out;
}

ZipfFit zipf_fit(std::span<const std::size_t> counts) {
  if (counts.size() < 3) {
    throw Error(ErrorCode::InsufficientData, "zipf fit needs at least 3 counts, got " + std::to_string(counts.size()));
  }
  std::vector<std::size_t> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (sorted.back() == 0) throw Error(ErrorCode::InsufficientData, "zipf fit needs positive counts");

  const double n = static_cast<double>(sorted.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    mx += std::log(static_cast<double>(i + 1));
    my += std::log(static_cast<double>(sorted[i]));
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double dx = std::log(static_cast<double>(i + 1)) - mx;
    const double dy = std::log(static_cast<double>(sorted[i])) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  ZipfFit fit;
  const double slope = sxy / sxx;
  fit.exponent = slope == 0.0 ? 0.0 : -slope;
  fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  return fit;
}

std::vector<DuplicateHit> same_spread_duplicates(const IndexedDataset& ds) {
  std::vector<DuplicateHit> out;
  for (const auto& spread : ds.spreads()) {
    std::map<BlockId, std::size_t> per_block;
    for (SegmentId sid : ds.segments_on(spread.id)) ++per_block[ds.segment(sid).block_id];
    for (const auto& [block, n] : per_block) {
      if (n >= 2) out.push_back({block, spread.id, n});
    }
  }
  return out;
}

std::vector<Anomaly> bbox_anomalies(const IndexedDataset& ds, const AnomalyOptions& options) {
  const auto segments = ds.segments();
  if (segments.size() < options.min_segments) return {};

  std::vector<double> areas;
  areas.reserve(segments.size());
  for (const auto& s : segments) areas.push_back(static_cast<double>(s.bbox.area()));
  const double med = median(areas);
  std::vector<double> dev;
  dev.reserve(areas.size());
  for (double a : areas) dev.push_back(std::abs(a - med));
  double scale = 1.4826 * median(dev);
  if (scale == 0.0) {
    const double mean_ad = std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(dev.size());
    scale = 1.2533 * mean_ad;
  }

  std::vector<Anomaly> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    Anomaly a;
    a.segment = segments[i].id;
    a.score = scale > 0 ? (areas[i] - med) / scale : 0.0;
    a.area_outlier = std::abs(a.score) > options.k;
    a.height_off_unit = height_off_unit(segments[i].bbox.h, ds.meta().unit_height_px, options.height_tolerance);
    if (a.area_outlier || a.height_off_unit) out.push_back(a);
  }
  std::sort(out.begin(), out.end(), [](const Anomaly& a, const Anomaly& b) {
    const double sa = std::abs(a.score), sb = std::abs(b.score);
    return sa != sb ? sa > sb : a.segment < b.segment;
  });
  return out;
}

CoAppearanceMatrix co_appearance(const IndexedDataset& ds, const BlockFilter& filter) {
  CoAppearanceMatrix m;
  std::unordered_map<BlockId, std::size_t> index;
  for (const auto& b : ds.blocks()) {
    if (filter && !filter(b)) continue;
    index.emplace(b.id, m.block_ids.size());
    m.block_ids.push_back(b.id);
  }
  const std::size_t n = m.block_ids.size();
  m.values.assign(n * n, 0);

  for (const auto& spread : ds.spreads()) {
    std::vector<std::size_t> present;
    for (SegmentId sid : ds.segments_on(spread.id)) {
      if (auto it = index.find(ds.segment(sid).block_id); it != index.end()) present.push_back(it->second);
    }
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (std::size_t a = 0; a < present.size(); ++a) {
      ++m.at(present[a], present[a]);
      for (std::size_t b = a + 1; b < present.size(); ++b) {
        ++m.at(present[a], present[b]);
        ++m.at(present[b], present[a]);
      }
    }
  }
  return m;
}

SpreadGraph spread_graph(const IndexedDataset& ds, std::int64_t min_shared) {
  SpreadGraph g;
  g.n_spreads = ds.spreads().size();
  std::map<std::pair<SpreadId, SpreadId>, std::int64_t> weights;
  for (const auto& b : ds.blocks()) {
    const auto spreads = ds.spreads_of(b.id);
    for (std::size_t i = 0; i < spreads.size(); ++i) {
      for (std::size_t j = i + 1; j < spreads.size(); ++j) ++weights[{spreads[i], spreads[j]}];
    }
  }
  for (const auto& [uv, w] : weights) {
    if (w >= min_shared) g.edges.push_back({uv.first, uv.second, w});
  }
  return g;
}

double graph_density(const SpreadGraph& g) {
  if (g.n_spreads < 2) throw Error(ErrorCode::TooFewNodes, "density needs at least two spreads");
  const double n = static_cast<double>(g.n_spreads);
  return static_cast<double>(g.edges.size()) / (n * (n - 1) / 2.0);
}

double partition_modularity(const SpreadGraph& g, std::span<const int> groups) {
  if (groups.size() != g.n_spreads) {
    throw Error(ErrorCode::BadRequest, "grouping covers " + std::to_string(groups.size()) + " of " +
                                           std::to_string(g.n_spreads) + " spreads");
  }
  double total = 0;
  std::vector<double> degree(g.n_spreads, 0.0);
  std::map<int, double> inside;  // sum of A_ij over ordered pairs within a group
  for (const auto& e : g.edges) {
    const auto u = static_cast<std::size_t>(e.u.value), v = static_cast<std::size_t>(e.v.value);
    const double w = static_cast<double>(e.weight);
    total += w;
    degree[u] += w;
    degree[v] += w;
    if (groups[u] == groups[v]) inside[groups[u]] += 2 * w;
  }
  if (total == 0) throw Error(ErrorCode::EmptyGraph, "modularity is undefined on a graph without edges");

  std::map<int, double> group_degree;
  for (std::size_t i = 0; i < g.n_spreads; ++i) group_degree[groups[i]] += degree[i];
  const double two_m = 2 * total;
  double q = 0;
  for (const auto& [group, deg] : group_degree) {
    q += inside[group] / two_m - (deg / two_m) * (deg / two_m);
  }
  return q;
}

Timeline character_timeline(const IndexedDataset& ds, const CharacterKey& key) {
  Timeline t;
  t.key = key;
  const std::size_t n = ds.spreads().size();
  for (BlockId b : ds.blocks_of(key)) {
    TimelineRow row{b, std::vector<std::int64_t>(n, 0)};
    for (SegmentId sid : ds.members(b)) ++row.counts[static_cast<std::size_t>(ds.segment(sid).spread_id.value)];
    t.rows.push_back(std::move(row));
  }
  auto reuse = [&](const TimelineRow& r) { return ds.block(r.block).member_ids.size(); };
  auto first = [&](const TimelineRow& r) { return ds.spreads_of(r.block).front(); };
  std::sort(t.rows.begin(), t.rows.end(), [&](const TimelineRow& a, const TimelineRow& b) {
    if (reuse(a) != reuse(b)) return reuse(a) > reuse(b);
    if (first(a) != first(b)) return first(a) < first(b);
    return a.block < b.block;
  });
  return t;
}

std::vector<LineRhythm> line_rhythm(const IndexedDataset& ds, SpreadId spread_id) {
  const Spread& spread = ds.spread(spread_id);
  const double unit = ds.meta().unit_height_px;
  if (!(unit > 0)) throw Error(ErrorCode::BadRequest, "unit height must be positive", "meta");

  std::vector<LineRhythm> out;
  std::map<int, std::size_t> pos;
  for (const auto& line : spread.lines) {
    pos.emplace(line.index, out.size());
    out.push_back({line.index, {}});
  }
  std::vector<const Segment*> segs;
  for (SegmentId sid : ds.segments_on(spread_id)) segs.push_back(&ds.segment(sid));
  std::stable_sort(segs.begin(), segs.end(), [](const Segment* a, const Segment* b) {
    return a->bbox.y != b->bbox.y ? a->bbox.y < b->bbox.y : a->id < b->id;
  });
  for (const Segment* s : segs) {
    auto it = pos.find(s->line_index);
    if (it == pos.end()) continue;
    const int units = static_cast<int>(std::lround(s->bbox.h / unit));
    out[it->second].units.push_back(std::max(units, 1));
  }
  return out;
}

}  // namespace typecase
