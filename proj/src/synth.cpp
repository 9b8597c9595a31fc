#include "typecase/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <json.hpp>

#include "typecase/rng.hpp"

namespace typecase {
namespace {

constexpr std::uint8_t kPaper = 205;
constexpr std::uint8_t kInk = 25;

[[noreturn]] void infeasible(const std::string& why) { throw Error(ErrorCode::InfeasibleConfig, why, "config"); }

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::string kanji(int i) {
  std::string s;
  append_utf8(s, static_cast<char32_t>(0x4E00 + (i * 37) % 20000));
  return s;
}

std::string kana(int i) {
  std::string s;
  append_utf8(s, static_cast<char32_t>(0x3042 + i % 82));
  return s;
}

// Every third character is a bare kanji; the rest are kana (single or a
// two-kana chain) carrying a unique jibo. Kana texts repeat in pairs, so the
// inventory always contains allographs that differ only by jibo.
CharacterKey character_key(int c) {
  switch (c % 3) {
    case 0: return {kanji(c), std::nullopt};
    case 1: return {kana(c / 6), kanji(c)};
    default: return {kana(c / 6) + kana(c / 6 + 41), kanji(c)};
  }
}

int draw_units(Rng& rng) {
  const double u = rng.uniform();
  return u < 0.30 ? 1 : (u < 0.75 ? 2 : 3);
}

bool allowed(Pool pool, std::int64_t spread, const std::optional<PartitionConfig>& partition) {
  if (!partition || pool == Pool::Shared) return true;
  return (pool == Pool::First) == (spread < partition->boundary_spread);
}

void check_config(const SynthConfig& cfg) {
  if (cfg.n_characters <= 0 || cfg.blocks_per_character <= 0 || cfg.n_spreads <= 0 || cfg.lines_per_spread <= 0 ||
      cfg.segments_per_line <= 0 || cfg.segment_width_px <= 0 || !(cfg.unit_height_px > 0)) {
    infeasible("counts and sizes must be positive");
  }
  if (cfg.planted_duplicates < 0 || cfg.planted_oversize < 0 || cfg.twin_stamp_pairs < 0) {
    infeasible("planted counts must be non-negative");
  }
  if (cfg.noise_density < 0 || cfg.noise_density > 1) infeasible("noise density must lie in [0,1]");
  if (cfg.height_jitter < 0 || cfg.height_jitter > 0.1) infeasible("height jitter must lie in [0,0.1] units");
  if (cfg.usage.kind == UsageDistribution::Kind::Zipf && !(cfg.usage.exponent >= 0)) {
    infeasible("zipf exponent must be non-negative");
  }
  if (cfg.partition) {
    const auto& p = *cfg.partition;
    if (p.boundary_spread <= 0 || p.boundary_spread >= cfg.n_spreads) {
      infeasible("partition boundary must split the spreads into two non-empty volumes");
    }
    if (p.pool_overlap_fraction < 0 || p.pool_overlap_fraction > 1) infeasible("pool overlap must lie in [0,1]");
  }
  if (cfg.twin_stamp_pairs > 0 && (cfg.blocks_per_character < 2 || cfg.twin_stamp_pairs > cfg.n_characters)) {
    infeasible("twin stamps need two blocks per character and at most one pair per character");
  }
}

void draw_stroke(GrayRaster& img, double x0, double y0, double x1, double y1, int thickness) {
  const int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int cx = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int cy = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int y = cy - thickness / 2; y < cy - thickness / 2 + thickness; ++y) {
      for (int x = cx - thickness / 2; x < cx - thickness / 2 + thickness; ++x) {
        if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = kInk;
      }
    }
  }
}

}  // namespace

std::string image_name(SpreadId spread) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spread_%04lld.png", static_cast<long long>(spread.value));
  return buf;
}

GrayRaster render_stamp(std::uint64_t stamp, int width, int height) {
  GrayRaster img = GrayRaster::filled(width, height, kPaper);
  Rng rng(stamp * 0x2545F4914F6CDD1DULL + 0x5EED);
  const int strokes = static_cast<int>(rng.between(3, 6));
  const int thin = std::max(2, width / 16);
  const int thick = std::max(thin + 1, width / 8);
  auto px = [&] { return width / 8.0 + rng.uniform() * width * 0.75; };
  auto py = [&] { return height / 8.0 + rng.uniform() * height * 0.75; };
  for (int s = 0; s < strokes; ++s) {
    const double x0 = px(), y0 = py(), x1 = px(), y1 = py();
    draw_stroke(img, x0, y0, x1, y1, static_cast<int>(rng.between(thin, thick)));
  }
  return img;
}

SynthBook generate(const SynthConfig& cfg) {
  check_config(cfg);
  Rng rng(cfg.seed);
  SynthBook book;
  GroundTruth& truth = book.truth;

  const int n_blocks = cfg.n_characters * cfg.blocks_per_character;
  const std::size_t slots = static_cast<std::size_t>(cfg.lines_per_spread) * cfg.segments_per_line;
  const auto n_spreads = static_cast<std::size_t>(cfg.n_spreads);

  for (int b = 0; b < n_blocks; ++b) {
    TrueBlock tb;
    tb.id = BlockId{b};
    tb.key = character_key(b / cfg.blocks_per_character);
    tb.units = draw_units(rng);
    tb.stamp = static_cast<std::uint64_t>(b);
    truth.blocks.push_back(std::move(tb));
  }

  if (cfg.partition) {
    std::vector<int> order(static_cast<std::size_t>(n_blocks));
    for (int b = 0; b < n_blocks; ++b) order[static_cast<std::size_t>(b)] = b;
    rng.shuffle(order);
    const auto n_shared = static_cast<std::size_t>(std::lround(cfg.partition->pool_overlap_fraction * n_blocks));
    for (std::size_t i = 0; i < order.size(); ++i) {
      Pool pool = i < n_shared ? Pool::Shared : ((i - n_shared) % 2 == 0 ? Pool::First : Pool::Second);
      truth.blocks[static_cast<std::size_t>(order[i])].pool = pool;
    }
  }

  std::vector<double> weight(static_cast<std::size_t>(n_blocks), 1.0);
  if (cfg.usage.kind == UsageDistribution::Kind::Zipf) {
    std::vector<int> rank(static_cast<std::size_t>(n_blocks));
    for (int i = 0; i < n_blocks; ++i) rank[static_cast<std::size_t>(i)] = i + 1;
    rng.shuffle(rank);
    for (std::size_t b = 0; b < weight.size(); ++b) weight[b] = std::pow(static_cast<double>(rank[b]), -cfg.usage.exponent);
  }

  // Active pool per spread; the two volumes share one pool without a partition.
  auto pool_for = [&](std::size_t spread) {
    std::vector<int> pool;
    for (int b = 0; b < n_blocks; ++b) {
      if (allowed(truth.blocks[static_cast<std::size_t>(b)].pool, static_cast<std::int64_t>(spread), cfg.partition)) {
        pool.push_back(b);
      }
    }
    return pool;
  };
  std::vector<std::vector<int>> pools;
  std::vector<std::size_t> pool_of_spread(n_spreads, 0);
  if (cfg.partition) {
    pools = {pool_for(0), pool_for(static_cast<std::size_t>(cfg.partition->boundary_spread))};
    for (std::size_t s = 0; s < n_spreads; ++s) {
      pool_of_spread[s] = static_cast<std::int64_t>(s) < cfg.partition->boundary_spread ? 0 : 1;
    }
  } else {
    pools = {pool_for(0)};
  }
  for (const auto& pool : pools) {
    if (pool.size() < slots) {
      infeasible("a pool of " + std::to_string(pool.size()) + " blocks cannot fill " + std::to_string(slots) +
                 " slots without repeating a block on a spread");
    }
  }

  // Every block is printed at least once: place each on the least-filled
  // spread its pool allows, scanning from a random start.
  std::vector<std::vector<int>> fill(n_spreads);
  std::vector<int> cover(static_cast<std::size_t>(n_blocks));
  for (int b = 0; b < n_blocks; ++b) cover[static_cast<std::size_t>(b)] = b;
  rng.shuffle(cover);
  for (int b : cover) {
    const std::size_t start = rng.below(n_spreads);
    std::size_t best = n_spreads;
    for (std::size_t k = 0; k < n_spreads; ++k) {
      const std::size_t s = (start + k) % n_spreads;
      if (!allowed(truth.blocks[static_cast<std::size_t>(b)].pool, static_cast<std::int64_t>(s), cfg.partition)) continue;
      if (best == n_spreads || fill[s].size() < fill[best].size()) best = s;
    }
    if (best == n_spreads || fill[best].size() >= slots) {
      infeasible("not enough slots to print every block at least once");
    }
    fill[best].push_back(b);
  }

  // Remaining slots: weighted choice from the active pool, rejecting blocks
  // already on the spread.
  std::vector<std::vector<double>> cumulative(pools.size());
  for (std::size_t p = 0; p < pools.size(); ++p) {
    double acc = 0;
    for (int b : pools[p]) cumulative[p].push_back(acc += weight[static_cast<std::size_t>(b)]);
  }
  for (std::size_t s = 0; s < n_spreads; ++s) {
    const auto& pool = pools[pool_of_spread[s]];
    const auto& cum = cumulative[pool_of_spread[s]];
    std::set<int> used(fill[s].begin(), fill[s].end());
    while (fill[s].size() < slots) {
      const double r = rng.uniform() * cum.back();
      const auto idx = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), r) - cum.begin());
      const int b = pool[std::min(idx, pool.size() - 1)];
      if (!used.insert(b).second) continue;
      fill[s].push_back(b);
    }
    rng.shuffle(fill[s]);
  }

  std::vector<std::size_t> usage(static_cast<std::size_t>(n_blocks), 0);
  for (const auto& f : fill) {
    for (int b : f) ++usage[static_cast<std::size_t>(b)];
  }

  // Planted within-spread repeats: on distinct spreads, one slot takes the
  // block of another slot; the displaced block keeps at least one impression.
  if (cfg.planted_duplicates > 0) {
    std::vector<std::size_t> order(n_spreads);
    for (std::size_t s = 0; s < n_spreads; ++s) order[s] = s;
    rng.shuffle(order);
    int planted = 0;
    for (std::size_t s : order) {
      if (planted == cfg.planted_duplicates) break;
      auto& f = fill[s];
      if (f.size() < 2) continue;
      const std::size_t i = rng.below(f.size());
      std::vector<std::size_t> victims;
      for (std::size_t j = 0; j < f.size(); ++j) {
        if (j != i && usage[static_cast<std::size_t>(f[j])] >= 2) victims.push_back(j);
      }
      if (victims.empty()) continue;
      const std::size_t j = victims[rng.below(victims.size())];
      --usage[static_cast<std::size_t>(f[j])];
      ++usage[static_cast<std::size_t>(f[i])];
      f[j] = f[i];
      truth.duplicates.push_back({BlockId{f[i]}, SpreadId{static_cast<std::int64_t>(s)}, 2});
      ++planted;
    }
    if (planted < cfg.planted_duplicates) infeasible("cannot plant the requested number of duplicates");
    std::sort(truth.duplicates.begin(), truth.duplicates.end(), [](const DuplicateHit& a, const DuplicateHit& b) {
      return std::tie(a.spread, a.block) < std::tie(b.spread, b.block);
    });
  }

  if (cfg.twin_stamp_pairs > 0) {
    std::vector<int> chars(static_cast<std::size_t>(cfg.n_characters));
    for (int c = 0; c < cfg.n_characters; ++c) chars[static_cast<std::size_t>(c)] = c;
    rng.shuffle(chars);
    for (int k = 0; k < cfg.twin_stamp_pairs; ++k) {
      const auto a = static_cast<std::size_t>(chars[static_cast<std::size_t>(k)] * cfg.blocks_per_character);
      truth.blocks[a + 1].stamp = truth.blocks[a].stamp;
      truth.blocks[a + 1].units = truth.blocks[a].units;
      truth.twin_pairs.emplace_back(truth.blocks[a].id, truth.blocks[a + 1].id);
    }
  }

  for (std::size_t b = 0; b < truth.blocks.size(); ++b) truth.blocks[b].usage = usage[b];
  for (const auto& f : fill) {
    std::vector<BlockId> ids;
    for (int b : f) ids.push_back(BlockId{b});
    truth.spread_usage.push_back(std::move(ids));
  }

  // Layout: vertical lines read right to left, segments stacked top down.
  Dataset& ds = book.dataset;
  const double unit = cfg.unit_height_px;
  const int width = cfg.segment_width_px;
  const int line_gap = std::max(4, width / 4);
  const int pitch = width + line_gap;
  const int seg_gap = std::max(2, static_cast<int>(unit / 10));
  const int margin = std::max(20, static_cast<int>(unit / 2));
  const int jitter = static_cast<int>(std::floor(cfg.height_jitter * unit));
  const int page_w = 2 * margin + cfg.lines_per_spread * pitch;
  const int page_h = 2 * margin + cfg.segments_per_line * (static_cast<int>(std::lround(3 * unit)) + jitter + seg_gap);

  ds.meta = {cfg.title, unit, width};
  std::int64_t next_segment = 0;
  for (std::size_t s = 0; s < n_spreads; ++s) {
    Spread spread;
    spread.id = SpreadId{static_cast<std::int64_t>(s)};
    if (cfg.render_images) spread.image = image_name(spread.id);
    spread.width_px = page_w;
    spread.height_px = page_h;
    for (int l = 0; l < cfg.lines_per_spread; ++l) {
      spread.lines.push_back({l, page_w - margin - (l + 1) * pitch + line_gap / 2});
    }
    for (int l = 0; l < cfg.lines_per_spread; ++l) {
      int cursor = margin;
      for (int p = 0; p < cfg.segments_per_line; ++p) {
        const auto b = static_cast<std::size_t>(fill[s][static_cast<std::size_t>(l * cfg.segments_per_line + p)]);
        const TrueBlock& tb = truth.blocks[b];
        const int h = static_cast<int>(std::lround(tb.units * unit)) + static_cast<int>(rng.between(-jitter, jitter));
        Segment seg;
        seg.id = SegmentId{next_segment++};
        seg.spread_id = spread.id;
        seg.line_index = l;
        seg.bbox = {spread.lines[static_cast<std::size_t>(l)].x_px, cursor, width, h};
        seg.key = tb.key;
        seg.block_id = tb.id;
        ds.segments.push_back(std::move(seg));
        cursor += h + seg_gap;
      }
    }
    ds.spreads.push_back(std::move(spread));
  }
  for (const auto& tb : truth.blocks) ds.blocks.push_back({tb.id, tb.key, {}});

  if (cfg.planted_oversize > 0) {
    if (static_cast<std::size_t>(cfg.planted_oversize) > ds.segments.size()) infeasible("more oversize plants than segments");
    std::map<std::int64_t, std::size_t> areas;
    for (const auto& seg : ds.segments) ++areas[seg.bbox.area()];
    std::int64_t modal_area = 0;
    std::size_t best = 0;
    for (const auto& [a, n] : areas) {
      if (n > best) {
        best = n;
        modal_area = a;
      }
    }
    const int modal_h = static_cast<int>(modal_area / width);
    std::vector<std::size_t> order(ds.segments.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (int k = 0; k < cfg.planted_oversize; ++k) {
      Segment& seg = ds.segments[order[static_cast<std::size_t>(k)]];
      seg.bbox.x = std::max(0, seg.bbox.x - width);
      seg.bbox.w = 3 * width;
      seg.bbox.h = 3 * modal_h;
      truth.oversize.push_back(seg.id);
    }
    std::sort(truth.oversize.begin(), truth.oversize.end());
  }

  canonicalize(ds);

  if (cfg.render_images) {
    std::map<std::uint64_t, std::map<std::pair<int, int>, GrayRaster>> stamps;
    for (const auto& spread : ds.spreads) {
      GrayRaster page = GrayRaster::filled(spread.width_px, spread.height_px, kPaper);
      book.pages.push_back(std::move(page));
    }
    for (const auto& seg : ds.segments) {
      const TrueBlock& tb = truth.blocks[static_cast<std::size_t>(seg.block_id.value)];
      const int nominal_h = static_cast<int>(std::lround(tb.units * unit));
      auto& by_size = stamps[tb.stamp];
      auto it = by_size.find({width, nominal_h});
      if (it == by_size.end()) it = by_size.emplace(std::pair{width, nominal_h}, render_stamp(tb.stamp, width, nominal_h)).first;
      const GrayRaster glyph = resize_nearest(it->second, seg.bbox.w, seg.bbox.h);
      GrayRaster& page = book.pages[static_cast<std::size_t>(seg.spread_id.value)];
      for (int y = 0; y < seg.bbox.h; ++y) {
        for (int x = 0; x < seg.bbox.w; ++x) {
          const int px = seg.bbox.x + x, py = seg.bbox.y + y;
          if (px >= page.width || py >= page.height) continue;
          std::uint8_t v = glyph.at(x, y);
          if (cfg.noise_density > 0 && rng.chance(cfg.noise_density)) v = rng.chance(0.5) ? 0 : 255;
          page.at(px, py) = v;
        }
      }
    }
  }
  return book;
}

std::string export_ground_truth(const GroundTruth& truth) {
  using json = nlohmann::ordered_json;
  json blocks = json::array();
  for (const auto& b : truth.blocks) {
    json jb;
    jb["id"] = b.id.value;
    jb["text"] = b.key.text;
    if (b.key.jibo) jb["jibo"] = *b.key.jibo;
    jb["pool"] = static_cast<int>(b.pool);
    jb["units"] = b.units;
    jb["usage"] = b.usage;
    jb["stamp"] = b.stamp;
    blocks.push_back(std::move(jb));
  }
  json usage = json::array();
  for (const auto& spread : truth.spread_usage) {
    json row = json::array();
    for (BlockId b : spread) row.push_back(b.value);
    usage.push_back(std::move(row));
  }
  json dups = json::array();
  for (const auto& d : truth.duplicates) dups.push_back({{"block", d.block.value}, {"spread", d.spread.value}, {"count", d.count}});
  json oversize = json::array();
  for (SegmentId s : truth.oversize) oversize.push_back(s.value);
  json twins = json::array();
  for (const auto& [a, b] : truth.twin_pairs) twins.push_back({a.value, b.value});

  json gt;
  gt["blocks"] = std::move(blocks);
  gt["spread_usage"] = std::move(usage);
  gt["duplicates"] = std::move(dups);
  gt["oversize"] = std::move(oversize);
  gt["twin_pairs"] = std::move(twins);
  json root;
  root["ground_truth"] = std::move(gt);
  return root.dump(2) + "\n";
}

}  // namespace typecase
