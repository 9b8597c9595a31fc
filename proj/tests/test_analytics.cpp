#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "typecase/analytics.hpp"
#include "typecase/rng.hpp"
#include "typecase/synth.hpp"

using namespace typecase;
using namespace typecase::testing;

namespace {

// Spreads S1={b1,b2}, S2={b1,b2}, S3={b1,b3}; b1 printed twice on S1.
struct ThreeSpreads {
  ToyBook book{3};
  BlockId b1, b2, b3;

  ThreeSpreads() {
    b1 = book.block(kanji_key("一"));
    b2 = book.block(kanji_key("二"));
    b3 = book.block(kanji_key("三"));
    book.segment(0, b1);
    book.segment(0, b2);
    book.segment(0, b1, 1);
    book.segment(1, b2);
    book.segment(1, b1);
    book.segment(2, b3);
    book.segment(2, b1);
  }
};

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

TEST_CASE("reuse counts sum to the segment count") {
  ThreeSpreads t;
  const auto counts = reuse_counts(t.book.indexed());
  CHECK(counts.at(t.b1) == 4);
  CHECK(counts.at(t.b2) == 2);
  CHECK(counts.at(t.b3) == 1);

  ToyBook singles(1);
  for (int i = 0; i < 4; ++i) singles.segment(0, singles.block(kanji_key(std::string(1, static_cast<char>('a' + i)))));
  for (const auto& [b, n] : reuse_counts(singles.indexed())) CHECK(n == 1);
}

TEST_CASE("reuse counts match planted usage") {
  SynthConfig cfg;
  cfg.seed = 31;
  cfg.usage = {UsageDistribution::Kind::Zipf, 1.2};
  cfg.n_spreads = 12;
  cfg.planted_duplicates = 2;
  const auto book = generate(cfg);
  const auto counts = reuse_counts(IndexedDataset::build(book.dataset));
  for (const auto& tb : book.truth.blocks) CHECK(counts.at(tb.id) == tb.usage);
  std::size_t total = 0;
  for (const auto& [b, n] : counts) total += n;
  CHECK(total == book.dataset.segments.size());
}

TEST_CASE("zipf fit on halving counts matches closed-form least squares") {
  const std::vector<std::size_t> counts{1, 8, 2, 4};
  const auto fit = zipf_fit(counts);
  std::vector<double> x, y;
  for (int r = 1; r <= 4; ++r) x.push_back(std::log(r));
  for (double c : {8.0, 4.0, 2.0, 1.0}) y.push_back(std::log(c));
  const auto [slope, intercept] = oracle::least_squares(x, y);
  CHECK(fit.exponent == doctest::Approx(-slope).epsilon(1e-12));
  CHECK(fit.exponent == doctest::Approx(1.46).epsilon(0.005));
  // r2 from residuals
  double ss_res = 0, ss_tot = 0, mean = 0;
  for (double v : y) mean += v / 4;
  for (std::size_t i = 0; i < 4; ++i) {
    const double pred = intercept + slope * x[i];
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  CHECK(fit.r2 == doctest::Approx(1 - ss_res / ss_tot).epsilon(1e-12));
}

TEST_CASE("zipf fit edge cases") {
  const std::vector<std::size_t> flat{5, 5, 5, 5};
  const auto fit = zipf_fit(flat);
  CHECK(fit.exponent == 0.0);
  CHECK(fit.r2 == 0.0);
  const std::vector<std::size_t> two{3, 1};
  CHECK(code_of([&] { zipf_fit(two); }) == ErrorCode::InsufficientData);
  const std::vector<std::size_t> zero{3, 1, 0};
  CHECK(code_of([&] { zipf_fit(zero); }) == ErrorCode::InsufficientData);
  const std::vector<std::size_t> exact{60, 30, 20, 15, 12, 10};
  CHECK(zipf_fit(exact).exponent == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(zipf_fit(exact).r2 == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("same-spread duplicates") {
  ThreeSpreads t;
  const auto hits = same_spread_duplicates(t.book.indexed());
  CHECK(hits == std::vector<DuplicateHit>{{t.b1, SpreadId{0}, 2}});

  SynthConfig cfg;
  cfg.seed = 2;
  cfg.n_spreads = 10;
  CHECK(same_spread_duplicates(IndexedDataset::build(generate(cfg).dataset)).empty());
  cfg.planted_duplicates = 5;
  const auto book = generate(cfg);
  CHECK(same_spread_duplicates(IndexedDataset::build(book.dataset)) == book.truth.duplicates);
}

TEST_CASE("bbox anomalies") {
  SUBCASE("uniform boxes produce nothing") {
    ToyBook book(2);
    const auto b = book.block(kanji_key("一"));
    for (int i = 0; i < 12; ++i) book.segment(i % 2, b, 0, 200);
    CHECK(bbox_anomalies(book.indexed()).empty());
  }
  SUBCASE("one box nine times the common area") {
    ToyBook book(1, 1, 100, 100);
    const auto b = book.block(kanji_key("一"));
    for (int i = 0; i < 100; ++i) book.segment(0, b, 0, 100);
    const auto big = book.segment(0, b, 0, 300, 300);
    const auto flagged = bbox_anomalies(book.indexed());
    REQUIRE(flagged.size() == 1);
    CHECK(flagged[0].segment == big);
    CHECK(flagged[0].area_outlier);
    CHECK_FALSE(flagged[0].height_off_unit);
    // MAD is zero here; the mean absolute deviation stands in
    const double mean_ad = 80000.0 / 101.0;
    CHECK(flagged[0].score == doctest::Approx(80000.0 / (1.2533 * mean_ad)));
  }
  SUBCASE("robust z-score by hand") {
    ToyBook book(1, 1, 10, 10);
    const auto b = book.block(kanji_key("一"));
    const std::vector<int> heights{10, 10, 10, 10, 20, 20, 20, 20, 30, 30, 30, 90};
    for (int h : heights) book.segment(0, b, 0, h);
    // areas 100..900; median 200, |dev| median 100 -> scale 148.26
    const auto flagged = bbox_anomalies(book.indexed());
    REQUIRE(flagged.size() == 1);
    CHECK(flagged[0].score == doctest::Approx((900.0 - 200.0) / 148.26));
  }
  SUBCASE("off-grid heights are flagged even with ordinary areas") {
    ToyBook book(1);
    const auto b = book.block(kanji_key("一"));
    for (int i = 0; i < 11; ++i) book.segment(0, b, 0, 100);
    const auto odd = book.segment(0, b, 0, 60);
    const auto flagged = bbox_anomalies(book.indexed());
    REQUIRE_FALSE(flagged.empty());
    CHECK(std::any_of(flagged.begin(), flagged.end(), [&](const Anomaly& a) { return a.segment == odd && a.height_off_unit; }));
  }
  SUBCASE("too few segments") {
    ToyBook book(1);
    const auto b = book.block(kanji_key("一"));
    for (int i = 0; i < 9; ++i) book.segment(0, b, 0, 100);
    book.segment(0, b, 0, 900, 500);
    CHECK(bbox_anomalies(book.indexed(), {.min_segments = 11}).empty());
  }
}

TEST_CASE("co-appearance on three spreads") {
  ThreeSpreads t;
  const auto m = co_appearance(t.book.indexed());
  REQUIRE(m.size() == 3);
  CHECK(m.at(0, 1) == 2);
  CHECK(m.at(0, 2) == 1);
  CHECK(m.at(1, 2) == 0);
  CHECK(m.at(0, 0) == 3);
  CHECK(m.at(1, 1) == 2);
  CHECK(m.at(2, 2) == 1);

  const auto only = co_appearance(t.book.indexed(), [&](const Block& b) { return b.id == t.b2; });
  REQUIRE(only.size() == 1);
  CHECK(only.at(0, 0) == 2);
}

TEST_CASE("co-appearance and spread graph agree with brute force") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    SynthConfig cfg;
    cfg.seed = 900 + static_cast<std::uint64_t>(trial);
    cfg.n_characters = 6 + static_cast<int>(rng.below(5));
    cfg.blocks_per_character = 1 + static_cast<int>(rng.below(3));
    cfg.n_spreads = 8 + static_cast<int>(rng.below(6));
    cfg.usage.kind = rng.chance(0.5) ? UsageDistribution::Kind::Zipf : UsageDistribution::Kind::Constant;
    cfg.planted_duplicates = static_cast<int>(rng.below(3));
    const auto book = generate(cfg);
    const auto ds = IndexedDataset::build(book.dataset);
    const auto m = co_appearance(ds);
    const auto brute = oracle::co_appearance(book.dataset);
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = 0; j < m.size(); ++j) CHECK(m.at(i, j) == brute.at({m.block_ids[i], m.block_ids[j]}));
    }
    for (std::int64_t k = 1; k <= 3; ++k) CHECK(spread_graph(ds, k).edges == oracle::spread_edges(book.dataset, k));
  }
}

TEST_CASE("partitioned pools never co-appear") {
  SynthConfig cfg;
  cfg.seed = 17;
  cfg.n_characters = 20;
  cfg.n_spreads = 12;
  cfg.partition = PartitionConfig{6, 0.0};
  const auto book = generate(cfg);
  const auto m = co_appearance(IndexedDataset::build(book.dataset));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      const Pool pi = book.truth.blocks[static_cast<std::size_t>(m.block_ids[i].value)].pool;
      const Pool pj = book.truth.blocks[static_cast<std::size_t>(m.block_ids[j].value)].pool;
      if (pi != pj) CHECK(m.at(i, j) == 0);
    }
  }
}

TEST_CASE("spread graph and density on small graphs") {
  ThreeSpreads t;
  const auto g = spread_graph(t.book.indexed());
  // b1 sits on every spread, so S2 and S3 are linked through it
  CHECK(g.edges == std::vector<SpreadEdge>{{SpreadId{0}, SpreadId{1}, 2},
                                           {SpreadId{0}, SpreadId{2}, 1},
                                           {SpreadId{1}, SpreadId{2}, 1}});
  CHECK(graph_density(g) == 1.0);
  CHECK(spread_graph(t.book.indexed(), 2).edges == std::vector<SpreadEdge>{{SpreadId{0}, SpreadId{1}, 2}});
  const SpreadGraph path{3, {{SpreadId{0}, SpreadId{1}, 2}, {SpreadId{0}, SpreadId{2}, 1}}};
  CHECK(graph_density(path) == doctest::Approx(2.0 / 3.0));

  ToyBook singles(3);
  for (int s = 0; s < 3; ++s) singles.segment(s, singles.block(kanji_key(std::to_string(s))));
  CHECK(spread_graph(singles.indexed()).edges.empty());
  CHECK(graph_density(spread_graph(singles.indexed())) == 0.0);

  SpreadGraph k4{4, {}};
  for (int u = 0; u < 4; ++u) {
    for (int v = u + 1; v < 4; ++v) k4.edges.push_back({SpreadId{u}, SpreadId{v}, 1});
  }
  CHECK(graph_density(k4) == 1.0);
  CHECK(code_of([] { graph_density(SpreadGraph{1, {}}); }) == ErrorCode::TooFewNodes);
}

namespace {

SpreadGraph two_cliques(int k) {
  SpreadGraph g{static_cast<std::size_t>(2 * k), {}};
  for (int c = 0; c < 2; ++c) {
    for (int u = 0; u < k; ++u) {
      for (int v = u + 1; v < k; ++v) g.edges.push_back({SpreadId{c * k + u}, SpreadId{c * k + v}, 1});
    }
  }
  return g;
}

// Q straight from the adjacency-matrix double sum.
double modularity_oracle(const SpreadGraph& g, const std::vector<int>& groups) {
  const std::size_t n = g.n_spreads;
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (const auto& e : g.edges) {
    a[static_cast<std::size_t>(e.u.value)][static_cast<std::size_t>(e.v.value)] += static_cast<double>(e.weight);
    a[static_cast<std::size_t>(e.v.value)][static_cast<std::size_t>(e.u.value)] += static_cast<double>(e.weight);
  }
  std::vector<double> k(n, 0.0);
  double two_m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i] += a[i][j];
    two_m += k[i];
  }
  double q = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (groups[i] == groups[j]) q += a[i][j] - k[i] * k[j] / two_m;
    }
  }
  return q / two_m;
}

}  // namespace

TEST_CASE("modularity closed forms") {
  const auto g = two_cliques(4);
  const std::vector<int> split{0, 0, 0, 0, 1, 1, 1, 1};
  CHECK(partition_modularity(g, split) == doctest::Approx(0.5));
  const std::vector<int> one(8, 3);
  CHECK(partition_modularity(g, one) == doctest::Approx(0.0));
  const std::vector<int> short_groups{0, 1};
  CHECK(code_of([&] { partition_modularity(g, short_groups); }) == ErrorCode::BadRequest);
  CHECK(code_of([&] { partition_modularity(SpreadGraph{3, {}}, std::vector<int>{0, 0, 1}); }) == ErrorCode::EmptyGraph);
}

TEST_CASE("modularity matches the adjacency double sum and averages to zero") {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    SynthConfig cfg;
    cfg.seed = 70 + static_cast<std::uint64_t>(trial);
    cfg.n_characters = 30;
    cfg.n_spreads = 30;
    cfg.usage = {UsageDistribution::Kind::Zipf, 1.0};
    const auto g = spread_graph(IndexedDataset::build(generate(cfg).dataset));
    double mean = 0;
    for (int draw = 0; draw < 100; ++draw) {
      std::vector<int> groups(g.n_spreads);
      for (auto& x : groups) x = static_cast<int>(rng.below(2));
      const double q = partition_modularity(g, groups);
      CHECK(q == doctest::Approx(modularity_oracle(g, groups)).epsilon(1e-12));
      CHECK(q >= -0.5);
      CHECK(q <= 1.0);
      mean += q / 100;
    }
    CHECK(std::abs(mean) < 0.05);
  }
}

TEST_CASE("the planted volume split beats random splits") {
  SynthConfig cfg;
  cfg.seed = 8;
  cfg.n_characters = 30;
  cfg.n_spreads = 20;
  cfg.partition = PartitionConfig{10, 0.1};
  const auto g = spread_graph(IndexedDataset::build(generate(cfg).dataset));
  std::vector<int> truth(20);
  for (int i = 0; i < 20; ++i) truth[static_cast<std::size_t>(i)] = i < 10 ? 0 : 1;
  const double q_true = partition_modularity(g, truth);
  Rng rng(3);
  for (int draw = 0; draw < 100; ++draw) {
    auto groups = truth;
    rng.shuffle(groups);
    if (groups == truth) continue;
    CHECK(partition_modularity(g, groups) < q_true);
  }
}

namespace {

CoAppearanceMatrix random_symmetric(Rng& rng, std::size_t n) {
  CoAppearanceMatrix m;
  for (std::size_t i = 0; i < n; ++i) m.block_ids.push_back(BlockId{static_cast<std::int64_t>(i)});
  m.values.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) m.at(i, j) = m.at(j, i) = static_cast<std::int64_t>(rng.below(10));
  }
  return m;
}

double max_component_error(const Embedding& e, const oracle::ReferenceEmbedding& ref) {
  double worst = 0;
  for (std::size_t k = 0; k < e.eigenvalues.size(); ++k) {
    double dot = 0;
    for (std::size_t i = 0; i < e.coords.size(); ++i) dot += e.coords[i][k] * ref.coords[i][k];
    const double sign = dot < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < e.coords.size(); ++i) {
      worst = std::max(worst, std::abs(e.coords[i][k] - sign * ref.coords[i][k]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("embedding agrees with a Jacobi eigen-decomposition") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_symmetric(rng, 6);
    const auto e = block_embedding(m);
    const auto ref = oracle::embedding(m, 2);
    CHECK(max_component_error(e, ref) < 1e-6);
    CHECK(e.eigenvalues[0] == doctest::Approx(ref.eigenvalues[0]).epsilon(1e-9));
  }
}

TEST_CASE("embedding of identical rows collapses to the origin") {
  CoAppearanceMatrix m;
  for (int i = 0; i < 4; ++i) m.block_ids.push_back(BlockId{i});
  m.values.assign(16, 2);
  const auto e = block_embedding(m);
  for (const auto& c : e.coords) {
    CHECK(c[0] == 0.0);
    CHECK(c[1] == 0.0);
  }
}

TEST_CASE("embedding preconditions and conventions") {
  CoAppearanceMatrix m;
  m.block_ids = {BlockId{0}, BlockId{1}};
  m.values = {1, 0, 0, 1};
  CHECK(code_of([&] { block_embedding(m); }) == ErrorCode::TooFewBlocks);

  Rng rng(12);
  const auto big = random_symmetric(rng, 7);
  CHECK(code_of([&] { block_embedding(big, {.dims = 2, .tolerance = 1e-300, .max_iterations = 3}); }) ==
        ErrorCode::NoConvergence);

  const auto e = block_embedding(big);
  CHECK(e.eigenvalues[0] >= e.eigenvalues[1]);
  CHECK(e.iterations.size() == 2);
}

TEST_CASE("embedding is invariant under block permutation") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5 + rng.below(6);
    const auto m = random_symmetric(rng, n);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    CoAppearanceMatrix p;
    for (std::size_t i = 0; i < n; ++i) p.block_ids.push_back(m.block_ids[perm[i]]);
    p.values.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) p.at(i, j) = m.at(perm[i], perm[j]);
    }
    const auto a = block_embedding(m);
    const auto b = block_embedding(p);
    for (std::size_t k = 0; k < 2; ++k) {
      double dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += b.coords[i][k] * a.coords[perm[i]][k];
      const double sign = dot < 0 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < n; ++i) CHECK(b.coords[i][k] == doctest::Approx(sign * a.coords[perm[i]][k]).epsilon(1e-6));
    }
  }
}

TEST_CASE("character timeline") {
  ThreeSpreads t;
  const auto ds = t.book.indexed();
  const auto tl = character_timeline(ds, kanji_key("三"));
  REQUIRE(tl.rows.size() == 1);
  CHECK(tl.rows[0].counts == std::vector<std::int64_t>{0, 0, 1});
  CHECK(code_of([&] { character_timeline(ds, kanji_key("無")); }) == ErrorCode::UnknownCharacter);

  SynthConfig cfg;
  cfg.seed = 21;
  cfg.blocks_per_character = 3;
  cfg.n_spreads = 10;
  cfg.usage = {UsageDistribution::Kind::Zipf, 1.0};
  const auto book = generate(cfg);
  const auto full = IndexedDataset::build(book.dataset);
  for (const auto& [key, blocks] : full.characters()) {
    const auto timeline = character_timeline(full, key);
    CHECK(timeline.rows.size() == blocks.size());
    std::vector<std::int64_t> column(book.truth.spread_usage.size(), 0);
    for (std::size_t r = 0; r < timeline.rows.size(); ++r) {
      const auto& row = timeline.rows[r];
      const auto& truth = book.truth.blocks[static_cast<std::size_t>(row.block.value)];
      CHECK(std::accumulate(row.counts.begin(), row.counts.end(), std::int64_t{0}) ==
            static_cast<std::int64_t>(truth.usage));
      for (std::size_t s = 0; s < row.counts.size(); ++s) {
        const auto& used = book.truth.spread_usage[s];
        CHECK(row.counts[s] == std::count(used.begin(), used.end(), row.block));
        column[s] += row.counts[s];
      }
      if (r > 0) CHECK(full.members(timeline.rows[r - 1].block).size() >= full.members(row.block).size());
    }
    for (std::size_t s = 0; s < column.size(); ++s) {
      std::int64_t direct = 0;
      for (SegmentId sid : full.segments_on(SpreadId{static_cast<std::int64_t>(s)})) direct += full.segment(sid).key == key;
      CHECK(column[s] == direct);
    }
  }
}

TEST_CASE("line rhythm") {
  ToyBook book(2, 2);
  const auto b = book.block(kanji_key("一"));
  book.segment(0, b, 0, 100);
  book.segment(0, b, 0, 200);
  book.segment(0, b, 0, 100);
  book.segment(0, b, 1, 167);
  book.segment(0, b, 1, 30);
  const auto ds = book.indexed();
  const auto r = line_rhythm(ds, SpreadId{0});
  REQUIRE(r.size() == 2);
  CHECK(r[0].units == std::vector{1, 2, 1});
  CHECK(r[1].units == std::vector{2, 1});
  const auto empty = line_rhythm(ds, SpreadId{1});
  REQUIRE(empty.size() == 2);
  CHECK(empty[0].units.empty());
  CHECK(code_of([&] { line_rhythm(ds, SpreadId{9}); }) == ErrorCode::UnknownSpread);
}

TEST_CASE("analytics survive export and re-ingestion") {
  SynthConfig cfg;
  cfg.seed = 44;
  cfg.blocks_per_character = 3;
  cfg.n_spreads = 8;
  auto state = make_state(generate(cfg).dataset);
  const auto reused = std::find_if(state.dataset.blocks.begin(), state.dataset.blocks.end(),
                                   [](const Block& b) { return b.member_ids.size() > 1; });
  REQUIRE(reused != state.dataset.blocks.end());
  state = detach_segment(state, reused->member_ids.front(), "2024-01-01T00:00:00Z").state;
  const auto direct = IndexedDataset::build(state.dataset);
  const auto reparsed = IndexedDataset::build(parse_dataset(export_dataset(state.dataset, state.log)).dataset);
  CHECK(reuse_counts(direct) == reuse_counts(reparsed));
  CHECK(co_appearance(direct).values == co_appearance(reparsed).values);
  CHECK(spread_graph(direct).edges == spread_graph(reparsed).edges);
  CHECK(same_spread_duplicates(direct) == same_spread_duplicates(reparsed));
}
