#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "raft/retrieval.hpp"

using namespace raft;

namespace {

AnchoredPatch anchored(std::initializer_list<double> row) {
  Matrix v(1, static_cast<Index>(row.size()));
  Index t = 0;
  for (double x : row) v(0, t++) = x;
  return subtract_offset(Patch{v, 0, 1});
}

TimeSeries random_series(std::mt19937_64& rng, Index channels, Index length) {
  Matrix v = oracle::random_matrix(rng, channels, length);
  // A random walk keeps neighbouring windows correlated but distinct.
  for (Index c = 0; c < channels; ++c)
    for (Index t = 1; t < length; ++t) v(c, t) += v(c, t - 1);
  return TimeSeries::from_values(v);
}

std::vector<SimilarityMetric> plain_metrics() {
  std::vector<SimilarityMetric> out;
  for (auto kind : {MetricKind::pearson, MetricKind::cosine, MetricKind::neg_l2})
    for (auto red : {ChannelReduction::channel_mean, ChannelReduction::flatten}) {
      SimilarityMetric m;
      m.kind = kind;
      m.reduction = red;
      out.push_back(m);
    }
  return out;
}

}  // namespace

TEST_CASE("pearson similarity examples") {
  const SimilarityMetric pearson;
  const AnchoredPatch q = anchored({1, 2, 3, 0});
  CHECK(similarity(q, q, pearson) == doctest::Approx(1.0).epsilon(1e-15));

  AnchoredPatch neg = q;
  neg.values = -q.values;
  CHECK(similarity(q, neg, pearson) == doctest::Approx(-1.0).epsilon(1e-15));

  const AnchoredPatch k = anchored({2, 1, 4, 0});
  const double expect = oracle::pearson(oracle::to_grid(q.values)[0], oracle::to_grid(k.values)[0]);
  CHECK(std::abs(similarity(q, k, pearson) - expect) < 1e-12);

  const AnchoredPatch flat = anchored({3, 3, 3, 3});
  CHECK(similarity(q, flat, pearson) == 0.0);
  CHECK(similarity(flat, flat, pearson) == 0.0);

  SimilarityMetric cosine;
  cosine.kind = MetricKind::cosine;
  CHECK(similarity(q, flat, cosine) == 0.0);

  CHECK_THROWS_AS(similarity(q, anchored({1, 2, 0}), pearson), Error);
}

TEST_CASE("pearson is invariant to per-channel scale and offset") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-5.0, 5.0);
  const SimilarityMetric pearson;
  for (int trial = 0; trial < 100; ++trial) {
    const AnchoredPatch x = subtract_offset(Patch{oracle::random_matrix(rng, 3, 12), 0, 1});
    const AnchoredPatch k = subtract_offset(Patch{oracle::random_matrix(rng, 3, 12), 0, 1});
    AnchoredPatch y = x;
    for (Index c = 0; c < 3; ++c) y.values.row(c) = y.values.row(c).array() * scale(rng) + shift(rng);
    CHECK(std::abs(similarity(y, k, pearson) - similarity(x, k, pearson)) < 1e-9);
  }
}

TEST_CASE("exclusion masks exactly the overlapping spans") {
  const Index L = 96, F = 96, q = 50;
  const ExclusionRule rule = ExclusionRule::training(q);
  for (Index i = -400; i <= 400; ++i)
    CHECK(rule.admissible(i, L, F) == !oracle::spans_meet(i, q, L + F));
  const ExclusionRule none = ExclusionRule::inference();
  for (Index i = 0; i <= 400; ++i) CHECK(none.admissible(i, L, F));
}

TEST_CASE("training queries never see an overlapping candidate") {
  std::mt19937_64 rng(23);
  const TimeSeries train = random_series(rng, 2, 60);
  const Index L = 8, F = 4;
  const PatchIndex index = PatchIndex::build(train, L, F, 1, {1, 2, 4});
  RetrievalParams params;
  params.m = 1000;
  for (Index q = 0; q + L + F <= 60; ++q) {
    const RetrievalResult r =
        retrieve(index, extract_patch(train, q, L), params, ExclusionRule::training(q));
    for (const auto& pr : r.periods) {
      CHECK(!pr.starts.empty());
      for (Index s : pr.starts) CHECK(!oracle::spans_meet(s, q, L + F));
      Index expect = 0;
      for (Index i = 0; i + L + F <= 60; ++i) expect += oracle::spans_meet(i, q, L + F) ? 0 : 1;
      CHECK(static_cast<Index>(pr.starts.size()) == expect);
    }
  }
}

TEST_CASE("inference queries score every candidate and mask none") {
  std::mt19937_64 rng(3);
  const TimeSeries train = random_series(rng, 1, 50);
  const PatchIndex index = PatchIndex::build(train, 10, 5, 1, {1});
  const AnchoredPatch q = subtract_offset(Patch{oracle::random_matrix(rng, 1, 10), 0, 1});
  const ScoreSet s = score_all(index, q, 1, SimilarityMetric{}, ExclusionRule::inference());
  CHECK(s.scores.size() == static_cast<std::size_t>(index.size()));
  CHECK(std::count(s.admissible.begin(), s.admissible.end(), 1) == index.size());

  // A constant key scores 0 under pearson.
  Matrix v = Matrix::Constant(1, 30, 2.0);
  v.rightCols(10) = oracle::random_matrix(rng, 1, 10);
  const PatchIndex flat = PatchIndex::build(TimeSeries::from_values(v), 10, 5, 1, {1});
  CHECK(flat.score(q, 1, SimilarityMetric{})[0] == 0.0);
}

TEST_CASE("top_m examples") {
  const std::vector<double> s1{0.9, 0.2, 0.7};
  const std::vector<std::uint8_t> all3(3, 1);
  CHECK(top_m(s1, all3, 2) == std::vector<Index>{0, 2});

  const std::vector<double> s2{0.5, 0.5, 0.1};
  CHECK(top_m(s2, all3, 1) == std::vector<Index>{0});

  const std::vector<double> s3(9, 0.3);
  CHECK(top_m(s3, std::vector<std::uint8_t>(9, 1), 20).size() == 9);

  const std::vector<std::uint8_t> mask{0, 1, 1};
  CHECK(top_m(s1, mask, 2) == std::vector<Index>{2, 1});
  CHECK(top_m(s1, std::vector<std::uint8_t>(3, 0), 2).empty());
}

TEST_CASE("top_m is stable under permutation of the candidate storage") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> level(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 30;
    std::vector<double> scores(n);
    std::vector<Index> starts(n);
    std::vector<std::uint8_t> adm(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = level(rng) / 5.0;  // many ties
      starts[i] = static_cast<Index>(i) * 3;
      adm[i] = rng() % 4 != 0;
    }
    auto picked = [&](const std::vector<double>& s, const std::vector<std::uint8_t>& a,
                      const std::vector<Index>& st) {
      std::set<Index> out;
      for (Index k : top_m(s, a, 7, st)) out.insert(st[k]);
      return out;
    };
    const auto base = picked(scores, adm, starts);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(n);
    std::vector<Index> pst(n);
    std::vector<std::uint8_t> pa(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = scores[perm[i]];
      pst[i] = starts[perm[i]];
      pa[i] = adm[perm[i]];
    }
    CHECK(picked(ps, pa, pst) == base);
  }
}

TEST_CASE("softmax weights") {
  const std::vector<double> two{0.9, 0.7};
  const auto w = softmax_weights(two, 0.1);
  const double odds = std::exp(2.0);
  CHECK(w[0] == doctest::Approx(odds / (1.0 + odds)).epsilon(1e-14));
  CHECK(w[0] == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.1192).epsilon(1e-3));

  for (double x : softmax_weights(std::vector<double>(4, 0.3), 0.1)) CHECK(x == doctest::Approx(0.25));
  CHECK(softmax_weights(std::vector<double>{0.4}, 0.1)[0] == 1.0);
  CHECK_THROWS_AS(softmax_weights(two, 0.0), Error);
  CHECK_THROWS_AS(softmax_weights(two, -1.0), Error);

  // Large scores must not overflow.
  const auto big = softmax_weights(std::vector<double>{1000.0, 999.0}, 0.01);
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] == doctest::Approx(1.0));
}

TEST_CASE("softmax weight properties and temperature limits") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(10);
    for (double& x : s) x = u(rng);
    const auto w = softmax_weights(s, 0.1);
    double sum = 0.0;
    for (double x : w) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (s[i] > s[j]) CHECK(w[i] > w[j]);

    const auto cold = softmax_weights(s, 1e-6);
    const std::size_t best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(cold[i] - (i == best ? 1.0 : 0.0)) < 1e-6);
    for (double x : softmax_weights(s, 1e6)) CHECK(std::abs(x - 0.1) < 1e-6);
  }
}

TEST_CASE("index candidate counts and widths") {
  const TimeSeries train = TimeSeries::from_values(Matrix::Random(2, 200));
  const PatchIndex one = PatchIndex::build(train, 96, 96, 1, {1});
  CHECK(one.size() == 9);

  const PatchIndex multi = PatchIndex::build(train, 96, 96, 1, {1, 2, 4});
  CHECK(multi.size() == 9);
  CHECK(multi.key_width(1) == 96);
  CHECK(multi.key_width(2) == 48);
  CHECK(multi.key_width(4) == 24);
  for (int p : {1, 2, 4}) {
    for (Index i = 0; i < multi.size(); ++i) {
      CHECK(multi.key(i, p).values.col(multi.key_width(p) - 1).cwiseAbs().maxCoeff() == 0.0);
      CHECK(multi.value(i, p).values.cols() == 96 / p);
    }
  }

  const TimeSeries longer = TimeSeries::from_values(Matrix::Random(1, 2000));
  const Index n1 = PatchIndex::build(longer, 96, 96, 1, {1}).size();
  const PatchIndex strided = PatchIndex::build(longer, 96, 96, 8, {1});
  CHECK(strided.size() == (n1 - 1) / 8 + 1);
  for (Index s : strided.starts()) CHECK(s % 8 == 0);

  CHECK_THROWS_AS(PatchIndex::build(train, 150, 96, 1, {1}), Error);
  CHECK_THROWS_AS(PatchIndex::build(train, 96, 8, 1, {1, 16}), Error);
}

TEST_CASE("index keys and values follow the pooling and anchoring oracle") {
  std::mt19937_64 rng(41);
  const TimeSeries train = random_series(rng, 2, 70);
  const Index L = 13, F = 9, origin = 500;
  const PatchIndex index = PatchIndex::build(train, L, F, 2, {1, 2, 3}, origin);
  const auto g = oracle::to_grid(train.values());
  for (Index i = 0; i < index.size(); ++i) {
    const Index s = index.starts()[i];
    CHECK(s == origin + 2 * i);
    for (int p : {1, 2, 3}) {
      const auto kp = oracle::pool(oracle::cols(g, 2 * i, L), p);
      const auto vp = oracle::pool(oracle::cols(g, 2 * i + L, F), p);
      const auto anchor = oracle::last_column(kp);
      const auto kk = oracle::shift(kp, anchor), vv = oracle::shift(vp, anchor);
      const AnchoredPatch k = index.key(i, p), v = index.value(i, p);
      for (Index c = 0; c < 2; ++c) {
        for (Index t = 0; t < k.values.cols(); ++t) CHECK(std::abs(k.values(c, t) - kk[c][t]) < 1e-12);
        for (Index t = 0; t < v.values.cols(); ++t) CHECK(std::abs(v.values(c, t) - vv[c][t]) < 1e-12);
      }
    }
  }
}

TEST_CASE("retrieve with m = 1 returns the best anchored value exactly") {
  std::mt19937_64 rng(5);
  const TimeSeries train = random_series(rng, 2, 80);
  const PatchIndex index = PatchIndex::build(train, 12, 6, 1, {1, 2});
  RetrievalParams params;
  params.m = 1;
  const Patch q{oracle::random_matrix(rng, 2, 12), 0, 1};
  const RetrievalResult r = retrieve(index, q, params, ExclusionRule::inference());
  for (const auto& pr : r.periods) {
    REQUIRE(pr.candidates.size() == 1);
    CHECK(pr.weights[0] == 1.0);
    CHECK(pr.aggregate == index.value(pr.candidates[0], pr.period).values);
    const auto scores = index.score(subtract_offset(downsample(q, pr.period)), pr.period, params.metric);
    CHECK(pr.scores[0] == *std::max_element(scores.begin(), scores.end()));
  }
}

TEST_CASE("duplicate candidates aggregate to their common value") {
  // A periodic series makes every candidate at the same phase identical.
  Matrix v(1, 60);
  for (Index t = 0; t < 60; ++t) v(0, t) = std::sin(2.0 * M_PI * static_cast<double>(t) / 10.0);
  const PatchIndex index = PatchIndex::build(TimeSeries::from_values(v), 20, 10, 10, {1});
  REQUIRE(index.size() == 4);
  RetrievalParams params;
  params.m = 4;
  Matrix qv(1, 20);
  for (Index t = 0; t < 20; ++t) qv(0, t) = std::sin(2.0 * M_PI * static_cast<double>(t + 3) / 10.0);
  const RetrievalResult r = retrieve(index, Patch{qv, 0, 1}, params, ExclusionRule::inference());
  const Matrix common = index.value(0, 1).values;
  CHECK((r.periods[0].aggregate - common).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("retrieve matches the end-to-end oracle on a 40-step toy series") {
  std::mt19937_64 rng(2024);
  const TimeSeries train = random_series(rng, 2, 40);
  const int L = 20, F = 18;
  const std::vector<int> periods{1, 2, 4};
  const PatchIndex index = PatchIndex::build(train, L, F, 1, periods, 100);
  REQUIRE(index.size() == 3);
  RetrievalParams params;
  params.m = 3;
  params.tau = 0.1;
  const Matrix qv = oracle::random_matrix(rng, 2, L);
  const RetrievalResult r = retrieve(index, Patch{qv, 0, 1}, params, ExclusionRule::inference());
  const auto expect = oracle::retrieve(oracle::to_grid(train.values()), 100, L, F, periods, 3, 0.1,
                                       oracle::to_grid(qv), std::nullopt);
  for (std::size_t k = 0; k < periods.size(); ++k) {
    const auto& got = r.periods[k];
    REQUIRE(got.starts.size() == expect[k].picks.size());
    for (std::size_t j = 0; j < got.starts.size(); ++j) {
      CHECK(got.starts[j] == expect[k].picks[j].start);
      CHECK(std::abs(got.scores[j] - expect[k].picks[j].score) < 1e-12);
      CHECK(std::abs(got.weights[j] - expect[k].picks[j].weight) < 1e-12);
    }
    for (Index c = 0; c < 2; ++c)
      for (Index t = 0; t < got.aggregate.cols(); ++t)
        CHECK(std::abs(got.aggregate(c, t) - expect[k].aggregate[c][t]) < 1e-12);
  }
}

TEST_CASE("aggregating over all candidates with zero weights equals the top-m sum") {
  std::mt19937_64 rng(12);
  const TimeSeries train = random_series(rng, 3, 90);
  const PatchIndex index = PatchIndex::build(train, 10, 8, 1, {1, 2});
  RetrievalParams params;
  params.m = 5;
  const RetrievalResult r = retrieve(index, Patch{oracle::random_matrix(rng, 3, 10), 0, 1}, params,
                                     ExclusionRule::inference());
  for (const auto& pr : r.periods) {
    std::vector<Index> all(static_cast<std::size_t>(index.size()));
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> dense(all.size(), 0.0);
    for (std::size_t j = 0; j < pr.candidates.size(); ++j) dense[pr.candidates[j]] = pr.weights[j];
    const Matrix full = index.aggregate(all, dense, pr.period);
    CHECK((full - pr.aggregate).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("batched scoring is bit-identical to single-query scoring") {
  std::mt19937_64 rng(77);
  const TimeSeries train = random_series(rng, 3, 300);
  const PatchIndex index = PatchIndex::build(train, 24, 12, 1, {1, 2, 4});
  for (const auto& metric : plain_metrics()) {
    for (int p : {1, 2, 4}) {
      std::vector<AnchoredPatch> qs;
      for (int k = 0; k < 37; ++k)
        qs.push_back(subtract_offset(downsample(Patch{oracle::random_matrix(rng, 3, 24), 0, 1}, p)));
      const Matrix batch = index.score_batch(qs, p, metric);
      for (std::size_t k = 0; k < qs.size(); ++k) {
        const auto single = index.score(qs[k], p, metric);
        for (Index i = 0; i < index.size(); ++i) CHECK(batch(static_cast<Index>(k), i) == single[i]);
      }
    }
  }
}

TEST_CASE("scores agree with the standalone similarity function") {
  std::mt19937_64 rng(78);
  const TimeSeries train = random_series(rng, 2, 120);
  const PatchIndex index = PatchIndex::build(train, 16, 8, 3, {1, 2});
  for (const auto& metric : plain_metrics()) {
    for (int p : {1, 2}) {
      const AnchoredPatch q = subtract_offset(downsample(Patch{oracle::random_matrix(rng, 2, 16), 0, 1}, p));
      const auto scores = index.score(q, p, metric);
      for (Index i = 0; i < index.size(); ++i)
        CHECK(std::abs(scores[i] - similarity(q, index.key(i, p), metric, p)) < 1e-10);
    }
  }
}

TEST_CASE("retrieve_batch is bit-identical to retrieve") {
  std::mt19937_64 rng(79);
  const TimeSeries train = random_series(rng, 2, 200);
  const PatchIndex index = PatchIndex::build(train, 16, 8, 1, {1, 2, 4});
  for (const auto& metric : plain_metrics()) {
    RetrievalParams params;
    params.metric = metric;
    params.m = 6;
    std::vector<Patch> queries;
    std::vector<ExclusionRule> rules;
    for (Index q = 0; q + 24 <= 200; q += 7) {
      queries.push_back(extract_patch(train, q, 16));
      rules.push_back(q % 2 == 0 ? ExclusionRule::training(q) : ExclusionRule::inference());
    }
    const auto batch = retrieve_batch(index, queries, params, rules);
    for (std::size_t k = 0; k < queries.size(); ++k) {
      const RetrievalResult one = retrieve(index, queries[k], params, rules[k]);
      for (std::size_t j = 0; j < one.periods.size(); ++j) {
        CHECK(batch[k].periods[j].starts == one.periods[j].starts);
        CHECK(batch[k].periods[j].scores == one.periods[j].scores);
        CHECK(batch[k].periods[j].weights == one.periods[j].weights);
        CHECK(batch[k].periods[j].aggregate == one.periods[j].aggregate);
      }
    }
  }
}

TEST_CASE("no admissible candidate yields a degenerate zero retrieval") {
  std::mt19937_64 rng(4);
  const TimeSeries train = random_series(rng, 1, 30);
  const PatchIndex index = PatchIndex::build(train, 10, 5, 1, {1, 5});
  // Every candidate start lies in [0, 15] and overlaps a query at 8.
  const RetrievalResult r = retrieve(index, extract_patch(train, 8, 10), RetrievalParams{},
                                     ExclusionRule::training(8));
  CHECK(r.degenerate);
  for (const auto& pr : r.periods) {
    CHECK(pr.candidates.empty());
    CHECK(pr.aggregate.cwiseAbs().maxCoeff() == 0.0);
    CHECK(pr.aggregate.cols() == 5 / pr.period);
  }
}

TEST_CASE("random retrieval") {
  std::mt19937_64 rng(6);
  const TimeSeries train = random_series(rng, 1, 60);
  const PatchIndex index = PatchIndex::build(train, 10, 5, 1, {1, 2});
  const Patch q{oracle::random_matrix(rng, 1, 10), 0, 1};
  const Index n = index.size();

  SUBCASE("fixed seed reproduces the draw") {
    const auto a = random_retrieve(index, q, 5, 42, ExclusionRule::inference());
    const auto b = random_retrieve(index, q, 5, 42, ExclusionRule::inference());
    CHECK(a.periods[0].starts == b.periods[0].starts);
    CHECK(a.periods[1].starts == a.periods[0].starts);
    for (double w : a.periods[0].weights) CHECK(w == doctest::Approx(0.2));
  }
  SUBCASE("m beyond the admissible count takes everything admissible") {
    const auto all = random_retrieve(index, q, 1000, 1, ExclusionRule::training(20));
    std::set<Index> got(all.periods[0].starts.begin(), all.periods[0].starts.end());
    std::set<Index> expect;
    for (Index s : index.starts())
      if (!oracle::spans_meet(s, 20, 15)) expect.insert(s);
    CHECK(got == expect);
  }
  SUBCASE("draws are uniform over admissible candidates") {
    std::vector<double> counts(static_cast<std::size_t>(n), 0.0);
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) {
      const auto r = random_retrieve(index, q, 1, static_cast<std::uint64_t>(s), ExclusionRule::inference());
      counts[static_cast<std::size_t>(r.periods[0].candidates[0])] += 1.0;
    }
    const double expect = static_cast<double>(draws) / static_cast<double>(n);
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // n = 46 candidates: 45 degrees of freedom, 0.999 quantile 80.08.
    REQUIRE(n == 46);
    CHECK(chi2 < 80.08);
  }
}

TEST_CASE("retrieval cache") {
  std::mt19937_64 rng(31);
  const TimeSeries train = random_series(rng, 2, 120);
  const PatchIndex index = PatchIndex::build(train, 12, 6, 1, {1, 2});
  RetrievalParams params;
  params.m = 4;
  std::vector<QuerySpec> specs;
  for (Index q = 0; q + 18 <= 120; q += 5)
    specs.push_back({extract_patch(train, q, 12), ExclusionRule::training(q)});
  const RetrievalCache cache = precompute(index, specs, params, 2);
  CHECK(cache.size() == static_cast<Index>(specs.size()));

  SUBCASE("hits are bit-identical to direct calls") {
    for (const auto& s : specs) {
      const RetrievalResult direct = retrieve(index, s.query, params, s.exclusion);
      const RetrievalResult& hit = cache.get(s.query.start);
      for (std::size_t j = 0; j < direct.periods.size(); ++j) {
        CHECK(hit.periods[j].starts == direct.periods[j].starts);
        CHECK(hit.periods[j].weights == direct.periods[j].weights);
        CHECK(hit.periods[j].aggregate == direct.periods[j].aggregate);
      }
    }
  }
  SUBCASE("save and load round trip with the version byte first") {
    const auto path = (std::filesystem::temp_directory_path() / "raft_test_cache.bin").string();
    cache.save(path);
    {
      std::ifstream in(path, std::ios::binary);
      CHECK(in.get() == RetrievalCache::kVersion);
    }
    const RetrievalCache back = RetrievalCache::load(path);
    CHECK(back.fingerprint() == cache.fingerprint());
    CHECK(back.size() == cache.size());
    for (const auto& [start, entry] : cache.entries()) {
      const auto& other = back.get(start);
      for (std::size_t j = 0; j < entry.result.periods.size(); ++j) {
        CHECK(other.periods[j].starts == entry.result.periods[j].starts);
        CHECK(other.periods[j].scores == entry.result.periods[j].scores);
        CHECK(other.periods[j].aggregate == entry.result.periods[j].aggregate);
      }
    }
    std::ofstream(path, std::ios::binary | std::ios::app) << 'x';
    CHECK_THROWS_AS(RetrievalCache::load(path), Error);
  }
  SUBCASE("a changed temperature is a fingerprint mismatch") {
    RetrievalParams other = params;
    other.tau = 0.2;
    CHECK_NOTHROW(cache.check(CacheFingerprint::of(index, params)));
    CHECK_THROWS_WITH_AS(cache.check(CacheFingerprint::of(index, other)), doctest::Contains("tau"), Error);
  }
  SUBCASE("missing entries are an error") {
    CHECK_THROWS_AS(cache.get(1), Error);
  }
}
