#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "coldstart/eval.hpp"
#include "coldstart/training.hpp"
#include "coldstart/verify.hpp"
#include "support/synthetic.hpp"

using namespace coldstart;
using Catch::Matchers::WithinAbs;

namespace {

ScoredPairs make_pairs(const std::vector<std::pair<double, int>>& scored) {
  ScoredPairs out;
  uint32_t u = 0;
  for (const auto& [score, label] : scored)
    out.records.push_back({u++, 0, score, static_cast<uint8_t>(label)});
  return out;
}

// Quadratic-time Mann-Whitney with ties counted one half.
double mann_whitney(const ScoredPairs& pairs) {
  double s = 0.0;
  size_t n_pos = 0, n_neg = 0;
  for (const auto& p : pairs.records) (p.label ? n_pos : n_neg) += 1;
  for (const auto& p : pairs.records) {
    if (!p.label) continue;
    for (const auto& n : pairs.records) {
      if (n.label) continue;
      if (p.score > n.score) s += 1.0;
      else if (p.score == n.score) s += 0.5;
    }
  }
  return s / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ScoredPairs random_fixture(Rng& rng, size_t n, bool force_ties) {
  ScoredPairs out;
  size_t n_pos = 0;
  for (uint32_t i = 0; i < n; ++i) {
    // Coarse grid scores force plenty of exact ties.
    const double score = force_ties
                             ? static_cast<double>(rng.below(16)) / 16.0
                             : rng.uniform01();
    const uint8_t label = static_cast<uint8_t>(rng.bernoulli(0.4));
    n_pos += label;
    out.records.push_back({i, 0, score, label});
  }
  if (n_pos == 0) out.records[0].label = 1;
  if (n_pos == out.records.size()) out.records[0].label = 0;
  return out;
}

}  // namespace

TEST_CASE("roc hand-checked fixtures") {
  SECTION("perfect separation scores AUC 1") {
    const auto c = roc(make_pairs({{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}}));
    CHECK(c.auc == 1.0);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
  }
  SECTION("identical scores collapse to the diagonal") {
    const auto c = roc(make_pairs({{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}}));
    CHECK(c.auc == 0.5);
    REQUIRE(c.points.size() == 2);  // (0,0) and (1,1)
  }
  SECTION("3 of 4 pos-neg pairs ordered correctly gives 0.75") {
    const auto c = roc(make_pairs({{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.6, 0}}));
    CHECK(c.auc == 0.75);
  }
  SECTION("degenerate label sets are rejected by class name") {
    CHECK_THROWS_MATCHES(roc(make_pairs({{0.9, 1}, {0.8, 1}})), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("no negative")));
    CHECK_THROWS_MATCHES(roc(make_pairs({{0.9, 0}})), ValidationError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("no positive")));
  }
}

TEST_CASE("trapezoid AUC equals Mann-Whitney pair counting") {
  Rng rng(606);
  for (int t = 0; t < 100; ++t) {
    const auto pairs = random_fixture(rng, 5 + rng.below(60), t % 2 == 0);
    const auto c = roc(pairs);
    CHECK_THAT(c.auc, WithinAbs(mann_whitney(pairs), 1e-12));
  }
}

TEST_CASE("AUC is invariant under strictly increasing score transforms") {
  Rng rng(707);
  for (int t = 0; t < 25; ++t) {
    const auto pairs = random_fixture(rng, 40, true);
    const double base = roc(pairs).auc;

    auto affine = pairs;
    for (auto& r : affine.records) r.score = 2.0 * r.score + 1.0;
    CHECK(roc(affine).auc == base);

    auto cubic = pairs;
    for (auto& r : cubic.records) r.score = r.score * r.score * r.score;
    CHECK(roc(cubic).auc == base);
  }
}

TEST_CASE("flipping labels maps AUC to exactly one minus AUC") {
  Rng rng(808);
  for (int t = 0; t < 100; ++t) {
    const auto pairs = random_fixture(rng, 5 + rng.below(40), t % 2 == 0);
    auto flipped = pairs;
    for (auto& r : flipped.records) r.label = static_cast<uint8_t>(1 - r.label);
    CHECK(roc(flipped).auc == 1.0 - roc(pairs).auc);
  }
}

TEST_CASE("roc curves are monotone from (0,0) to (1,1)") {
  Rng rng(909);
  for (int t = 0; t < 20; ++t) {
    const auto c = roc(random_fixture(rng, 30, true));
    REQUIRE(c.points.size() >= 2);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
    for (size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
  }
}

namespace {

struct EvalFixture {
  testsupport::PlantedData data;
  ColdStartSplit split;
  CrbmParams params;

  explicit EvalFixture(uint64_t seed) {
    testsupport::PlantedConfig pcfg;
    pcfg.n_users = 12;
    pcfg.n_items = 20;
    pcfg.n_features = 4;
    pcfg.observe_prob = 0.6;
    pcfg.seed = seed;
    data = testsupport::make_planted(pcfg);
    split = split_cold_start(data.ratings, 5, seed);
    TrainConfig cfg;
    cfg.hidden_units = 3;
    cfg.seed = seed;
    params = init_params(12, 3, 4, cfg);
  }
};

}  // namespace

TEST_CASE("score_cold_start pair counts follow the protocol") {
  EvalFixture fx(21);

  SECTION("dense tasks cover users x held-out items") {
    const auto s = score_cold_start(fx.params, fx.split, fx.data.features,
                                    Task::OneClassImplicit);
    CHECK(s.records.size() == 12 * 5);
  }
  SECTION("sparse task covers exactly the observed test ratings") {
    const auto s = score_cold_start(fx.params, fx.split, fx.data.features,
                                    Task::RatingPrediction);
    CHECK(s.records.size() == fx.split.test.ratings.size());
  }
  SECTION("items with all-zero features share the bias-only score vector") {
    auto features = fx.data.features;
    const uint32_t held_a = fx.split.held_out_items[0];
    const uint32_t held_b = fx.split.held_out_items[1];
    features.rows[held_a].assign(features.n_features(), 0);
    features.rows[held_b].assign(features.n_features(), 0);
    const auto s = score_cold_start(fx.params, fx.split, features,
                                    Task::OneClassImplicit);

    std::vector<double> scores_a(12, -1.0), scores_b(12, -1.0);
    for (const auto& r : s.records) {
      if (r.item == held_a) scores_a[r.user] = r.score;
      if (r.item == held_b) scores_b[r.user] = r.score;
    }
    // Identical (featureless) items score identically, from biases alone.
    CHECK(scores_a == scores_b);
    for (uint32_t m = 0; m < 12; ++m) {
      double x = fx.params.base.a[m];
      for (size_t n = 0; n < fx.params.n_hidden(); ++n)
        x += sigmoid(fx.params.base.b[n]) * fx.params.base.W(m, n);
      CHECK(scores_a[m] == sigmoid(x));
    }
  }
  SECTION("items missing a feature row are skipped with a warning") {
    auto features = fx.data.features;
    features.rows.resize(fx.split.held_out_items.back());  // drop the last row
    const auto s = score_cold_start(fx.params, fx.split, features,
                                    Task::OneClassImplicit);
    REQUIRE(s.skipped_items.size() == 1);
    CHECK(s.skipped_items[0] == fx.split.held_out_items.back());
    CHECK(s.records.size() == 12 * 4);
  }
  SECTION("scoring is identical at any thread count") {
    const auto a = score_cold_start(fx.params, fx.split, fx.data.features,
                                    Task::RatingPrediction, 3, 1);
    const auto b = score_cold_start(fx.params, fx.split, fx.data.features,
                                    Task::RatingPrediction, 3, 4);
    REQUIRE(a.records.size() == b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].user == b.records[i].user);
      CHECK(a.records[i].score == b.records[i].score);
    }
  }
}

TEST_CASE("evaluate") {
  EvalFixture fx(22);

  SECTION("reports are deterministic") {
    const auto a = evaluate(fx.params, fx.split, fx.data.features,
                            Task::RatingPrediction);
    const auto b = evaluate(fx.params, fx.split, fx.data.features,
                            Task::RatingPrediction);
    CHECK(a.auc == b.auc);
    CHECK(a.n_pairs == b.n_pairs);
    CHECK(a.split_seed == fx.split.seed);
    CHECK(a.n_pos + a.n_neg == a.n_pairs);
  }

  SECTION("an untrained model on balanced labels sits near AUC 0.5") {
    // Labels are assigned by a fair coin, independent of the scores, over
    // 10^4 pairs; the pooled AUC concentrates tightly around 1/2.
    Rng rng(5005);
    ScoredPairs pairs;
    for (uint32_t i = 0; i < 10000; ++i)
      pairs.records.push_back({i, 0, rng.uniform01(),
                               static_cast<uint8_t>(rng.bernoulli(0.5))});
    const auto c = roc(pairs);
    CHECK_THAT(c.auc, WithinAbs(0.5, 0.05));
  }
}
