#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "coldstart/common.hpp"
#include "coldstart/data.hpp"
#include "coldstart/model.hpp"

namespace coldstart {

// ---------------------------------------------------------------------------
// Scored pairs
// ---------------------------------------------------------------------------

struct ScoredPair {
  uint32_t user = 0;
  uint32_t item = 0;
  double score = 0.0;
  uint8_t label = 0;
};

struct ScoredPairs {
  std::vector<ScoredPair> records;
  std::vector<uint32_t> skipped_items;  // held-out items without a feature row
};

/// Scores every held-out item from its features alone. Dense tasks emit one
/// record per (user, item) pair; the rating-prediction task emits records
/// only for the users that actually rated the item in the test set. One
/// score vector is computed per item, so memory stays bounded.
inline ScoredPairs score_cold_start(const CrbmParams& params,
                                    const ColdStartSplit& split,
                                    const FeatureMatrix& features, Task task,
                                    int like_threshold = 3, size_t threads = 1) {
  const size_t M = split.test.n_users();
  if (params.n_visible() != M)
    throw ValidationError("model has " + std::to_string(params.n_visible()) +
                          " visible units for " + std::to_string(M) + " users");

  TaskDataset test = to_task(split, task, like_threshold).test;

  // Group sparse test pairs by item up front.
  std::vector<std::vector<LabeledPair>> by_item;
  if (test.density == Density::Sparse) {
    for (const auto& p : test.pairs) {
      if (p.item >= by_item.size()) by_item.resize(p.item + 1);
      by_item[p.item].push_back(p);
    }
  }

  ScoredPairs out;
  std::vector<uint32_t> scorable;
  for (uint32_t item : split.held_out_items) {
    if (item < features.rows.size())
      scorable.push_back(item);
    else
      out.skipped_items.push_back(item);
  }

  std::vector<std::vector<ScoredPair>> per_item(scorable.size());
  parallel_for(scorable.size(), threads, [&](size_t i) {
    const uint32_t item = scorable[i];
    const std::vector<double> scores = cold_start_scores(params, features.rows[item]);
    auto& recs = per_item[i];
    if (test.density == Density::Dense) {
      recs.reserve(M);
      for (uint32_t u = 0; u < M; ++u)
        recs.push_back({u, item, scores[u],
                        static_cast<uint8_t>(test.label(u, item))});
    } else {
      if (item >= by_item.size()) return;
      auto pairs = by_item[item];
      std::sort(pairs.begin(), pairs.end(),
                [](const LabeledPair& x, const LabeledPair& y) { return x.user < y.user; });
      recs.reserve(pairs.size());
      for (const auto& p : pairs)
        recs.push_back({p.user, p.item, scores[p.user], p.label});
    }
  });
  for (auto& recs : per_item)
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  return out;
}

// ---------------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------------

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), both rates non-decreasing
  double auc = 0.0;
  size_t n_pos = 0;
  size_t n_neg = 0;
};

/// Sort-and-sweep ROC construction. Tied scores collapse into a single sweep
/// step (one diagonal segment), which makes the trapezoid AUC equal the
/// Mann-Whitney statistic with ties counted 1/2.
inline RocCurve roc(const ScoredPairs& pairs) {
  size_t n_pos = 0, n_neg = 0;
  for (const auto& r : pairs.records) {
    if (!std::isfinite(r.score))
      throw NumericError("roc: non-finite score for user " + std::to_string(r.user));
    (r.label ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    throw ValidationError(std::string("roc: need both classes, ") +
                          (n_pos == 0 ? "no positive" : "no negative") +
                          " labels present");

  std::vector<size_t> order(pairs.records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return pairs.records[x].score > pairs.records[y].score;
  });

  RocCurve curve;
  curve.n_pos = n_pos;
  curve.n_neg = n_neg;
  curve.points.push_back({0.0, 0.0});

  size_t tp = 0, fp = 0;
  double auc2 = 0.0;  // twice the trapezoid area, an exact integer in counts
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    size_t tp_step = 0, fp_step = 0;
    const double score = pairs.records[order[i]].score;
    while (j < order.size() && pairs.records[order[j]].score == score) {
      (pairs.records[order[j]].label ? tp_step : fp_step) += 1;
      ++j;
    }
    // Trapezoid over the tie group: width fp_step, mean height tp + tp_step/2.
    auc2 += static_cast<double>(fp_step) * (2.0 * static_cast<double>(tp) +
                                            static_cast<double>(tp_step));
    tp += tp_step;
    fp += fp_step;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }

  // auc2 and d are exact integers below 2^53. The ratio is snapped to the
  // 2^-53 grid, on which x -> 1 - x is an exact involution, so flipping the
  // labels maps the AUC to exactly 1 - auc. The snap moves the value by at
  // most 2^-54.
  const double d = 2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg);
  const double lo = std::min(auc2, d - auc2);
  double r = lo / d;
  r = (0.5 + r) - 0.5;
  curve.auc = auc2 <= d - auc2 ? r : 1.0 - r;
  return curve;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvalReport {
  Task task = Task::RatingPrediction;
  double auc = 0.0;
  size_t n_pos = 0;
  size_t n_neg = 0;
  size_t n_pairs = 0;
  size_t skipped_items = 0;
  std::string model_hash;
  uint64_t split_seed = 0;
  RocCurve curve;
};

/// Scores the held-out items and reduces the ranking to a single ROC/AUC.
inline EvalReport evaluate(const CrbmParams& params, const ColdStartSplit& split,
                           const FeatureMatrix& features, Task task,
                           int like_threshold = 3, size_t threads = 1,
                           const std::string& model_hash = "") {
  const ScoredPairs pairs =
      score_cold_start(params, split, features, task, like_threshold, threads);
  EvalReport report;
  report.task = task;
  report.curve = roc(pairs);
  report.auc = report.curve.auc;
  report.n_pos = report.curve.n_pos;
  report.n_neg = report.curve.n_neg;
  report.n_pairs = pairs.records.size();
  report.skipped_items = pairs.skipped_items.size();
  report.model_hash = model_hash;
  report.split_seed = split.seed;
  return report;
}

}  // namespace coldstart
