#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "coldstart/common.hpp"
#include "coldstart/data.hpp"
#include "coldstart/model.hpp"
#include "coldstart/oracle.hpp"

namespace coldstart {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  size_t hidden_units = 100;
  double learning_rate = 0.05;
  double weight_decay = 0.001;  // L2 shrinkage, applied to U only
  size_t epochs = 50;
  size_t cd_steps = 1;
  uint64_t seed = 1;
  double negative_sample_ratio = 10.0;  // one-class tasks only
  double init_scale = 0.01;
  size_t minibatch_items = 8;   // items per gradient application
  size_t threads = 1;
  double momentum = 0.0;        // off by default
  double lr_decay = 1.0;        // per-epoch learning-rate multiplier, 1 = constant
  int like_threshold = 3;       // rating > threshold counts as a like

  void check() const {
    if (hidden_units == 0) throw ValidationError("hidden_units must be positive");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
      throw ValidationError("learning_rate must be positive and finite");
    if (!(weight_decay >= 0) || !std::isfinite(weight_decay))
      throw ValidationError("weight_decay must be >= 0 and finite");
    if (cd_steps < 1) throw ValidationError("cd_steps must be >= 1");
    if (!(negative_sample_ratio >= 0))
      throw ValidationError("negative_sample_ratio must be >= 0");
    if (!(init_scale >= 0)) throw ValidationError("init_scale must be >= 0");
    if (minibatch_items == 0) throw ValidationError("minibatch_items must be positive");
    if (threads == 0) throw ValidationError("threads must be positive");
    if (!(momentum >= 0 && momentum < 1))
      throw ValidationError("momentum must be in [0, 1)");
    if (!(lr_decay > 0 && lr_decay <= 1))
      throw ValidationError("lr_decay must be in (0, 1]");
  }
};

// Seed streams hanging off TrainConfig::seed.
namespace seed_stream {
inline constexpr uint64_t kInit = 0xF0001;
inline constexpr uint64_t kNegative = 0xF0002;
inline constexpr uint64_t kCd = 0xF0003;
}  // namespace seed_stream

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// One item's training view: the users that have a value for it (its raters),
/// their binary states, and the item's active content features.
struct ItemBatch {
  uint32_t item = 0;
  std::vector<uint32_t> raters;          // visible units present, ascending
  std::vector<uint8_t> values;           // binary state per rater
  std::vector<uint32_t> active_features; // k with f_k = 1
};

/// Groups a sparse task's pairs into per-item batches, in ascending item
/// order with raters ascending within each batch. Covered items that have no
/// pairs produce no batch; the caller counts them as skipped.
inline std::vector<ItemBatch> build_item_batches(const TaskDataset& task,
                                                 const FeatureMatrix& features) {
  if (task.density != Density::Sparse)
    throw ValidationError("build_item_batches wants a sparse task; "
                          "run negative_sample on dense tasks first");
  std::vector<std::vector<LabeledPair>> by_item;
  for (const auto& p : task.pairs) {
    if (p.item >= by_item.size()) by_item.resize(p.item + 1);
    by_item[p.item].push_back(p);
  }
  std::vector<ItemBatch> batches;
  for (uint32_t item : task.items) {
    if (item >= by_item.size() || by_item[item].empty()) continue;
    auto& pairs = by_item[item];
    std::sort(pairs.begin(), pairs.end(),
              [](const LabeledPair& x, const LabeledPair& y) { return x.user < y.user; });
    ItemBatch b;
    b.item = item;
    b.raters.reserve(pairs.size());
    b.values.reserve(pairs.size());
    for (const auto& p : pairs) {
      b.raters.push_back(p.user);
      b.values.push_back(p.label);
    }
    b.active_features = features.active(item);
    batches.push_back(std::move(b));
  }
  std::sort(batches.begin(), batches.end(),
            [](const ItemBatch& x, const ItemBatch& y) { return x.item < y.item; });
  return batches;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Sparse CD contribution of a single item batch. da and dW cover only the
/// batch's raters; hdiff = <h>_data - <h>_T1 serves both db and the active
/// rows of dU (they receive the same vector).
struct ItemGradient {
  std::vector<double> da;     // per rater
  std::vector<double> hdiff;  // length N
  std::vector<double> dW;     // raters x N, row-major
  double recon_sq = 0.0;
  size_t n_visible = 0;
};

/// Dense accumulator over a minibatch of item gradients.
struct GradientAccumulator {
  std::vector<double> da;  // length M
  std::vector<double> db;  // length N
  Matrix dW;               // M x N
  Matrix dU;               // K x N
  size_t count = 0;        // items accumulated
  double recon_sq_sum = 0.0;
  size_t visible_seen = 0;

  GradientAccumulator() = default;
  GradientAccumulator(size_t m, size_t n, size_t k)
      : da(m, 0.0), db(n, 0.0), dW(m, n), dU(k, n) {}

  void add(const ItemBatch& batch, const ItemGradient& g) {
    const size_t N = db.size();
    for (size_t r = 0; r < batch.raters.size(); ++r) {
      const uint32_t m = batch.raters[r];
      da[m] += g.da[r];
      auto wrow = dW.row(m);
      const double* src = g.dW.data() + r * N;
      for (size_t n = 0; n < N; ++n) wrow[n] += src[n];
    }
    for (size_t n = 0; n < N; ++n) db[n] += g.hdiff[n];
    for (uint32_t k : batch.active_features) {
      auto urow = dU.row(k);
      for (size_t n = 0; n < N; ++n) urow[n] += g.hdiff[n];
    }
    ++count;
    recon_sq_sum += g.recon_sq;
    visible_seen += g.n_visible;
  }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Zero biases; W then U filled with i.i.d. Gaussians of standard deviation
/// init_scale, in row-major order, so a fixed seed pins every entry.
inline CrbmParams init_params(size_t n_visible, size_t n_hidden, size_t n_features,
                              const TrainConfig& config) {
  if (n_visible == 0 || n_hidden == 0)
    throw ValidationError("init_params: sizes must be positive");
  CrbmParams p;
  p.base.a.assign(n_visible, 0.0);
  p.base.b.assign(n_hidden, 0.0);
  p.base.W = Matrix(n_visible, n_hidden);
  p.U = Matrix(n_features, n_hidden);
  Rng rng(derive_seed(config.seed, seed_stream::kInit));
  for (auto& w : p.base.W.data()) w = config.init_scale * rng.gaussian();
  for (auto& u : p.U.data()) u = config.init_scale * rng.gaussian();
  return p;
}

// ---------------------------------------------------------------------------
// Contrastive divergence
// ---------------------------------------------------------------------------

/// One CD-k pass over a single item batch. Hidden statistics use
/// probabilities in both phases; the visible reconstruction is sampled.
inline ItemGradient cd_item(const CrbmParams& p, const ItemBatch& batch, Rng& rng,
                            size_t cd_steps = 1) {
  const size_t R = batch.raters.size();
  const size_t N = p.n_hidden();

  ItemGradient g;
  g.da.assign(R, 0.0);
  g.hdiff.assign(N, 0.0);
  g.dW.assign(R * N, 0.0);
  g.n_visible = R;

  // Hidden pre-activation shared by both phases: b + U.f.
  std::vector<double> base_act(N);
  for (size_t n = 0; n < N; ++n) base_act[n] = p.base.b[n];
  for (uint32_t k : batch.active_features) {
    const auto u = p.U.row(k);
    for (size_t n = 0; n < N; ++n) base_act[n] += u[n];
  }

  auto hidden_probs = [&](const std::vector<uint8_t>& v, std::vector<double>& out) {
    out = base_act;
    for (size_t r = 0; r < R; ++r) {
      if (!v[r]) continue;
      const auto w = p.base.W.row(batch.raters[r]);
      for (size_t n = 0; n < N; ++n) out[n] += w[n];
    }
    for (size_t n = 0; n < N; ++n) out[n] = sigmoid(out[n]);
  };

  std::vector<double> h_data(N), h_neg(N);
  std::vector<uint8_t> v_cur(batch.values.begin(), batch.values.end());
  hidden_probs(v_cur, h_data);

  std::vector<uint8_t> h_state(N);
  for (size_t n = 0; n < N; ++n)
    h_state[n] = static_cast<uint8_t>(rng.bernoulli(h_data[n]));

  std::vector<uint8_t> v_next(R);
  for (size_t step = 0; step < cd_steps; ++step) {
    for (size_t r = 0; r < R; ++r) {
      const uint32_t m = batch.raters[r];
      double x = p.base.a[m];
      const auto w = p.base.W.row(m);
      for (size_t n = 0; n < N; ++n)
        if (h_state[n]) x += w[n];
      v_next[r] = static_cast<uint8_t>(rng.bernoulli(sigmoid(x)));
    }
    v_cur = v_next;
    hidden_probs(v_cur, h_neg);
    if (step + 1 < cd_steps)
      for (size_t n = 0; n < N; ++n)
        h_state[n] = static_cast<uint8_t>(rng.bernoulli(h_neg[n]));
  }

  for (size_t n = 0; n < N; ++n) g.hdiff[n] = h_data[n] - h_neg[n];
  for (size_t r = 0; r < R; ++r) {
    const double v0 = batch.values[r];
    const double v1 = v_cur[r];
    g.da[r] = v0 - v1;
    g.recon_sq += (v0 - v1) * (v0 - v1);
    double* wrow = g.dW.data() + r * N;
    for (size_t n = 0; n < N; ++n) wrow[n] = v0 * h_data[n] - v1 * h_neg[n];
  }
  return g;
}

/// Single-batch accumulator form of cd_item.
inline GradientAccumulator cd_step(const CrbmParams& p, const ItemBatch& batch,
                                   Rng& rng, size_t cd_steps = 1) {
  GradientAccumulator acc(p.n_visible(), p.n_hidden(), p.n_features());
  acc.add(batch, cd_item(p, batch, rng, cd_steps));
  return acc;
}

// ---------------------------------------------------------------------------
// Updates
// ---------------------------------------------------------------------------

namespace detail {

/// theta += eps * (g / count) for a, b, W; U += eps * (g_U / count - lambda U).
inline void apply_core(CrbmParams& p, const GradientAccumulator& g, double lr,
                       double weight_decay) {
  if (g.count < 1) throw ValidationError("apply_updates: empty accumulator");
  const double scale = lr / static_cast<double>(g.count);
  for (size_t m = 0; m < p.base.a.size(); ++m) p.base.a[m] += scale * g.da[m];
  for (size_t n = 0; n < p.base.b.size(); ++n) p.base.b[n] += scale * g.db[n];
  auto& w = p.base.W.data();
  const auto& dw = g.dW.data();
  for (size_t i = 0; i < w.size(); ++i) w[i] += scale * dw[i];
  auto& u = p.U.data();
  const auto& du = g.dU.data();
  for (size_t i = 0; i < u.size(); ++i)
    u[i] += lr * (du[i] / static_cast<double>(g.count) - weight_decay * u[i]);
}

inline void check_updated(const CrbmParams& p) {
  if (!all_finite(p.base.a) || !all_finite(p.base.b) || !p.base.W.all_finite() ||
      !p.U.all_finite())
    throw NumericError(
        "parameter update produced non-finite values; lower the learning rate "
        "or raise weight decay");
}

}  // namespace detail

inline CrbmParams apply_updates(const CrbmParams& p, const GradientAccumulator& g,
                                const TrainConfig& config) {
  CrbmParams out = p;
  detail::apply_core(out, g, config.learning_rate, config.weight_decay);
  detail::check_updated(out);
  return out;
}

/// In-place updater used by the trainer; carries momentum velocities when
/// momentum > 0 and otherwise matches apply_updates exactly.
class ParamUpdater {
 public:
  ParamUpdater(size_t m, size_t n, size_t k, const TrainConfig& config)
      : config_(config) {
    if (config.momentum > 0) {
      va_.assign(m, 0.0);
      vb_.assign(n, 0.0);
      vW_ = Matrix(m, n);
      vU_ = Matrix(k, n);
    }
  }

  void update(CrbmParams& p, const GradientAccumulator& g, double lr) {
    if (config_.momentum == 0) {
      detail::apply_core(p, g, lr, config_.weight_decay);
      detail::check_updated(p);
      return;
    }
    if (g.count < 1) throw ValidationError("apply_updates: empty accumulator");
    const double mom = config_.momentum;
    const double scale = lr / static_cast<double>(g.count);
    for (size_t m = 0; m < va_.size(); ++m) {
      va_[m] = mom * va_[m] + scale * g.da[m];
      p.base.a[m] += va_[m];
    }
    for (size_t n = 0; n < vb_.size(); ++n) {
      vb_[n] = mom * vb_[n] + scale * g.db[n];
      p.base.b[n] += vb_[n];
    }
    auto& w = p.base.W.data();
    auto& vw = vW_.data();
    const auto& dw = g.dW.data();
    for (size_t i = 0; i < w.size(); ++i) {
      vw[i] = mom * vw[i] + scale * dw[i];
      w[i] += vw[i];
    }
    auto& u = p.U.data();
    auto& vu = vU_.data();
    const auto& du = g.dU.data();
    for (size_t i = 0; i < u.size(); ++i) {
      vu[i] = mom * vu[i] +
              lr * (du[i] / static_cast<double>(g.count) -
                    config_.weight_decay * u[i]);
      u[i] += vu[i];
    }
    detail::check_updated(p);
  }

 private:
  TrainConfig config_;
  std::vector<double> va_, vb_;
  Matrix vW_, vU_;
};

// ---------------------------------------------------------------------------
// Negative sampling
// ---------------------------------------------------------------------------

/// Turns a dense one-class task into a sparse one: all positives plus
/// ceil(ratio * positives) zero-labeled pairs drawn uniformly without
/// replacement from the non-positive pairs. If fewer non-positive pairs
/// exist than requested, the sample clamps and *clamped is set.
inline TaskDataset negative_sample(const TaskDataset& task, double ratio, Rng& rng,
                                   bool* clamped = nullptr) {
  if (task.density != Density::Dense)
    throw ValidationError("negative_sample applies to dense one-class tasks");
  if (ratio < 0) throw ValidationError("negative sample ratio must be >= 0");
  if (clamped) *clamped = false;

  const size_t domain = static_cast<size_t>(task.n_users) * task.items.size();
  const size_t n_pos = task.pairs.size();
  const size_t available = domain - n_pos;
  size_t need = static_cast<size_t>(
      std::ceil(ratio * static_cast<double>(n_pos)));
  if (need > available) {
    need = available;
    if (clamped) *clamped = true;
  }

  TaskDataset out;
  out.task = task.task;
  out.density = Density::Sparse;
  out.n_users = task.n_users;
  out.items = task.items;
  out.pairs.reserve(n_pos + need);
  for (const auto& p : task.pairs) out.pairs.push_back({p.user, p.item, 1});

  if (need > 0) {
    std::unordered_set<uint64_t> taken;
    taken.reserve(need * 2);
    if (need * 2 >= available) {
      // Dense regime: enumerate the complement and partially shuffle it.
      std::vector<uint64_t> pool;
      pool.reserve(available);
      for (uint32_t u = 0; u < task.n_users; ++u)
        for (uint32_t item : task.items)
          if (!task.is_positive(u, item)) pool.push_back(pair_key(u, item));
      for (size_t i = 0; i < need; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        out.pairs.push_back({static_cast<uint32_t>(pool[i] >> 32),
                             static_cast<uint32_t>(pool[i] & 0xffffffffu), 0});
      }
    } else {
      while (taken.size() < need) {
        const uint32_t u = static_cast<uint32_t>(rng.below(task.n_users));
        const uint32_t item =
            task.items[static_cast<size_t>(rng.below(task.items.size()))];
        if (task.is_positive(u, item)) continue;
        if (taken.insert(pair_key(u, item)).second)
          out.pairs.push_back({u, item, 0});
      }
    }
  }
  out.index_pairs();
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct EpochRecord {
  size_t epoch = 0;
  double recon_error = 0.0;  // mean squared visible reconstruction error
  double wall_ms = 0.0;
  std::optional<double> exact_ll;  // filled when M + N is enumeration-sized
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  size_t skipped_batches = 0;  // covered items that had no training pairs
  bool negative_sample_clamped = false;
  bool diverged = false;
  size_t diverged_at_epoch = 0;
};

struct TrainResult {
  CrbmParams params;
  TrainingReport report;
};

/// Fits a CRBM with one-step (or k-step) contrastive divergence over
/// per-item batches. Dense one-class tasks are first reduced to positives
/// plus sampled negatives; the rating-prediction task trains on observed
/// pairs only. Deterministic for a fixed (seed, config, data) at any thread
/// count: per-item randomness is seeded by (seed, epoch, item) and gradients
/// reduce in item order.
inline TrainResult train(const ColdStartSplit& split, const FeatureMatrix& features,
                         Task task, const TrainConfig& config) {
  config.check();
  const size_t M = split.train.n_users();
  const size_t T = split.train.n_items();
  const size_t N = config.hidden_units;
  const size_t K = features.n_features();
  if (M == 0 || T == 0) throw ValidationError("train: empty dataset");
  if (features.rows.size() != T)
    throw ValidationError("train: feature matrix has " +
                          std::to_string(features.rows.size()) +
                          " rows for " + std::to_string(T) + " items");

  TaskPair tasks = to_task(split, task, config.like_threshold);
  TrainingReport report;

  TaskDataset sparse_task;
  if (tasks.train.density == Density::Dense) {
    Rng neg_rng(derive_seed(config.seed, seed_stream::kNegative));
    bool clamped = false;
    sparse_task = negative_sample(tasks.train, config.negative_sample_ratio,
                                  neg_rng, &clamped);
    report.negative_sample_clamped = clamped;
  } else {
    sparse_task = std::move(tasks.train);
  }

  std::vector<ItemBatch> batches = build_item_batches(sparse_task, features);
  report.skipped_batches = sparse_task.items.size() - batches.size();

  CrbmParams params = init_params(M, N, K, config);
  if (config.epochs == 0) return {std::move(params), std::move(report)};

  const bool track_exact_ll = M + N <= oracle::kEnumerationBound;
  const uint64_t cd_base = derive_seed(config.seed, seed_stream::kCd);
  ParamUpdater updater(M, N, K, config);
  std::vector<ItemGradient> grads(batches.size());

  double epoch_lr = config.learning_rate;
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const CrbmParams snapshot = params;
    EpochRecord rec;
    rec.epoch = epoch;
    double recon_sq = 0.0;
    size_t visible_seen = 0;
    try {
      for (size_t start = 0; start < batches.size();
           start += config.minibatch_items) {
        const size_t end = std::min(start + config.minibatch_items, batches.size());
        parallel_for(end - start, config.threads, [&](size_t off) {
          const size_t i = start + off;
          Rng rng(derive_seed(cd_base, epoch, batches[i].item));
          grads[i] = cd_item(params, batches[i], rng, config.cd_steps);
        });
        GradientAccumulator acc(M, N, K);
        for (size_t i = start; i < end; ++i) acc.add(batches[i], grads[i]);
        recon_sq += acc.recon_sq_sum;
        visible_seen += acc.visible_seen;
        updater.update(params, acc, epoch_lr);
      }
    } catch (const NumericError&) {
      params = snapshot;  // keep the last epoch that finished cleanly
      report.diverged = true;
      report.diverged_at_epoch = epoch;
      break;
    }
    rec.recon_error =
        visible_seen ? recon_sq / static_cast<double>(visible_seen) : 0.0;
    if (track_exact_ll) {
      double ll = 0.0;
      for (const auto& b : batches)
        ll += oracle::log_likelihood_item_brute_force(params, b.raters, b.values,
                                                      b.active_features);
      if (std::isfinite(ll)) rec.exact_ll = ll;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - started)
                      .count();
    report.epochs.push_back(rec);
    epoch_lr *= config.lr_decay;
  }
  return {std::move(params), std::move(report)};
}

/// Exact conditional log-likelihood of a batch list under the current
/// parameters; the quantity reported per epoch on enumeration-sized models.
inline double exact_log_likelihood(const CrbmParams& params,
                                   const std::vector<ItemBatch>& batches) {
  double ll = 0.0;
  for (const auto& b : batches)
    ll += oracle::log_likelihood_item_brute_force(params, b.raters, b.values,
                                                  b.active_features);
  return ll;
}

}  // namespace coldstart
