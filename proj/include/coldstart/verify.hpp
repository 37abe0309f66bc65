#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "coldstart/common.hpp"
#include "coldstart/model.hpp"
#include "coldstart/oracle.hpp"

// Randomized self-checks pitting the closed-form model math against the
// enumeration oracles. The CLI `verify` command runs these; the acceptance
// suite reuses them directly.

namespace coldstart::verify {

struct VerifyOptions {
  size_t trials = 100;
  size_t max_visible = 6;
  size_t max_hidden = 6;
  size_t max_features = 4;
  uint64_t seed = 7;
  // Test hook: shifts every closed-form conditional by this amount so the
  // consistency check must fire. Zero in normal operation.
  double sigma_corruption = 0.0;
};

struct CheckResult {
  std::string name;
  size_t trials = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  uint64_t worst_seed = 0;  // instance seed that produced `worst`
  bool passed = false;
};

namespace detail {

inline RbmParams random_rbm(size_t m, size_t n, Rng& rng, double scale = 1.0) {
  RbmParams p;
  p.a.resize(m);
  p.b.resize(n);
  p.W = Matrix(m, n);
  for (auto& x : p.a) x = scale * (2.0 * rng.uniform01() - 1.0);
  for (auto& x : p.b) x = scale * (2.0 * rng.uniform01() - 1.0);
  for (auto& x : p.W.data()) x = scale * (2.0 * rng.uniform01() - 1.0);
  return p;
}

inline CrbmParams random_crbm(size_t m, size_t n, size_t k, Rng& rng,
                              double scale = 1.0) {
  CrbmParams p;
  p.base = random_rbm(m, n, rng, scale);
  p.U = Matrix(k, n);
  for (auto& x : p.U.data()) x = scale * (2.0 * rng.uniform01() - 1.0);
  return p;
}

inline std::vector<uint8_t> random_bits(size_t n, Rng& rng) {
  std::vector<uint8_t> v(n);
  for (auto& x : v) x = static_cast<uint8_t>(rng.bernoulli(0.5));
  return v;
}

}  // namespace detail

/// Probabilities of all joint configurations sum to 1 (checked through the
/// marginal of every visible vector).
inline CheckResult check_normalization(const VerifyOptions& opt) {
  CheckResult res{"normalization", opt.trials, 0.0, 1e-10, 0, false};
  for (size_t t = 0; t < opt.trials; ++t) {
    const uint64_t inst_seed = derive_seed(opt.seed, 0x4E01, t);
    Rng rng(inst_seed);
    const size_t m = 1 + rng.below(opt.max_visible);
    const size_t n = 1 + rng.below(opt.max_hidden);
    const RbmParams p = detail::random_rbm(m, n, rng);
    const double log_z = oracle::log_partition_brute_force(p);
    double total = 0.0;
    for (uint64_t vm = 0; vm < (uint64_t{1} << m); ++vm) {
      std::vector<uint8_t> v(m);
      for (size_t i = 0; i < m; ++i) v[i] = static_cast<uint8_t>((vm >> i) & 1);
      total += oracle::marginal_v_brute_force(p, v, log_z);
    }
    const double err = std::abs(total - 1.0);
    if (err > res.worst) {
      res.worst = err;
      res.worst_seed = inst_seed;
    }
  }
  res.passed = opt.trials == 0 || res.worst <= res.tolerance;
  return res;
}

/// Closed-form conditionals (visible given hidden, hidden given visibles,
/// and the feature-conditioned hidden form) match enumeration-derived ones.
inline CheckResult check_conditionals(const VerifyOptions& opt) {
  CheckResult res{"conditional-consistency", opt.trials, 0.0, 1e-10, 0, false};
  const double delta = opt.sigma_corruption;
  for (size_t t = 0; t < opt.trials; ++t) {
    const uint64_t inst_seed = derive_seed(opt.seed, 0x4E02, t);
    Rng rng(inst_seed);
    const size_t m = 1 + rng.below(opt.max_visible);
    const size_t n = 1 + rng.below(opt.max_hidden);
    const size_t k = 1 + rng.below(opt.max_features);
    const CrbmParams p = detail::random_crbm(m, n, k, rng);
    const auto v = detail::random_bits(m, rng);
    const auto h = detail::random_bits(n, rng);
    const auto f = detail::random_bits(k, rng);

    double err = 0.0;
    for (size_t i = 0; i < m; ++i)
      err = std::max(err, std::abs(p_v_given_h(p.base, h, i) + delta -
                                   oracle::p_v_given_h_enum(p.base, h, i)));
    for (size_t j = 0; j < n; ++j) {
      err = std::max(err, std::abs(p_h_given_v(p.base, v, j) + delta -
                                   oracle::p_h_given_v_enum(p.base, v, j)));
      err = std::max(err, std::abs(p_h_given_v_f(p, v, f, j) + delta -
                                   oracle::p_h_given_v_f_enum(p, v, f, j)));
    }
    if (err > res.worst) {
      res.worst = err;
      res.worst_seed = inst_seed;
    }
  }
  res.passed = opt.trials == 0 || res.worst <= res.tolerance;
  return res;
}

/// exact_gradient matches central finite differences of the enumerated
/// log-likelihood, relative to max(1, magnitude).
inline CheckResult check_gradient(const VerifyOptions& opt) {
  CheckResult res{"gradient-vs-finite-difference", opt.trials, 0.0, 1e-6, 0, false};
  const double h_step = 1e-5;
  for (size_t t = 0; t < opt.trials; ++t) {
    const uint64_t inst_seed = derive_seed(opt.seed, 0x4E03, t);
    Rng rng(inst_seed);
    const size_t m = 1 + rng.below(opt.max_visible);
    const size_t n = 1 + rng.below(opt.max_hidden);
    RbmParams p = detail::random_rbm(m, n, rng);
    const size_t n_vectors = 1 + rng.below(4);
    std::vector<std::vector<uint8_t>> data;
    for (size_t i = 0; i < n_vectors; ++i) data.push_back(detail::random_bits(m, rng));
    const double inv_t = 1.0 / static_cast<double>(data.size());

    const auto g = oracle::exact_gradient(p, data);

    auto central = [&](double& slot) {
      const double saved = slot;
      slot = saved + h_step;
      const double hi = oracle::log_likelihood_brute_force(p, data);
      slot = saved - h_step;
      const double lo = oracle::log_likelihood_brute_force(p, data);
      slot = saved;
      return (hi - lo) / (2.0 * h_step) * inv_t;
    };
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };

    double err = 0.0;
    for (size_t i = 0; i < m; ++i) err = std::max(err, rel(central(p.a[i]), g.da[i]));
    for (size_t j = 0; j < n; ++j) err = std::max(err, rel(central(p.b[j]), g.db[j]));
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j)
        err = std::max(err, rel(central(p.W(i, j)), g.dW(i, j)));
    if (err > res.worst) {
      res.worst = err;
      res.worst_seed = inst_seed;
    }
  }
  res.passed = opt.trials == 0 || res.worst <= res.tolerance;
  return res;
}

inline std::vector<CheckResult> run_all(const VerifyOptions& opt) {
  return {check_normalization(opt), check_conditionals(opt), check_gradient(opt)};
}

}  // namespace coldstart::verify
