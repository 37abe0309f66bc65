#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coldstart/common.hpp"
#include "coldstart/model.hpp"

// Brute-force enumeration oracles for tiny models. Everything here walks all
// 2^(M+N) joint configurations explicitly; nothing reuses the closed-form
// conditionals or any factorized shortcut, so these routines are an
// independent route against which the fast paths are checked.

namespace coldstart::oracle {

inline constexpr size_t kEnumerationBound = 20;  // max M + N

namespace detail {

inline void check_bound(size_t m, size_t n) {
  if (m + n > kEnumerationBound)
    throw ValidationError(
        "enumeration bound exceeded: M+N = " + std::to_string(m + n) + " > " +
        std::to_string(kEnumerationBound) +
        "; use the sampling paths for models this size");
}

inline std::vector<uint8_t> bits(uint64_t mask, size_t n) {
  std::vector<uint8_t> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = static_cast<uint8_t>((mask >> i) & 1);
  return out;
}

}  // namespace detail

/// log Z = log sum over all 2^(M+N) configurations of e^(-E).
inline double log_partition_brute_force(const RbmParams& p) {
  p.check();
  const size_t M = p.n_visible();
  const size_t N = p.n_hidden();
  detail::check_bound(M, N);
  LogSumExp lse;
  for (uint64_t vm = 0; vm < (uint64_t{1} << M); ++vm) {
    const auto v = detail::bits(vm, M);
    for (uint64_t hm = 0; hm < (uint64_t{1} << N); ++hm) {
      const auto h = detail::bits(hm, N);
      lse.add(-energy_rbm(p, v, h));
    }
  }
  return lse.value();
}

/// Z itself. May overflow to +inf for large parameter magnitudes; the
/// log-space variant is what the checks use internally.
inline double partition_brute_force(const RbmParams& p) {
  return std::exp(log_partition_brute_force(p));
}

/// p(v) = (1/Z) sum_h e^(-E(v, h))
inline double marginal_v_brute_force(const RbmParams& p,
                                     std::span<const uint8_t> v,
                                     double log_z) {
  const size_t N = p.n_hidden();
  LogSumExp lse;
  for (uint64_t hm = 0; hm < (uint64_t{1} << N); ++hm) {
    const auto h = detail::bits(hm, N);
    lse.add(-energy_rbm(p, v, h));
  }
  return std::exp(lse.value() - log_z);
}

/// sum_t ln p(v^t) over a list of visible vectors.
inline double log_likelihood_brute_force(
    const RbmParams& p, const std::vector<std::vector<uint8_t>>& visibles) {
  p.check();
  const size_t M = p.n_visible();
  const size_t N = p.n_hidden();
  detail::check_bound(M, N);
  const double log_z = log_partition_brute_force(p);
  double ll = 0.0;
  for (const auto& v : visibles) {
    LogSumExp lse;
    for (uint64_t hm = 0; hm < (uint64_t{1} << N); ++hm) {
      const auto h = detail::bits(hm, N);
      lse.add(-energy_rbm(p, v, h));
    }
    ll += lse.value() - log_z;
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Enumeration-derived conditionals
// ---------------------------------------------------------------------------

/// p(v_m = 1 | h) from sums of e^(-E) over all v with h fixed.
inline double p_v_given_h_enum(const RbmParams& p, std::span<const uint8_t> h,
                               size_t m) {
  const size_t M = p.n_visible();
  detail::check_bound(M, 0);
  LogSumExp num, den;
  for (uint64_t vm = 0; vm < (uint64_t{1} << M); ++vm) {
    const auto v = detail::bits(vm, M);
    const double t = -energy_rbm(p, v, h);
    den.add(t);
    if (v[m]) num.add(t);
  }
  return std::exp(num.value() - den.value());
}

/// p(h_n = 1 | v) from sums of e^(-E) over all h with v fixed.
inline double p_h_given_v_enum(const RbmParams& p, std::span<const uint8_t> v,
                               size_t n) {
  const size_t N = p.n_hidden();
  detail::check_bound(0, N);
  LogSumExp num, den;
  for (uint64_t hm = 0; hm < (uint64_t{1} << N); ++hm) {
    const auto h = detail::bits(hm, N);
    const double t = -energy_rbm(p, v, h);
    den.add(t);
    if (h[n]) num.add(t);
  }
  return std::exp(num.value() - den.value());
}

/// p(h_n = 1 | v, f) from the feature-conditioned energy.
inline double p_h_given_v_f_enum(const CrbmParams& p, std::span<const uint8_t> v,
                                 std::span<const uint8_t> f, size_t n) {
  const size_t N = p.n_hidden();
  detail::check_bound(0, N);
  LogSumExp num, den;
  for (uint64_t hm = 0; hm < (uint64_t{1} << N); ++hm) {
    const auto h = detail::bits(hm, N);
    const double t = -energy_crbm(p, v, h, f);
    den.add(t);
    if (h[n]) num.add(t);
  }
  return std::exp(num.value() - den.value());
}

// ---------------------------------------------------------------------------
// Exact gradient of the mean log-likelihood
// ---------------------------------------------------------------------------

struct ExactGradient {
  std::vector<double> da;  // length M
  std::vector<double> db;  // length N
  Matrix dW;               // M x N
};

/// Gradient of (1/T) sum_t ln p(v^t): data expectations minus model
/// expectations, the latter from full enumeration of p(v, h).
inline ExactGradient exact_gradient(
    const RbmParams& p, const std::vector<std::vector<uint8_t>>& visibles) {
  p.check();
  if (visibles.empty()) throw ValidationError("exact_gradient: no visible vectors");
  const size_t M = p.n_visible();
  const size_t N = p.n_hidden();
  detail::check_bound(M, N);

  ExactGradient g;
  g.da.assign(M, 0.0);
  g.db.assign(N, 0.0);
  g.dW = Matrix(M, N);

  // Data phase: exact hidden expectations given each clamped v.
  for (const auto& v : visibles) {
    for (size_t n = 0; n < N; ++n) {
      const double hn = p_h_given_v(p, v, n);
      g.db[n] += hn;
      for (size_t m = 0; m < M; ++m)
        if (v[m]) g.dW(m, n) += hn;
    }
    for (size_t m = 0; m < M; ++m) g.da[m] += v[m];
  }
  const double inv_t = 1.0 / static_cast<double>(visibles.size());
  for (auto& x : g.da) x *= inv_t;
  for (auto& x : g.db) x *= inv_t;
  for (auto& x : g.dW.data()) x *= inv_t;

  // Model phase: expectations under p(v, h) by enumeration.
  const double log_z = log_partition_brute_force(p);
  for (uint64_t vm = 0; vm < (uint64_t{1} << M); ++vm) {
    const auto v = detail::bits(vm, M);
    for (uint64_t hm = 0; hm < (uint64_t{1} << N); ++hm) {
      const auto h = detail::bits(hm, N);
      const double w = std::exp(-energy_rbm(p, v, h) - log_z);
      for (size_t m = 0; m < M; ++m) {
        if (!v[m]) continue;
        g.da[m] -= w;
        for (size_t n = 0; n < N; ++n)
          if (h[n]) g.dW(m, n) -= w;
      }
      for (size_t n = 0; n < N; ++n)
        if (h[n]) g.db[n] -= w;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Conditional log-likelihood of per-item masked data
//
// Each item is its own RBM restricted to the rows of its raters, with hidden
// biases shifted by U.f. This is the quantity CD training pushes up, exact
// at enumeration scale.
// ---------------------------------------------------------------------------

inline double log_likelihood_item_brute_force(
    const CrbmParams& p, std::span<const uint32_t> raters,
    std::span<const uint8_t> values, std::span<const uint32_t> active_features) {
  p.check();
  const size_t R = raters.size();
  const size_t N = p.n_hidden();
  detail::check_bound(R, N);

  RbmParams sub;
  sub.a.resize(R);
  sub.b = p.base.b;
  sub.W = Matrix(R, N);
  for (size_t r = 0; r < R; ++r) {
    sub.a[r] = p.base.a[raters[r]];
    const auto w = p.base.W.row(raters[r]);
    for (size_t n = 0; n < N; ++n) sub.W(r, n) = w[n];
  }
  for (uint32_t k : active_features) {
    const auto u = p.U.row(k);
    for (size_t n = 0; n < N; ++n) sub.b[n] += u[n];
  }

  std::vector<uint8_t> v(values.begin(), values.end());
  return log_likelihood_brute_force(sub, {v});
}

}  // namespace coldstart::oracle
