#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coldstart/common.hpp"

namespace coldstart {

// ---------------------------------------------------------------------------
// Parameters
//
// One tied parameter set serves every item: a[m] biases the visible unit of
// user m, b[n] biases hidden unit n, W is users x hidden. An item's RBM uses
// only the rows of its raters.
// ---------------------------------------------------------------------------

struct RbmParams {
  std::vector<double> a;  // visible biases, length M
  std::vector<double> b;  // hidden biases, length N
  Matrix W;               // M x N

  size_t n_visible() const { return a.size(); }
  size_t n_hidden() const { return b.size(); }

  void check() const {
    if (W.rows() != a.size() || W.cols() != b.size())
      throw ValidationError("RbmParams: W is " + std::to_string(W.rows()) + "x" +
                            std::to_string(W.cols()) + " but |a|=" +
                            std::to_string(a.size()) + ", |b|=" +
                            std::to_string(b.size()));
    if (!all_finite(a) || !all_finite(b) || !W.all_finite())
      throw NumericError("RbmParams: non-finite entries");
  }

  friend bool operator==(const RbmParams&, const RbmParams&) = default;
};

/// RBM plus the directed feature-to-hidden connections U (features x hidden).
struct CrbmParams {
  RbmParams base;
  Matrix U;  // K x N

  size_t n_visible() const { return base.n_visible(); }
  size_t n_hidden() const { return base.n_hidden(); }
  size_t n_features() const { return U.rows(); }

  void check() const {
    base.check();
    if (U.cols() != base.b.size())
      throw ValidationError("CrbmParams: U has " + std::to_string(U.cols()) +
                            " columns but there are " +
                            std::to_string(base.b.size()) + " hidden units");
    if (!U.all_finite()) throw NumericError("CrbmParams: non-finite entries in U");
  }

  friend bool operator==(const CrbmParams&, const CrbmParams&) = default;
};

/// One joint state of the visible and hidden layers.
struct BinaryConfig {
  std::vector<uint8_t> v;
  std::vector<uint8_t> h;
};

namespace detail {

inline void check_dim(size_t got, size_t want, const char* what) {
  if (got != want)
    throw ValidationError(std::string(what) + " has length " +
                          std::to_string(got) + ", expected " +
                          std::to_string(want));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Energies
// ---------------------------------------------------------------------------

/// E(v, h) = -sum_m a_m v_m - sum_n b_n h_n - sum_mn v_m h_n W_mn
inline double energy_rbm(const RbmParams& p, std::span<const uint8_t> v,
                         std::span<const uint8_t> h) {
  detail::check_dim(v.size(), p.n_visible(), "v");
  detail::check_dim(h.size(), p.n_hidden(), "h");
  double e = 0.0;
  for (size_t m = 0; m < v.size(); ++m)
    if (v[m]) e -= p.a[m];
  for (size_t n = 0; n < h.size(); ++n)
    if (h[n]) e -= p.b[n];
  for (size_t m = 0; m < v.size(); ++m) {
    if (!v[m]) continue;
    const auto w = p.W.row(m);
    for (size_t n = 0; n < h.size(); ++n)
      if (h[n]) e -= w[n];
  }
  return e;
}

/// E(v, h, f) = E(v, h) - sum_kn f_k h_n U_kn
inline double energy_crbm(const CrbmParams& p, std::span<const uint8_t> v,
                          std::span<const uint8_t> h,
                          std::span<const uint8_t> f) {
  detail::check_dim(f.size(), p.n_features(), "f");
  double e = energy_rbm(p.base, v, h);
  for (size_t k = 0; k < f.size(); ++k) {
    if (!f[k]) continue;
    const auto u = p.U.row(k);
    for (size_t n = 0; n < h.size(); ++n)
      if (h[n]) e -= u[n];
  }
  return e;
}

inline double energy_rbm(const RbmParams& p, const BinaryConfig& c) {
  return energy_rbm(p, c.v, c.h);
}

inline double energy_crbm(const CrbmParams& p, const BinaryConfig& c,
                          std::span<const uint8_t> f) {
  return energy_crbm(p, c.v, c.h, f);
}

// ---------------------------------------------------------------------------
// Conditionals
// ---------------------------------------------------------------------------

/// p(v_m = 1 | h) = sigma(a_m + sum_n h_n W_mn)
inline double p_v_given_h(const RbmParams& p, std::span<const uint8_t> h,
                          size_t m) {
  detail::check_dim(h.size(), p.n_hidden(), "h");
  if (m >= p.n_visible())
    throw ValidationError("visible index " + std::to_string(m) + " out of range");
  double x = p.a[m];
  const auto w = p.W.row(m);
  for (size_t n = 0; n < h.size(); ++n)
    if (h[n]) x += w[n];
  return sigmoid(x);
}

/// p(h_n = 1 | v) = sigma(b_n + sum_m v_m W_mn)
inline double p_h_given_v(const RbmParams& p, std::span<const uint8_t> v,
                          size_t n) {
  detail::check_dim(v.size(), p.n_visible(), "v");
  if (n >= p.n_hidden())
    throw ValidationError("hidden index " + std::to_string(n) + " out of range");
  double x = p.b[n];
  for (size_t m = 0; m < v.size(); ++m)
    if (v[m]) x += p.W(m, n);
  return sigmoid(x);
}

/// p(h_n = 1 | v, f) = sigma(b_n + sum_m v_m W_mn + sum_k f_k U_kn)
inline double p_h_given_v_f(const CrbmParams& p, std::span<const uint8_t> v,
                            std::span<const uint8_t> f, size_t n) {
  detail::check_dim(v.size(), p.n_visible(), "v");
  detail::check_dim(f.size(), p.n_features(), "f");
  if (n >= p.n_hidden())
    throw ValidationError("hidden index " + std::to_string(n) + " out of range");
  double x = p.base.b[n];
  for (size_t m = 0; m < v.size(); ++m)
    if (v[m]) x += p.base.W(m, n);
  for (size_t k = 0; k < f.size(); ++k)
    if (f[k]) x += p.U(k, n);
  return sigmoid(x);
}

// ---------------------------------------------------------------------------
// Hidden activations restricted to an item's raters.
//
// `raters` lists the visible units present in the batch and `values` their
// binary states. Absent users contribute zero, which is exactly the
// cold-start case when raters is empty.
// ---------------------------------------------------------------------------

inline void hidden_preactivation(const CrbmParams& p,
                                 std::span<const uint32_t> raters,
                                 std::span<const uint8_t> values,
                                 std::span<const uint32_t> active_features,
                                 std::span<double> out) {
  detail::check_dim(out.size(), p.n_hidden(), "out");
  for (size_t n = 0; n < out.size(); ++n) out[n] = p.base.b[n];
  for (size_t r = 0; r < raters.size(); ++r) {
    if (!values[r]) continue;
    const auto w = p.base.W.row(raters[r]);
    for (size_t n = 0; n < out.size(); ++n) out[n] += w[n];
  }
  for (uint32_t k : active_features) {
    const auto u = p.U.row(k);
    for (size_t n = 0; n < out.size(); ++n) out[n] += u[n];
  }
}

// ---------------------------------------------------------------------------
// Cold-start scoring
// ---------------------------------------------------------------------------

/// Deterministic mean-field reconstruction for an unrated item: hidden
/// probabilities are driven by b and U.f alone (no visible input), then every
/// user's visible unit is scored as sigma(a_m + sum_n hhat_n W_mn).
inline std::vector<double> cold_start_scores(const CrbmParams& p,
                                             std::span<const uint8_t> f) {
  detail::check_dim(f.size(), p.n_features(), "f");
  const size_t N = p.n_hidden();
  const size_t M = p.n_visible();

  std::vector<double> hhat(N);
  for (size_t n = 0; n < N; ++n) {
    double x = p.base.b[n];
    for (size_t k = 0; k < f.size(); ++k)
      if (f[k]) x += p.U(k, n);
    hhat[n] = sigmoid(x);
  }

  std::vector<double> scores(M);
  for (size_t m = 0; m < M; ++m) {
    double x = p.base.a[m];
    const auto w = p.base.W.row(m);
    for (size_t n = 0; n < N; ++n) x += hhat[n] * w[n];
    scores[m] = sigmoid(x);
  }
  return scores;
}

}  // namespace coldstart
