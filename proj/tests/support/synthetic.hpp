#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "coldstart/common.hpp"
#include "coldstart/data.hpp"

// Synthetic datasets with planted feature structure: users belong to latent
// groups, items carry binary features, and the like probability is a logistic
// function of the group-feature interaction. A good content-based model can
// recover the ranking; an untrained one cannot.

namespace testsupport {

struct PlantedConfig {
  size_t n_users = 200;
  size_t n_items = 300;
  size_t n_features = 10;
  size_t n_groups = 4;
  double feature_prob = 0.35;   // per-feature activation probability
  size_t exact_active = 0;      // when > 0, each item gets exactly this many features
  double weight_scale = 4.0;    // magnitude of group-feature weights
  double observe_prob = 0.2;    // per-pair observation probability
  size_t exact_ratings = 0;     // when > 0, draw exactly this many pairs
  bool keep_probabilities = false;  // retain the planted like-probabilities
  uint64_t seed = 11;
};

struct PlantedData {
  coldstart::RatingDataset ratings;
  coldstart::FeatureMatrix features;
  // Row-major users x items, filled only when keep_probabilities is set;
  // lets tests compare a model against the planted ranking ceiling.
  std::vector<double> like_prob;
};

inline PlantedData make_planted(const PlantedConfig& cfg) {
  using namespace coldstart;
  Rng rng(derive_seed(cfg.seed, 0x9A17));

  PlantedData out;
  for (size_t u = 0; u < cfg.n_users; ++u)
    out.ratings.users.add(std::to_string(u + 1));
  for (size_t i = 0; i < cfg.n_items; ++i)
    out.ratings.items.add(std::to_string(i + 1));
  for (size_t k = 0; k < cfg.n_features; ++k)
    out.features.features.add("feat" + std::to_string(k));

  // Item features; every item keeps at least one active feature.
  out.features.rows.assign(cfg.n_items,
                           std::vector<uint8_t>(cfg.n_features, 0));
  for (size_t i = 0; i < cfg.n_items; ++i) {
    if (cfg.exact_active > 0) {
      size_t placed = 0;
      while (placed < std::min(cfg.exact_active, cfg.n_features)) {
        const size_t k = rng.below(cfg.n_features);
        if (!out.features.rows[i][k]) {
          out.features.rows[i][k] = 1;
          ++placed;
        }
      }
      continue;
    }
    bool any = false;
    for (size_t k = 0; k < cfg.n_features; ++k) {
      out.features.rows[i][k] = static_cast<uint8_t>(rng.bernoulli(cfg.feature_prob));
      any = any || out.features.rows[i][k];
    }
    if (!any) out.features.rows[i][rng.below(cfg.n_features)] = 1;
  }

  // Group weights, centered per group so likes stay near balanced.
  std::vector<std::vector<double>> w(cfg.n_groups,
                                     std::vector<double>(cfg.n_features));
  std::vector<double> bias(cfg.n_groups, 0.0);
  for (size_t g = 0; g < cfg.n_groups; ++g)
    for (size_t k = 0; k < cfg.n_features; ++k)
      w[g][k] = rng.bernoulli(0.5) ? cfg.weight_scale : -cfg.weight_scale;
  for (size_t g = 0; g < cfg.n_groups; ++g) {
    double mean = 0.0;
    for (size_t i = 0; i < cfg.n_items; ++i) {
      double s = 0.0;
      for (size_t k = 0; k < cfg.n_features; ++k)
        if (out.features.rows[i][k]) s += w[g][k];
      mean += s;
    }
    bias[g] = -mean / static_cast<double>(cfg.n_items);
  }

  auto prob_of = [&](uint32_t u, uint32_t i) {
    const size_t g = u % cfg.n_groups;
    double s = bias[g];
    for (size_t k = 0; k < cfg.n_features; ++k)
      if (out.features.rows[i][k]) s += w[g][k];
    return sigmoid(s);
  };
  if (cfg.keep_probabilities) {
    out.like_prob.resize(cfg.n_users * cfg.n_items);
    for (uint32_t u = 0; u < cfg.n_users; ++u)
      for (uint32_t i = 0; i < cfg.n_items; ++i)
        out.like_prob[u * cfg.n_items + i] = prob_of(u, i);
  }

  auto rate_pair = [&](uint32_t u, uint32_t i) {
    const bool like = rng.bernoulli(prob_of(u, i));
    const int value = like ? static_cast<int>(4 + rng.below(2))
                           : static_cast<int>(1 + rng.below(3));
    out.ratings.ratings.push_back({u, i, value});
  };

  if (cfg.exact_ratings > 0) {
    std::unordered_set<uint64_t> chosen;
    chosen.reserve(cfg.exact_ratings * 2);
    std::vector<uint64_t> keys;
    keys.reserve(cfg.exact_ratings);
    while (keys.size() < cfg.exact_ratings) {
      const uint32_t u = static_cast<uint32_t>(rng.below(cfg.n_users));
      const uint32_t i = static_cast<uint32_t>(rng.below(cfg.n_items));
      if (chosen.insert(coldstart::pair_key(u, i)).second)
        keys.push_back(coldstart::pair_key(u, i));
    }
    std::sort(keys.begin(), keys.end());
    for (uint64_t key : keys)
      rate_pair(static_cast<uint32_t>(key >> 32),
                static_cast<uint32_t>(key & 0xffffffffu));
  } else {
    for (uint32_t u = 0; u < cfg.n_users; ++u)
      for (uint32_t i = 0; i < cfg.n_items; ++i)
        if (rng.bernoulli(cfg.observe_prob)) rate_pair(u, i);
  }
  return out;
}

}  // namespace testsupport
