#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "coldstart/common.hpp"
#include "coldstart/data.hpp"
#include "coldstart/model.hpp"

namespace coldstart {

// ---------------------------------------------------------------------------
// Feature embeddings
// ---------------------------------------------------------------------------

/// A feature's weights to every hidden unit: row k of U. Features whose rows
/// are close received similar hidden responses, so clustering these vectors
/// groups actors and genres that behave alike.
struct FeatureEmbedding {
  std::string label;
  std::vector<double> vec;  // length N
};

inline std::vector<FeatureEmbedding> feature_embeddings(
    const CrbmParams& params, const FeatureMatrix& features) {
  if (features.n_features() != params.n_features())
    throw ValidationError("feature matrix has " +
                          std::to_string(features.n_features()) +
                          " features, model has " +
                          std::to_string(params.n_features()));
  std::vector<FeatureEmbedding> out;
  out.reserve(features.n_features());
  for (uint32_t k = 0; k < features.n_features(); ++k) {
    const auto row = params.U.row(k);
    out.push_back({features.features.label(k),
                   std::vector<double>(row.begin(), row.end())});
  }
  return out;
}

/// Scales every embedding to unit L2 norm (zero vectors stay zero). Running
/// k-means on the result clusters by cosine similarity instead of magnitude.
inline std::vector<FeatureEmbedding> normalize_embeddings(
    std::vector<FeatureEmbedding> embeddings) {
  for (auto& e : embeddings) {
    double norm = 0.0;
    for (double x : e.vec) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
      for (auto& x : e.vec) x /= norm;
  }
  return embeddings;
}

// ---------------------------------------------------------------------------
// K-means (Lloyd's algorithm, k-means++ seeding, best-of-restarts)
// ---------------------------------------------------------------------------

struct Clustering {
  size_t k = 0;
  std::vector<uint32_t> assignments;          // per input point
  std::vector<std::vector<double>> centroids; // k vectors
  double inertia = 0.0;                       // sum of squared distances
  std::vector<double> inertia_history;        // winning run, non-increasing
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct KmeansRun {
  std::vector<uint32_t> assignments;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
  std::vector<double> history;
};

/// One seeded Lloyd run over points given in canonical order.
inline KmeansRun kmeans_once(const std::vector<std::vector<double>>& pts, size_t k,
                             uint64_t seed, size_t max_iter) {
  const size_t P = pts.size();
  Rng rng(seed);
  KmeansRun run;

  // k-means++ seeding.
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(pts[rng.below(P)]);
  std::vector<double> d2(P);
  for (size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (size_t i = 0; i < P; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& ctr : centroids) best = std::min(best, sq_dist(pts[i], ctr));
      d2[i] = best;
      total += best;
    }
    double r = rng.uniform01() * total;
    size_t pick = P - 1;
    for (size_t i = 0; i < P; ++i) {
      r -= d2[i];
      if (r < 0 && d2[i] > 0) {
        pick = i;
        break;
      }
    }
    if (d2[pick] == 0)  // roundoff landed on a chosen point; take next distinct
      for (size_t i = 0; i < P; ++i)
        if (d2[i] > 0) {
          pick = i;
          break;
        }
    centroids.push_back(pts[pick]);
  }

  std::vector<uint32_t> assign(P, 0);
  std::vector<uint32_t> prev(P, std::numeric_limits<uint32_t>::max());
  for (size_t iter = 0; iter < max_iter; ++iter) {
    // Assignment phase; ties go to the lowest centroid index.
    double inertia = 0.0;
    for (size_t i = 0; i < P; ++i) {
      double best = std::numeric_limits<double>::infinity();
      uint32_t best_c = 0;
      for (uint32_t c = 0; c < k; ++c) {
        const double d = sq_dist(pts[i], centroids[c]);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      assign[i] = best_c;
      inertia += best;
    }
    run.history.push_back(inertia);
    if (assign == prev) break;
    prev = assign;

    // Update phase.
    std::vector<size_t> counts(k, 0);
    std::vector<std::vector<double>> sums(k,
                                          std::vector<double>(pts[0].size(), 0.0));
    for (size_t i = 0; i < P; ++i) {
      counts[assign[i]] += 1;
      auto& s = sums[assign[i]];
      for (size_t d = 0; d < s.size(); ++d) s[d] += pts[i][d];
    }
    for (uint32_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto& ctr = centroids[c];
      for (size_t d = 0; d < ctr.size(); ++d)
        ctr[d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    // Empty clusters restart from the point farthest from its own centroid.
    for (uint32_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      double far = -1.0;
      size_t far_i = 0;
      for (size_t i = 0; i < P; ++i) {
        const double d = sq_dist(pts[i], centroids[assign[i]]);
        if (d > far) {
          far = d;
          far_i = i;
        }
      }
      centroids[c] = pts[far_i];
    }
  }

  run.assignments = std::move(assign);
  run.centroids = std::move(centroids);
  run.inertia = 0.0;
  for (size_t i = 0; i < P; ++i)
    run.inertia += sq_dist(pts[i], run.centroids[run.assignments[i]]);
  run.history.push_back(run.inertia);
  return run;
}

}  // namespace detail

/// Clusters points with Lloyd's algorithm under squared Euclidean distance.
/// Points are canonicalized (sorted by content) before seeding, so the result
/// does not depend on input order; restarts are independently seeded and the
/// lowest-inertia run wins, ties broken by restart index.
inline Clustering kmeans_points(const std::vector<std::vector<double>>& points,
                                size_t k, uint64_t seed, size_t max_iter = 100,
                                size_t restarts = 8, size_t threads = 1) {
  const size_t P = points.size();
  if (k == 0) throw ValidationError("kmeans: k must be positive");
  if (P == 0) throw ValidationError("kmeans: no points");
  const size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw ValidationError("kmeans: ragged point dimensions");

  std::vector<size_t> canon(P);
  std::iota(canon.begin(), canon.end(), size_t{0});
  std::stable_sort(canon.begin(), canon.end(), [&](size_t a, size_t b) {
    return std::lexicographical_compare(points[a].begin(), points[a].end(),
                                        points[b].begin(), points[b].end());
  });
  std::vector<std::vector<double>> pts;
  pts.reserve(P);
  for (size_t i : canon) pts.push_back(points[i]);

  size_t distinct = 1;
  for (size_t i = 1; i < P; ++i)
    if (pts[i] != pts[i - 1]) ++distinct;
  if (k > distinct)
    throw ValidationError("kmeans: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(distinct) + " distinct points");

  std::vector<detail::KmeansRun> runs(restarts == 0 ? 1 : restarts);
  parallel_for(runs.size(), threads, [&](size_t r) {
    runs[r] = detail::kmeans_once(pts, k, derive_seed(seed, r), max_iter);
  });
  size_t best = 0;
  for (size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;

  Clustering out;
  out.k = k;
  out.centroids = std::move(runs[best].centroids);
  out.inertia = runs[best].inertia;
  out.inertia_history = std::move(runs[best].history);
  out.assignments.assign(P, 0);
  for (size_t i = 0; i < P; ++i)
    out.assignments[canon[i]] = runs[best].assignments[i];
  return out;
}

inline Clustering kmeans(const std::vector<FeatureEmbedding>& embeddings, size_t k,
                         uint64_t seed, size_t max_iter = 100, size_t restarts = 8,
                         size_t threads = 1) {
  std::vector<std::vector<double>> pts;
  pts.reserve(embeddings.size());
  for (const auto& e : embeddings) pts.push_back(e.vec);
  return kmeans_points(pts, k, seed, max_iter, restarts, threads);
}

// ---------------------------------------------------------------------------
// Cluster report
// ---------------------------------------------------------------------------

struct ClusterSummary {
  uint32_t id = 0;
  size_t size = 0;
  std::vector<std::string> top_labels;  // nearest the centroid first
};

struct ClusterReport {
  std::vector<ClusterSummary> clusters;
};

/// Per cluster, the top_n member labels nearest the centroid. Clusters with
/// fewer members than top_n list all of them.
inline ClusterReport cluster_report(const Clustering& c,
                                    const std::vector<FeatureEmbedding>& embeddings,
                                    size_t top_n) {
  if (c.assignments.size() != embeddings.size())
    throw ValidationError("cluster_report: clustering covers " +
                          std::to_string(c.assignments.size()) +
                          " points, got " + std::to_string(embeddings.size()) +
                          " embeddings");
  ClusterReport report;
  for (uint32_t cl = 0; cl < c.k; ++cl) {
    std::vector<std::pair<double, size_t>> members;  // (distance, embedding idx)
    for (size_t i = 0; i < embeddings.size(); ++i)
      if (c.assignments[i] == cl)
        members.push_back({detail::sq_dist(embeddings[i].vec, c.centroids[cl]), i});
    std::sort(members.begin(), members.end(), [&](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first < y.first;
      return embeddings[x.second].label < embeddings[y.second].label;
    });
    ClusterSummary s;
    s.id = cl;
    s.size = members.size();
    for (size_t i = 0; i < members.size() && i < top_n; ++i)
      s.top_labels.push_back(embeddings[members[i].second].label);
    report.clusters.push_back(std::move(s));
  }
  return report;
}

/// Two-column text table: cluster number, comma-separated top labels.
inline std::string cluster_report_text(const ClusterReport& report) {
  std::ostringstream out;
  out << "Cluster | Actors and Genres\n";
  out << "--------+------------------\n";
  for (const auto& c : report.clusters) {
    out << c.id + 1 << " (" << c.size << ")";
    out << " | ";
    for (size_t i = 0; i < c.top_labels.size(); ++i) {
      if (i) out << ", ";
      out << c.top_labels[i];
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace coldstart
