#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "coldstart/common.hpp"

namespace coldstart {

// ---------------------------------------------------------------------------
// Vocabularies and datasets
// ---------------------------------------------------------------------------

/// Ordered id <-> index mapping. Indices follow first appearance.
class Vocabulary {
 public:
  uint32_t add(const std::string& label) {
    auto it = index_.find(label);
    if (it != index_.end()) return it->second;
    const auto idx = static_cast<uint32_t>(labels_.size());
    labels_.push_back(label);
    index_.emplace(labels_.back(), idx);
    return idx;
  }

  std::optional<uint32_t> find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& label(uint32_t idx) const { return labels_.at(idx); }
  const std::vector<std::string>& labels() const { return labels_; }
  size_t size() const { return labels_.size(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, uint32_t> index_;
};

struct Rating {
  uint32_t user = 0;
  uint32_t item = 0;
  int value = 0;  // integer in [1, 5]
};

inline uint64_t pair_key(uint32_t user, uint32_t item) {
  return (static_cast<uint64_t>(user) << 32) | item;
}

/// Sparse (user, item, rating) triples with shared vocabularies.
struct RatingDataset {
  Vocabulary users;
  Vocabulary items;
  std::vector<Rating> ratings;

  size_t n_users() const { return users.size(); }
  size_t n_items() const { return items.size(); }
};

/// Binary item-by-feature matrix. One row per item in the companion
/// item vocabulary; items that came with no feature lines keep an
/// all-zero row and are listed in zero_feature_items.
struct FeatureMatrix {
  Vocabulary features;
  std::vector<std::vector<uint8_t>> rows;
  std::vector<uint32_t> zero_feature_items;
  size_t unknown_item_lines = 0;

  size_t n_features() const { return features.size(); }

  std::vector<uint32_t> active(uint32_t item) const {
    std::vector<uint32_t> out;
    const auto& r = rows.at(item);
    for (uint32_t k = 0; k < r.size(); ++k)
      if (r[k]) out.push_back(k);
    return out;
  }
};

/// Whole-item holdout: every rating of a held-out item lives in test,
/// everything else in train. Vocabularies are shared by both sides.
struct ColdStartSplit {
  RatingDataset train;
  RatingDataset test;
  std::vector<uint32_t> held_out_items;
  uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Task protocols
// ---------------------------------------------------------------------------

enum class Task { OneClassExplicit, OneClassImplicit, RatingPrediction };
enum class Density { Dense, Sparse };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::OneClassExplicit: return "one-class-explicit";
    case Task::OneClassImplicit: return "one-class-implicit";
    case Task::RatingPrediction: return "rating-prediction";
  }
  return "?";
}

inline Task task_from_name(const std::string& s) {
  if (s == "explicit" || s == "one-class-explicit") return Task::OneClassExplicit;
  if (s == "implicit" || s == "one-class-implicit") return Task::OneClassImplicit;
  if (s == "rating" || s == "rating-prediction") return Task::RatingPrediction;
  throw ValidationError("unknown task '" + s + "' (want explicit|implicit|rating)");
}

struct LabeledPair {
  uint32_t user = 0;
  uint32_t item = 0;
  uint8_t label = 0;
};

/// Binary-labeled view of a rating set under one task protocol.
/// Dense tasks are lazy: only positives are stored and label() derives
/// everything else, so the M x T grid is never materialized.
class TaskDataset {
 public:
  Task task = Task::RatingPrediction;
  Density density = Density::Sparse;
  uint32_t n_users = 0;
  std::vector<uint32_t> items;       // covered items, original indices
  std::vector<LabeledPair> pairs;    // Sparse: all labeled pairs; Dense: positives

  size_t pair_count() const {
    return density == Density::Dense ? static_cast<size_t>(n_users) * items.size()
                                     : pairs.size();
  }

  size_t positive_count() const {
    if (density == Density::Dense) return pairs.size();
    size_t n = 0;
    for (const auto& p : pairs) n += p.label;
    return n;
  }

  /// Label of a covered (user, item) pair.
  int label(uint32_t user, uint32_t item) const {
    if (density == Density::Dense)
      return positive_keys_.count(pair_key(user, item)) ? 1 : 0;
    auto it = sparse_keys_.find(pair_key(user, item));
    return it == sparse_keys_.end() ? 0 : it->second;
  }

  bool is_positive(uint32_t user, uint32_t item) const {
    if (density == Density::Dense)
      return positive_keys_.count(pair_key(user, item)) != 0;
    auto it = sparse_keys_.find(pair_key(user, item));
    return it != sparse_keys_.end() && it->second == 1;
  }

  /// Rebuilds the lookup structures after `pairs` is filled.
  void index_pairs() {
    positive_keys_.clear();
    sparse_keys_.clear();
    if (density == Density::Dense) {
      positive_keys_.reserve(pairs.size() * 2);
      for (const auto& p : pairs) positive_keys_.insert(pair_key(p.user, p.item));
    } else {
      sparse_keys_.reserve(pairs.size() * 2);
      for (const auto& p : pairs) sparse_keys_.emplace(pair_key(p.user, p.item), p.label);
    }
  }

 private:
  std::unordered_set<uint64_t> positive_keys_;
  std::unordered_map<uint64_t, uint8_t> sparse_keys_;
};

struct TaskPair {
  TaskDataset train;
  TaskDataset test;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Splits on tab if present, otherwise comma.
inline std::vector<std::string> split_fields(const std::string& line) {
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace detail

struct RatingsParseStats {
  size_t lines = 0;
  size_t duplicate_lines = 0;  // identical (user, item, rating) repeats, dropped
};

/// Reads `user item rating [timestamp]` lines, tab- or comma-separated
/// (MovieLens u.data layout). Identical repeated triples are dropped;
/// two ratings for the same (user, item) pair are a validation error.
inline RatingDataset parse_ratings(const std::filesystem::path& path,
                                   RatingsParseStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ratings file: " + path.string());

  RatingDataset ds;
  std::unordered_map<uint64_t, int> seen;  // pair key -> rating
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_fields(line);
    if (fields.size() != 3 && fields.size() != 4)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected `user, item, rating[, timestamp]`, got " +
                       std::to_string(fields.size()) + " fields");
    int value = 0;
    try {
      size_t used = 0;
      value = std::stoi(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": rating is not an integer: '" + fields[2] + "'");
    }
    if (value < 1 || value > 5)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": rating " + std::to_string(value) +
                            " outside [1,5]");
    const uint32_t u = ds.users.add(fields[0]);
    const uint32_t i = ds.items.add(fields[1]);
    auto [it, inserted] = seen.emplace(pair_key(u, i), value);
    if (!inserted) {
      if (it->second == value) {
        if (stats) ++stats->duplicate_lines;
        continue;
      }
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": duplicate pair (user=" + fields[0] + ", item=" +
                            fields[1] + ") with conflicting ratings");
    }
    ds.ratings.push_back({u, i, value});
  }
  if (stats) stats->lines = lineno;
  return ds;
}

/// Reads `item_id, feature_label` lines (actors, genres, ...). Every item in
/// the vocabulary gets a row; lines for unknown items are counted and skipped.
inline FeatureMatrix parse_features(const std::filesystem::path& path,
                                    const Vocabulary& items) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open features file: " + path.string());

  FeatureMatrix fm;
  std::vector<std::vector<uint32_t>> item_features(items.size());
  std::string line;
  size_t lineno = 0;
  size_t parsed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
    const size_t pos = line.find(sep);
    if (pos == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected `item_id, feature_label`");
    const std::string item_id = detail::trim(std::string_view(line).substr(0, pos));
    const std::string label =
        detail::strip_quotes(detail::trim(std::string_view(line).substr(pos + 1)));
    if (item_id.empty() || label.empty())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": empty item id or feature label");
    ++parsed;
    const auto idx = items.find(item_id);
    if (!idx) {
      ++fm.unknown_item_lines;
      continue;
    }
    item_features[*idx].push_back(fm.features.add(label));
  }
  if (parsed == 0)
    throw ParseError("features file has no feature lines: " + path.string());

  fm.rows.assign(items.size(), std::vector<uint8_t>(fm.features.size(), 0));
  for (uint32_t i = 0; i < items.size(); ++i) {
    for (uint32_t k : item_features[i]) fm.rows[i][k] = 1;
    if (item_features[i].empty()) fm.zero_feature_items.push_back(i);
  }
  return fm;
}

/// The 19 genre flag columns of MovieLens-100K u.item, in file order.
inline const std::array<const char*, 19>& movielens_genre_names() {
  static const std::array<const char*, 19> names = {
      "unknown",   "Action",    "Adventure", "Animation", "Children's",
      "Comedy",    "Crime",     "Documentary", "Drama",   "Fantasy",
      "Film-Noir", "Horror",    "Musical",   "Mystery",   "Romance",
      "Sci-Fi",    "Thriller",  "War",       "Western"};
  return names;
}

/// Reads MovieLens-100K u.item (pipe-separated, last 19 fields are genre
/// flags) into a feature matrix over the given item vocabulary.
inline FeatureMatrix parse_movielens_item_genres(const std::filesystem::path& path,
                                                 const Vocabulary& items) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open u.item file: " + path.string());

  FeatureMatrix fm;
  for (const char* name : movielens_genre_names()) fm.features.add(name);
  fm.rows.assign(items.size(), std::vector<uint8_t>(fm.features.size(), 0));
  std::vector<uint8_t> filled(items.size(), 0);

  std::string line;
  size_t lineno = 0;
  size_t parsed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t pos = line.find('|', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() < 1 + fm.features.size())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected at least " +
                       std::to_string(1 + fm.features.size()) + " '|' fields");
    ++parsed;
    const auto idx = items.find(detail::trim(fields[0]));
    if (!idx) {
      ++fm.unknown_item_lines;
      continue;
    }
    const size_t base = fields.size() - fm.features.size();
    for (uint32_t k = 0; k < fm.features.size(); ++k) {
      const std::string flag = detail::trim(fields[base + k]);
      if (flag != "0" && flag != "1")
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": genre flag is not 0/1: '" + flag + "'");
      fm.rows[*idx][k] = static_cast<uint8_t>(flag == "1");
    }
    filled[*idx] = 1;
  }
  if (parsed == 0) throw ParseError("u.item file has no lines: " + path.string());

  for (uint32_t i = 0; i < items.size(); ++i) {
    bool any = false;
    for (uint8_t f : fm.rows[i]) any = any || f;
    if (!any) fm.zero_feature_items.push_back(i);
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Cold-start split
// ---------------------------------------------------------------------------

/// Holds out `held_out_count` whole items, chosen uniformly at random.
/// Deterministic for a fixed seed.
inline ColdStartSplit split_cold_start(const RatingDataset& data,
                                       size_t held_out_count, uint64_t seed) {
  const size_t T = data.n_items();
  if (held_out_count >= T && !(held_out_count == 0 && T == 0))
    throw ValidationError("held_out_count " + std::to_string(held_out_count) +
                          " must be < item count " + std::to_string(T));

  // Partial Fisher-Yates over the item indices.
  std::vector<uint32_t> order(T);
  for (uint32_t i = 0; i < T; ++i) order[i] = i;
  Rng rng(derive_seed(seed, /*stream=*/0xC01D));
  for (size_t i = 0; i < held_out_count; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(T - i));
    std::swap(order[i], order[j]);
  }
  std::vector<uint32_t> held(order.begin(),
                             order.begin() + static_cast<long>(held_out_count));
  std::sort(held.begin(), held.end());

  std::vector<uint8_t> is_held(T, 0);
  for (uint32_t i : held) is_held[i] = 1;

  ColdStartSplit split;
  split.seed = seed;
  split.held_out_items = std::move(held);
  split.train.users = data.users;
  split.train.items = data.items;
  split.test.users = data.users;
  split.test.items = data.items;
  for (const auto& r : data.ratings) {
    (is_held[r.item] ? split.test : split.train).ratings.push_back(r);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Task transforms
// ---------------------------------------------------------------------------

namespace detail {

inline TaskDataset make_task(Task task, const RatingDataset& side,
                             std::vector<uint32_t> covered_items,
                             int like_threshold) {
  TaskDataset t;
  t.task = task;
  t.n_users = static_cast<uint32_t>(side.n_users());
  t.items = std::move(covered_items);
  switch (task) {
    case Task::OneClassExplicit:
      t.density = Density::Dense;
      for (const auto& r : side.ratings)
        if (r.value > like_threshold) t.pairs.push_back({r.user, r.item, 1});
      break;
    case Task::OneClassImplicit:
      t.density = Density::Dense;
      for (const auto& r : side.ratings) t.pairs.push_back({r.user, r.item, 1});
      break;
    case Task::RatingPrediction:
      t.density = Density::Sparse;
      for (const auto& r : side.ratings)
        t.pairs.push_back(
            {r.user, r.item, static_cast<uint8_t>(r.value > like_threshold)});
      break;
  }
  t.index_pairs();
  return t;
}

}  // namespace detail

/// Applies one of the three task protocols to both sides of a split.
/// Dense tasks cover users x items of their side; the rating-prediction
/// task keeps only observed pairs. `like_threshold` is the cutoff for
/// "likes" (label 1 iff rating > threshold).
inline TaskPair to_task(const ColdStartSplit& split, Task task,
                        int like_threshold = 3) {
  const size_t T = split.train.n_items();
  std::vector<uint8_t> is_held(T, 0);
  for (uint32_t i : split.held_out_items) is_held[i] = 1;
  std::vector<uint32_t> train_items;
  train_items.reserve(T - split.held_out_items.size());
  for (uint32_t i = 0; i < T; ++i)
    if (!is_held[i]) train_items.push_back(i);

  TaskPair out;
  out.train = detail::make_task(task, split.train, std::move(train_items),
                                like_threshold);
  out.test = detail::make_task(task, split.test, split.held_out_items,
                               like_threshold);
  return out;
}

}  // namespace coldstart
