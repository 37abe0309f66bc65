#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coldstart/common.hpp"
#include "coldstart/data.hpp"
#include "coldstart/eval.hpp"
#include "coldstart/interpret.hpp"
#include "coldstart/model.hpp"
#include "coldstart/training.hpp"

namespace coldstart {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Filesystem helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write file: " + path.string());
  out << body;
}

/// Content hash of a file, "fnv1a64:<hex>".
inline std::string hash_file(const std::filesystem::path& path) {
  return "fnv1a64:" + hex64(fnv1a64(read_file(path)));
}

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

inline json config_to_json(const TrainConfig& c) {
  return json{{"hidden_units", c.hidden_units},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"epochs", c.epochs},
              {"cd_steps", c.cd_steps},
              {"seed", c.seed},
              {"negative_sample_ratio", c.negative_sample_ratio},
              {"init_scale", c.init_scale},
              {"minibatch_items", c.minibatch_items},
              {"threads", c.threads},
              {"momentum", c.momentum},
              {"lr_decay", c.lr_decay},
              {"like_threshold", c.like_threshold}};
}

inline TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.cd_steps = j.value("cd_steps", c.cd_steps);
  c.seed = j.value("seed", c.seed);
  c.negative_sample_ratio = j.value("negative_sample_ratio", c.negative_sample_ratio);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.minibatch_items = j.value("minibatch_items", c.minibatch_items);
  c.threads = j.value("threads", c.threads);
  c.momentum = j.value("momentum", c.momentum);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.like_threshold = j.value("like_threshold", c.like_threshold);
  return c;
}

/// Stable hash of a config snapshot (thread count excluded: it never changes
/// the result, so two runs differing only in threads share a hash).
inline std::string config_hash(const TrainConfig& c) {
  json j = config_to_json(c);
  j.erase("threads");
  return "fnv1a64:" + hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr const char* kModelFormat = "coldstart-crbm-model";
inline constexpr int kModelVersion = 1;

/// A trained model plus everything needed to score and interpret it.
struct ModelFile {
  CrbmParams params;
  Vocabulary users;
  Vocabulary items;
  Vocabulary features;
  TrainConfig config;      // snapshot of the training configuration
  std::string config_hash; // hash of that snapshot
  std::string task;        // task the model was trained for
  uint64_t split_seed = 0;
};

inline json model_to_json(const ModelFile& m) {
  m.params.check();
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["m"] = m.params.n_visible();
  j["n"] = m.params.n_hidden();
  j["k"] = m.params.n_features();
  j["a"] = m.params.base.a;
  j["b"] = m.params.base.b;
  j["w"] = m.params.base.W.data();  // row-major M x N
  j["u"] = m.params.U.data();       // row-major K x N
  j["users"] = m.users.labels();
  j["items"] = m.items.labels();
  j["features"] = m.features.labels();
  // Thread count is an execution detail and never changes the result, so it
  // stays out of the stored snapshot (runs at any --threads byte-match).
  json cfg = config_to_json(m.config);
  cfg.erase("threads");
  j["config"] = cfg;
  j["config_hash"] = m.config_hash;
  j["task"] = m.task;
  j["split_seed"] = m.split_seed;
  return j;
}

inline ModelFile model_from_json(const json& j) {
  if (j.value("format", "") != kModelFormat)
    throw ParseError("not a " + std::string(kModelFormat) + " file");
  if (j.value("version", -1) != kModelVersion)
    throw ParseError("unsupported model version " +
                     std::to_string(j.value("version", -1)));
  ModelFile m;
  const size_t M = j.at("m").get<size_t>();
  const size_t N = j.at("n").get<size_t>();
  const size_t K = j.at("k").get<size_t>();
  m.params.base.a = j.at("a").get<std::vector<double>>();
  m.params.base.b = j.at("b").get<std::vector<double>>();
  auto w = j.at("w").get<std::vector<double>>();
  auto u = j.at("u").get<std::vector<double>>();
  if (m.params.base.a.size() != M || m.params.base.b.size() != N ||
      w.size() != M * N || u.size() != K * N)
    throw ParseError("model file dimensions are inconsistent");
  m.params.base.W = Matrix(M, N);
  m.params.base.W.data() = std::move(w);
  m.params.U = Matrix(K, N);
  m.params.U.data() = std::move(u);
  for (const auto& s : j.at("users")) m.users.add(s.get<std::string>());
  for (const auto& s : j.at("items")) m.items.add(s.get<std::string>());
  for (const auto& s : j.at("features")) m.features.add(s.get<std::string>());
  if (m.users.size() != M || m.features.size() != K)
    throw ParseError("model file vocabularies do not match dimensions");
  if (j.contains("config")) m.config = config_from_json(j.at("config"));
  m.config_hash = j.value("config_hash", "");
  m.task = j.value("task", "");
  m.split_seed = j.value("split_seed", uint64_t{0});
  m.params.check();
  return m;
}

inline void save_model(const ModelFile& m, const std::filesystem::path& path) {
  write_file(path, model_to_json(m).dump(2) + "\n");
}

inline ModelFile load_model(const std::filesystem::path& path) {
  try {
    return model_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ParseError("bad model file " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Split artifacts
//
// Fixed layout inside a split directory:
//   split.json          seed, vocabularies, held-out item ids, counts
//   train_ratings.tsv   user <tab> item <tab> rating
//   test_ratings.tsv
//   features.csv        item_id,feature_label (one active pair per line)
// ---------------------------------------------------------------------------

inline constexpr const char* kSplitFormat = "coldstart-split";
inline constexpr int kSplitVersion = 1;

inline json split_to_json(const ColdStartSplit& split) {
  std::vector<std::string> held_ids;
  held_ids.reserve(split.held_out_items.size());
  for (uint32_t i : split.held_out_items) held_ids.push_back(split.train.items.label(i));
  return json{{"format", kSplitFormat},
              {"version", kSplitVersion},
              {"seed", split.seed},
              {"users", split.train.users.labels()},
              {"items", split.train.items.labels()},
              {"held_out_items", held_ids},
              {"counts",
               {{"users", split.train.n_users()},
                {"items", split.train.n_items()},
                {"held_out", split.held_out_items.size()},
                {"train_ratings", split.train.ratings.size()},
                {"test_ratings", split.test.ratings.size()}}}};
}

inline std::string ratings_to_tsv(const RatingDataset& ds) {
  std::ostringstream out;
  for (const auto& r : ds.ratings)
    out << ds.users.label(r.user) << '\t' << ds.items.label(r.item) << '\t'
        << r.value << '\n';
  return out.str();
}

inline std::string features_to_csv(const FeatureMatrix& fm, const Vocabulary& items) {
  std::ostringstream out;
  for (uint32_t i = 0; i < items.size(); ++i)
    for (uint32_t k = 0; k < fm.n_features(); ++k)
      if (fm.rows[i][k]) out << items.label(i) << ',' << fm.features.label(k) << '\n';
  return out.str();
}

inline void save_split(const ColdStartSplit& split, const FeatureMatrix& features,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "split.json", split_to_json(split).dump(2) + "\n");
  write_file(dir / "train_ratings.tsv", ratings_to_tsv(split.train));
  write_file(dir / "test_ratings.tsv", ratings_to_tsv(split.test));
  write_file(dir / "features.csv", features_to_csv(features, split.train.items));
}

struct SplitArtifacts {
  ColdStartSplit split;
  FeatureMatrix features;
};

inline SplitArtifacts load_split(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(read_file(dir / "split.json"));
  } catch (const json::exception& e) {
    throw ParseError("bad split manifest in " + dir.string() + ": " + e.what());
  }
  if (j.value("format", "") != kSplitFormat)
    throw ParseError((dir / "split.json").string() + " is not a split manifest");

  SplitArtifacts out;
  auto& split = out.split;
  split.seed = j.at("seed").get<uint64_t>();
  Vocabulary users, items;
  for (const auto& s : j.at("users")) users.add(s.get<std::string>());
  for (const auto& s : j.at("items")) items.add(s.get<std::string>());

  auto read_side = [&](const char* name) {
    RatingDataset ds;
    ds.users = users;
    ds.items = items;
    RatingDataset raw = parse_ratings(dir / name);
    for (const auto& r : raw.ratings) {
      const auto u = users.find(raw.users.label(r.user));
      const auto i = items.find(raw.items.label(r.item));
      if (!u || !i)
        throw ValidationError(std::string(name) +
                              " mentions ids missing from split.json");
      ds.ratings.push_back({*u, *i, r.value});
    }
    return ds;
  };
  split.train = read_side("train_ratings.tsv");
  split.test = read_side("test_ratings.tsv");

  for (const auto& s : j.at("held_out_items")) {
    const auto i = items.find(s.get<std::string>());
    if (!i) throw ValidationError("held-out id missing from item vocabulary");
    split.held_out_items.push_back(*i);
  }
  std::sort(split.held_out_items.begin(), split.held_out_items.end());

  out.features = parse_features(dir / "features.csv", items);
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// JSON lines, one record per epoch.
inline std::string training_report_to_jsonl(const TrainingReport& r) {
  std::ostringstream out;
  for (const auto& e : r.epochs) {
    json j{{"epoch", e.epoch},
           {"recon_error", e.recon_error},
           {"wall_ms", e.wall_ms}};
    if (e.exact_ll) j["exact_ll"] = *e.exact_ll;
    out << j.dump() << '\n';
  }
  return out.str();
}

inline json eval_report_to_json(const EvalReport& r) {
  return json{{"task", task_name(r.task)},
              {"auc", r.auc},
              {"n_pos", r.n_pos},
              {"n_neg", r.n_neg},
              {"n_pairs", r.n_pairs},
              {"skipped_items", r.skipped_items},
              {"model_hash", r.model_hash},
              {"split_seed", r.split_seed}};
}

/// `fpr,tpr` per line, full round-trip precision.
inline std::string roc_to_csv(const RocCurve& curve) {
  std::ostringstream out;
  out << "fpr,tpr\n";
  for (const auto& p : curve.points) {
    json f = p.fpr, t = p.tpr;
    out << f.dump() << ',' << t.dump() << '\n';
  }
  return out.str();
}

inline json cluster_report_to_json(const ClusterReport& report) {
  json arr = json::array();
  for (const auto& c : report.clusters)
    arr.push_back(json{{"cluster_id", c.id}, {"size", c.size},
                       {"top_labels", c.top_labels}});
  return json{{"clusters", arr}};
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

/// One per CLI run: what ran, with which inputs (content-hashed), what came out.
struct RunManifest {
  std::string command;
  json config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, hash
  uint64_t seed = 0;
  std::vector<std::string> outputs;
  double wall_ms = 0.0;
};

inline json manifest_to_json(const RunManifest& m) {
  json inputs = json::object();
  for (const auto& [path, hash] : m.inputs) inputs[path] = hash;
  return json{{"command", m.command}, {"config", m.config},
              {"inputs", inputs},    {"seed", m.seed},
              {"outputs", m.outputs}, {"wall_ms", m.wall_ms}};
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
  write_file(dir / (m.command + "_manifest.json"), manifest_to_json(m).dump(2) + "\n");
}

}  // namespace coldstart
