// Command-line front end: prepare data splits, train, evaluate, predict for
// new items, cluster the feature weights, and verify the model math against
// brute-force oracles.
//
// Exit codes: 0 success, 2 input/config error, 3 numeric failure,
// 4 verification failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coldstart/coldstart.hpp"

namespace fs = std::filesystem;
using namespace coldstart;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerify = 4;

class WallClock {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// COLDSTART_CRBM_DATA provides default input locations.
fs::path data_root() {
  if (const char* env = std::getenv("COLDSTART_CRBM_DATA")) return fs::path(env);
  return {};
}

std::vector<fs::path> split_input_files(const fs::path& dir) {
  return {dir / "split.json", dir / "train_ratings.tsv", dir / "test_ratings.tsv",
          dir / "features.csv"};
}

void add_inputs(RunManifest& m, const std::vector<fs::path>& paths) {
  for (const auto& p : paths) m.inputs.push_back({p.string(), hash_file(p)});
}

struct PrepareArgs {
  std::string ratings;
  std::string features;
  std::string movielens_item;
  size_t held_out = 333;
  uint64_t seed = 1;
  std::string out = "prepared";
};

int cmd_prepare(const PrepareArgs& args) {
  WallClock clock;
  fs::path ratings_path = args.ratings.empty() ? data_root() / "u.data"
                                               : fs::path(args.ratings);
  fs::path features_path;
  bool movielens = false;
  if (!args.features.empty()) {
    features_path = args.features;
  } else if (!args.movielens_item.empty()) {
    features_path = args.movielens_item;
    movielens = true;
  } else if (!data_root().empty()) {
    features_path = data_root() / "u.item";
    movielens = true;
  } else {
    throw ValidationError("no features given: pass --features or --movielens-item");
  }

  const RatingDataset data = parse_ratings(ratings_path);
  const FeatureMatrix features =
      movielens ? parse_movielens_item_genres(features_path, data.items)
                : parse_features(features_path, data.items);
  if (features.unknown_item_lines > 0)
    std::cerr << "warning: " << features.unknown_item_lines
              << " feature lines named unknown items and were skipped\n";
  if (!features.zero_feature_items.empty())
    std::cerr << "warning: " << features.zero_feature_items.size()
              << " items have no features (bias-only cold-start scores)\n";

  const ColdStartSplit split = split_cold_start(data, args.held_out, args.seed);
  const fs::path out(args.out);
  save_split(split, features, out);

  RunManifest manifest;
  manifest.command = "prepare";
  manifest.config = json{{"held_out", args.held_out},
                         {"ratings", ratings_path.string()},
                         {"features", features_path.string()},
                         {"movielens_genres", movielens}};
  manifest.seed = args.seed;
  add_inputs(manifest, {ratings_path, features_path});
  for (const auto& p : split_input_files(out)) manifest.outputs.push_back(p.string());
  manifest.wall_ms = clock.ms();
  write_manifest(manifest, out);

  std::cout << "prepared split: " << split.train.n_users() << " users, "
            << split.train.n_items() << " items, " << split.held_out_items.size()
            << " held out, " << split.train.ratings.size() << " train / "
            << split.test.ratings.size() << " test ratings -> " << out.string()
            << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string split_dir;
  std::string task = "rating";
  std::string config_file;
  std::string out = "trained";
  TrainConfig config;
  // Remember which flags were set so they override the config file.
  bool lr_set = false, decay_set = false, hidden_set = false, epochs_set = false,
       neg_set = false, seed_set = false, threads_set = false, cd_set = false,
       like_set = false, momentum_set = false, lr_decay_set = false,
       init_set = false, minibatch_set = false;
};

int cmd_train(const TrainArgs& args) {
  WallClock clock;
  const Task task = task_from_name(args.task);

  TrainConfig cfg;
  if (!args.config_file.empty()) {
    try {
      cfg = config_from_json(json::parse(read_file(args.config_file)));
    } catch (const json::exception& e) {
      throw ParseError("bad config file " + args.config_file + ": " + e.what());
    }
  }
  if (args.hidden_set) cfg.hidden_units = args.config.hidden_units;
  if (args.lr_set) cfg.learning_rate = args.config.learning_rate;
  if (args.decay_set) cfg.weight_decay = args.config.weight_decay;
  if (args.epochs_set) cfg.epochs = args.config.epochs;
  if (args.neg_set) cfg.negative_sample_ratio = args.config.negative_sample_ratio;
  if (args.seed_set) cfg.seed = args.config.seed;
  if (args.threads_set) cfg.threads = args.config.threads;
  if (args.cd_set) cfg.cd_steps = args.config.cd_steps;
  if (args.like_set) cfg.like_threshold = args.config.like_threshold;
  if (args.momentum_set) cfg.momentum = args.config.momentum;
  if (args.lr_decay_set) cfg.lr_decay = args.config.lr_decay;
  if (args.init_set) cfg.init_scale = args.config.init_scale;
  if (args.minibatch_set) cfg.minibatch_items = args.config.minibatch_items;
  cfg.check();

  const SplitArtifacts artifacts = load_split(args.split_dir);
  const TrainResult result = train(artifacts.split, artifacts.features, task, cfg);

  ModelFile model;
  model.params = result.params;
  model.users = artifacts.split.train.users;
  model.items = artifacts.split.train.items;
  model.features = artifacts.features.features;
  model.config = cfg;
  model.config_hash = config_hash(cfg);
  model.task = task_name(task);
  model.split_seed = artifacts.split.seed;

  const fs::path out(args.out);
  save_model(model, out / "model.json");
  write_file(out / "training_report.jsonl", training_report_to_jsonl(result.report));

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = config_to_json(cfg);
  manifest.config["task"] = task_name(task);
  manifest.seed = cfg.seed;
  add_inputs(manifest, split_input_files(args.split_dir));
  manifest.outputs = {(out / "model.json").string(),
                      (out / "training_report.jsonl").string()};
  manifest.wall_ms = clock.ms();
  write_manifest(manifest, out);

  if (result.report.diverged) {
    std::cerr << "numeric blow-up in epoch " << result.report.diverged_at_epoch
              << "; wrote the last completed epoch's parameters\n";
    return kExitNumeric;
  }
  std::cout << "trained " << task_name(task) << " model ("
            << result.report.epochs.size() << " epochs";
  if (!result.report.epochs.empty())
    std::cout << ", final recon error " << result.report.epochs.back().recon_error;
  std::cout << ") -> " << (out / "model.json").string() << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string model;
  std::string split_dir;
  std::string task;  // empty: use the task recorded in the model
  std::string out = "evaluated";
  size_t threads = 1;
};

int cmd_evaluate(const EvaluateArgs& args) {
  WallClock clock;
  const ModelFile model = load_model(args.model);
  const std::string task_str = args.task.empty() ? model.task : args.task;
  if (task_str.empty())
    throw ValidationError("model records no task; pass --task");
  const Task task = task_from_name(task_str);

  const SplitArtifacts artifacts = load_split(args.split_dir);
  if (model.users.size() != artifacts.split.train.n_users())
    throw ValidationError("model was trained on a different user set");

  const EvalReport report =
      evaluate(model.params, artifacts.split, artifacts.features, task,
               model.config.like_threshold, args.threads, hash_file(args.model));

  const fs::path out(args.out);
  write_file(out / "eval_report.json", eval_report_to_json(report).dump(2) + "\n");
  write_file(out / "roc.csv", roc_to_csv(report.curve));

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config = json{{"task", task_name(task)}, {"threads", args.threads}};
  manifest.seed = artifacts.split.seed;
  add_inputs(manifest, {fs::path(args.model)});
  add_inputs(manifest, split_input_files(args.split_dir));
  manifest.outputs = {(out / "eval_report.json").string(), (out / "roc.csv").string()};
  manifest.wall_ms = clock.ms();
  write_manifest(manifest, out);

  std::cout << "task " << task_name(task) << ": auc " << report.auc << " over "
            << report.n_pairs << " pairs (" << report.n_pos << " pos, "
            << report.n_neg << " neg)\n";
  return kExitOk;
}

struct PredictArgs {
  std::string model;
  std::string features_file;
  size_t top_k = 10;
  std::string out;
};

int cmd_predict(const PredictArgs& args) {
  WallClock clock;
  const ModelFile model = load_model(args.model);

  // One feature label per line; unknown labels warn, all-unknown is an error.
  std::ifstream in(args.features_file);
  if (!in) throw ParseError("cannot open feature list: " + args.features_file);
  std::vector<uint8_t> f(model.features.size(), 0);
  size_t known = 0, unknown = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string label = coldstart::detail::trim(line);
    if (label.empty() || label[0] == '#') continue;
    if (const auto k = model.features.find(label)) {
      if (!f[*k]) ++known;
      f[*k] = 1;
    } else {
      ++unknown;
      std::cerr << "warning: unknown feature label '" << label << "'\n";
    }
  }
  if (known == 0)
    throw ValidationError("no feature label matched the model vocabulary");

  const std::vector<double> scores = cold_start_scores(model.params, f);
  std::vector<uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return scores[a] > scores[b];
  });

  json top = json::array();
  for (size_t i = 0; i < order.size() && i < args.top_k; ++i)
    top.push_back(json{{"user", model.users.label(order[i])},
                       {"score", scores[order[i]]}});
  const json result{{"known_features", known},
                    {"unknown_features", unknown},
                    {"top", top}};
  std::cout << result.dump(2) << "\n";

  if (!args.out.empty()) {
    const fs::path out(args.out);
    write_file(out / "predictions.json", result.dump(2) + "\n");
    RunManifest manifest;
    manifest.command = "predict";
    manifest.config = json{{"top_k", args.top_k}};
    manifest.seed = 0;
    add_inputs(manifest, {fs::path(args.model), fs::path(args.features_file)});
    manifest.outputs = {(out / "predictions.json").string()};
    manifest.wall_ms = clock.ms();
    write_manifest(manifest, out);
  }
  return kExitOk;
}

struct ClusterArgs {
  std::string model;
  size_t k = 8;
  size_t top_n = 4;
  uint64_t seed = 1;
  size_t restarts = 8;
  size_t threads = 1;
  bool cosine = false;
  std::string out;
};

int cmd_cluster(const ClusterArgs& args) {
  WallClock clock;
  const ModelFile model = load_model(args.model);
  FeatureMatrix fm;
  fm.features = model.features;
  fm.rows.assign(model.items.size(), {});

  auto embeddings = feature_embeddings(model.params, fm);
  if (args.cosine) embeddings = normalize_embeddings(std::move(embeddings));
  const Clustering clustering =
      kmeans(embeddings, args.k, args.seed, 100, args.restarts, args.threads);
  const ClusterReport report = cluster_report(clustering, embeddings, args.top_n);

  std::cout << cluster_report_text(report);

  if (!args.out.empty()) {
    const fs::path out(args.out);
    write_file(out / "cluster_report.json",
               cluster_report_to_json(report).dump(2) + "\n");
    write_file(out / "cluster_report.txt", cluster_report_text(report));
    RunManifest manifest;
    manifest.command = "cluster";
    manifest.config = json{{"k", args.k}, {"top_n", args.top_n},
                           {"restarts", args.restarts}, {"cosine", args.cosine}};
    manifest.seed = args.seed;
    add_inputs(manifest, {fs::path(args.model)});
    manifest.outputs = {(out / "cluster_report.json").string(),
                        (out / "cluster_report.txt").string()};
    manifest.wall_ms = clock.ms();
    write_manifest(manifest, out);
  }
  return kExitOk;
}

struct VerifyArgs {
  verify::VerifyOptions options;
  std::string out;
};

int cmd_verify(const VerifyArgs& args) {
  WallClock clock;
  if (args.options.trials == 0)
    std::cerr << "warning: --trials 0 makes every check vacuous\n";

  const auto results = verify::run_all(args.options);
  bool all_passed = true;
  json checks = json::array();
  for (const auto& r : results) {
    all_passed = all_passed && r.passed;
    std::cout << (r.passed ? "PASS" : "FAIL") << " " << r.name << ": worst "
              << r.worst << " (tolerance " << r.tolerance << ", " << r.trials
              << " trials)";
    if (!r.passed) std::cout << " at instance seed " << r.worst_seed;
    std::cout << "\n";
    checks.push_back(json{{"name", r.name},
                          {"trials", r.trials},
                          {"worst", r.worst},
                          {"tolerance", r.tolerance},
                          {"passed", r.passed},
                          {"worst_seed", r.worst_seed}});
  }

  if (!args.out.empty()) {
    const fs::path out(args.out);
    write_file(out / "verify_report.json",
               json{{"checks", checks}, {"passed", all_passed}}.dump(2) + "\n");
    RunManifest manifest;
    manifest.command = "verify";
    manifest.config = json{{"trials", args.options.trials},
                           {"max_visible", args.options.max_visible},
                           {"max_hidden", args.options.max_hidden}};
    manifest.seed = args.options.seed;
    manifest.outputs = {(out / "verify_report.json").string()};
    manifest.wall_ms = clock.ms();
    write_manifest(manifest, out);
  }
  return all_passed ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cold-start recommender built on conditional restricted "
               "Boltzmann machines"};
  app.require_subcommand(1);

  PrepareArgs prepare;
  auto* prep = app.add_subcommand(
      "prepare", "Split ratings into train / held-out items and build features");
  prep->add_option("--ratings", prepare.ratings,
                   "Ratings file (user item rating [timestamp]); defaults to "
                   "$COLDSTART_CRBM_DATA/u.data");
  prep->add_option("--features", prepare.features,
                   "Feature pairs file: item_id,feature_label");
  prep->add_option("--movielens-item", prepare.movielens_item,
                   "MovieLens u.item file; genre flags become the features");
  prep->add_option("--held-out", prepare.held_out, "Items to hold out for cold start");
  prep->add_option("--seed", prepare.seed, "Split seed");
  prep->add_option("--out", prepare.out, "Output directory");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Fit a CRBM with contrastive divergence");
  tr->add_option("--split", train_args.split_dir, "Prepared split directory")
      ->required();
  tr->add_option("--task", train_args.task, "explicit | implicit | rating");
  tr->add_option("--config", train_args.config_file, "JSON training config file");
  tr->add_option("--out", train_args.out, "Output directory");
  tr->add_option("--hidden", train_args.config.hidden_units, "Hidden units")
      ->each([&](const std::string&) { train_args.hidden_set = true; });
  tr->add_option("--lr", train_args.config.learning_rate, "Learning rate")
      ->each([&](const std::string&) { train_args.lr_set = true; });
  tr->add_option("--decay", train_args.config.weight_decay, "L2 decay on U")
      ->each([&](const std::string&) { train_args.decay_set = true; });
  tr->add_option("--epochs", train_args.config.epochs, "Training epochs")
      ->each([&](const std::string&) { train_args.epochs_set = true; });
  tr->add_option("--neg-ratio", train_args.config.negative_sample_ratio,
                 "Negatives per positive for one-class tasks")
      ->each([&](const std::string&) { train_args.neg_set = true; });
  tr->add_option("--cd-steps", train_args.config.cd_steps, "Gibbs steps per update")
      ->each([&](const std::string&) { train_args.cd_set = true; });
  tr->add_option("--like-threshold", train_args.config.like_threshold,
                 "Ratings above this count as likes")
      ->each([&](const std::string&) { train_args.like_set = true; });
  tr->add_option("--momentum", train_args.config.momentum,
                 "Momentum coefficient (0 disables)")
      ->each([&](const std::string&) { train_args.momentum_set = true; });
  tr->add_option("--lr-decay", train_args.config.lr_decay,
                 "Per-epoch learning-rate multiplier (1 disables)")
      ->each([&](const std::string&) { train_args.lr_decay_set = true; });
  tr->add_option("--init-scale", train_args.config.init_scale,
                 "Gaussian scale for W and U initialization")
      ->each([&](const std::string&) { train_args.init_set = true; });
  tr->add_option("--minibatch", train_args.config.minibatch_items,
                 "Items per gradient application")
      ->each([&](const std::string&) { train_args.minibatch_set = true; });
  tr->add_option("--seed", train_args.config.seed, "Training seed")
      ->each([&](const std::string&) { train_args.seed_set = true; });
  tr->add_option("--threads", train_args.config.threads, "Worker threads")
      ->each([&](const std::string&) { train_args.threads_set = true; });

  EvaluateArgs eval_args;
  auto* ev = app.add_subcommand("evaluate", "Score held-out items and compute ROC/AUC");
  ev->add_option("--model", eval_args.model, "Model file")->required();
  ev->add_option("--split", eval_args.split_dir, "Prepared split directory")
      ->required();
  ev->add_option("--task", eval_args.task,
                 "explicit | implicit | rating (default: the model's task)");
  ev->add_option("--out", eval_args.out, "Output directory");
  ev->add_option("--threads", eval_args.threads, "Worker threads");

  PredictArgs pred_args;
  auto* pr = app.add_subcommand("predict", "Rank users for a new item's features");
  pr->add_option("--model", pred_args.model, "Model file")->required();
  pr->add_option("--item-features", pred_args.features_file,
                 "File with one feature label per line")
      ->required();
  pr->add_option("--top-k", pred_args.top_k, "Users to return");
  pr->add_option("--out", pred_args.out, "Optional output directory");

  ClusterArgs cluster_args;
  auto* cl = app.add_subcommand("cluster",
                                "Cluster features by their hidden-unit weights");
  cl->add_option("--model", cluster_args.model, "Model file")->required();
  cl->add_option("--k", cluster_args.k, "Cluster count");
  cl->add_option("--top-n", cluster_args.top_n, "Labels shown per cluster");
  cl->add_option("--seed", cluster_args.seed, "Clustering seed");
  cl->add_option("--restarts", cluster_args.restarts, "Independent restarts");
  cl->add_option("--threads", cluster_args.threads, "Worker threads");
  cl->add_flag("--cosine", cluster_args.cosine,
               "Cluster by cosine similarity (unit-normalized rows)");
  cl->add_option("--out", cluster_args.out, "Optional output directory");

  VerifyArgs verify_args;
  auto* vf = app.add_subcommand("verify",
                                "Check model math against brute-force oracles");
  vf->add_option("--trials", verify_args.options.trials, "Random instances per check");
  vf->add_option("--max-visible", verify_args.options.max_visible,
                 "Largest visible layer");
  vf->add_option("--max-hidden", verify_args.options.max_hidden,
                 "Largest hidden layer");
  vf->add_option("--seed", verify_args.options.seed, "Base seed");
  vf->add_option("--out", verify_args.out, "Optional output directory");
  vf->add_option("--corrupt-sigma", verify_args.options.sigma_corruption,
                 "Test hook: shift closed-form conditionals by this amount")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (prep->parsed()) return cmd_prepare(prepare);
    if (tr->parsed()) return cmd_train(train_args);
    if (ev->parsed()) return cmd_evaluate(eval_args);
    if (pr->parsed()) return cmd_predict(pred_args);
    if (cl->parsed()) return cmd_cluster(cluster_args);
    if (vf->parsed()) return cmd_verify(verify_args);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
