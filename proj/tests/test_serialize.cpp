#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "coldstart/serialize.hpp"
#include "coldstart/verify.hpp"
#include "support/synthetic.hpp"
#include "support/tmpdir.hpp"

using namespace coldstart;
using testsupport::TmpDir;

namespace {

ModelFile sample_model(uint64_t seed) {
  Rng rng(seed);
  ModelFile m;
  m.params = verify::detail::random_crbm(4, 3, 5, rng);
  // Awkward values that must survive the round trip bit-for-bit.
  m.params.base.a[0] = 1e-300;
  m.params.base.a[1] = -0.0;
  m.params.base.a[2] = 1.0 + std::ldexp(1.0, -52);
  m.params.base.W(0, 0) = -2.2250738585072014e-308;  // smallest normal
  for (int u = 0; u < 4; ++u) m.users.add("u" + std::to_string(u));
  for (int i = 0; i < 6; ++i) m.items.add("i" + std::to_string(i));
  for (int k = 0; k < 5; ++k) m.features.add("feat " + std::to_string(k));
  m.config.seed = seed;
  m.config_hash = config_hash(m.config);
  m.task = "rating-prediction";
  m.split_seed = 77;
  return m;
}

}  // namespace

TEST_CASE("model files round-trip losslessly") {
  TmpDir tmp;
  const auto m = sample_model(5);
  save_model(m, tmp.file("model.json"));
  const auto back = load_model(tmp.file("model.json"));

  CHECK(back.params == m.params);  // bitwise double equality via operator==
  CHECK(back.users == m.users);
  CHECK(back.items == m.items);
  CHECK(back.features == m.features);
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.task == m.task);
  CHECK(back.split_seed == m.split_seed);
  CHECK(std::signbit(back.params.base.a[1]));

  SECTION("saving twice is byte-identical") {
    save_model(m, tmp.file("model2.json"));
    CHECK(read_file(tmp.file("model.json")) == read_file(tmp.file("model2.json")));
  }
}

TEST_CASE("model file validation") {
  TmpDir tmp;
  const auto m = sample_model(6);

  SECTION("wrong format and version are rejected") {
    auto j = model_to_json(m);
    j["format"] = "something-else";
    CHECK_THROWS_AS(model_from_json(j), ParseError);
    j = model_to_json(m);
    j["version"] = 999;
    CHECK_THROWS_AS(model_from_json(j), ParseError);
  }
  SECTION("inconsistent dimensions are rejected") {
    auto j = model_to_json(m);
    j["m"] = 17;
    CHECK_THROWS_AS(model_from_json(j), ParseError);
  }
  SECTION("garbage files are reported as parse errors") {
    tmp.write("junk.json", "{not json");
    CHECK_THROWS_AS(load_model(tmp.file("junk.json")), ParseError);
    CHECK_THROWS_AS(load_model(tmp.file("missing.json")), ParseError);
  }
}

TEST_CASE("config hash is stable and ignores thread count") {
  TrainConfig a;
  auto b = a;
  b.threads = 16;
  CHECK(config_hash(a) == config_hash(b));
  b.learning_rate = 0.123;
  CHECK(config_hash(a) != config_hash(b));

  const auto round = config_from_json(config_to_json(a));
  CHECK(config_hash(round) == config_hash(a));
  CHECK(round.hidden_units == a.hidden_units);
  CHECK(round.like_threshold == a.like_threshold);
}

TEST_CASE("split artifacts round-trip") {
  testsupport::PlantedConfig pcfg;
  pcfg.n_users = 8;
  pcfg.n_items = 10;
  pcfg.n_features = 3;
  pcfg.observe_prob = 0.5;
  pcfg.seed = 9;
  const auto data = testsupport::make_planted(pcfg);
  const auto split = split_cold_start(data.ratings, 3, 1234);

  TmpDir tmp;
  save_split(split, data.features, tmp.path() / "split");
  const auto back = load_split(tmp.path() / "split");

  CHECK(back.split.seed == split.seed);
  CHECK(back.split.held_out_items == split.held_out_items);
  CHECK(back.split.train.users == split.train.users);
  CHECK(back.split.train.items == split.train.items);
  REQUIRE(back.split.train.ratings.size() == split.train.ratings.size());
  REQUIRE(back.split.test.ratings.size() == split.test.ratings.size());
  for (size_t i = 0; i < split.train.ratings.size(); ++i) {
    CHECK(back.split.train.ratings[i].user == split.train.ratings[i].user);
    CHECK(back.split.train.ratings[i].item == split.train.ratings[i].item);
    CHECK(back.split.train.ratings[i].value == split.train.ratings[i].value);
  }

  // Feature content is preserved per item even if column order changes.
  REQUIRE(back.features.rows.size() == data.features.rows.size());
  for (uint32_t i = 0; i < data.features.rows.size(); ++i) {
    std::set<std::string> orig, loaded;
    for (uint32_t k : data.features.active(i))
      orig.insert(data.features.features.label(k));
    for (uint32_t k : back.features.active(i))
      loaded.insert(back.features.features.label(k));
    CHECK(orig == loaded);
  }
}

TEST_CASE("report serialization") {
  SECTION("training report emits one JSON line per epoch") {
    TrainingReport r;
    r.epochs.push_back({0, 0.25, 12.5, std::nullopt});
    r.epochs.push_back({1, 0.125, 11.0, -3.5});
    const auto text = training_report_to_jsonl(r);
    std::istringstream in(text);
    std::string line;
    size_t lines = 0;
    while (std::getline(in, line)) {
      const auto j = json::parse(line);
      CHECK(j.at("epoch") == lines);
      if (lines == 1) CHECK(j.at("exact_ll").get<double>() == -3.5);
      ++lines;
    }
    CHECK(lines == 2);
  }

  SECTION("eval report carries the protocol fields") {
    EvalReport r;
    r.task = Task::OneClassExplicit;
    r.auc = 0.75;
    r.n_pos = 3;
    r.n_neg = 9;
    r.n_pairs = 12;
    r.model_hash = "fnv1a64:abc";
    r.split_seed = 4;
    const auto j = eval_report_to_json(r);
    CHECK(j.at("task") == "one-class-explicit");
    CHECK(j.at("auc") == 0.75);
    CHECK(j.at("n_pairs") == 12);
    CHECK(j.at("model_hash") == "fnv1a64:abc");
  }

  SECTION("roc csv round-trips point values") {
    RocCurve c;
    c.points = {{0.0, 0.0}, {1.0 / 3.0, 0.7071067811865476}, {1.0, 1.0}};
    const auto csv = roc_to_csv(c);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "fpr,tpr");
    std::getline(in, line);
    std::getline(in, line);
    const auto comma = line.find(',');
    CHECK(std::stod(line.substr(0, comma)) == 1.0 / 3.0);
    CHECK(std::stod(line.substr(comma + 1)) == 0.7071067811865476);
  }

  SECTION("manifests land next to the artifacts") {
    TmpDir tmp;
    RunManifest m;
    m.command = "train";
    m.config = json{{"epochs", 3}};
    m.inputs.push_back({"ratings.tsv", "fnv1a64:00ff"});
    m.seed = 9;
    m.outputs = {"model.json"};
    write_manifest(m, tmp.path());
    const auto j = json::parse(read_file(tmp.file("train_manifest.json")));
    CHECK(j.at("command") == "train");
    CHECK(j.at("inputs").at("ratings.tsv") == "fnv1a64:00ff");
  }
}
