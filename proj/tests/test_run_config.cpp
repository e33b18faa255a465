#include <doctest.h>

#include <nlohmann/json.hpp>

#include "mamaf/run_config.hpp"

using namespace mamaf;

TEST_CASE("profiles") {
  const RunConfig desk = RunConfig::desk();
  CHECK(desk.model.seq_len == 25);
  CHECK(desk.model.input_hw == 32);
  CHECK(desk.train.epochs == 60);
  CHECK(desk.train.seed == 7);
  CHECK(desk.train.lr == 5e-4);
  CHECK(desk.train.batch_size == 1);
  CHECK_FALSE(desk.train.augment);
  CHECK_NOTHROW(desk.validate());

  const RunConfig paper = RunConfig::paper();
  CHECK(paper.model.seq_len == 75);
  CHECK(paper.model.input_hw == 224);
  CHECK(paper.train.epochs == 300);
  CHECK(paper.train.lr == 1e-5);
  CHECK(paper.train.augment);
  CHECK(paper.train.augment_target == 100);
  CHECK(paper.train.folds == 5);
  CHECK(paper.train.val_fraction == 0.2);

  CHECK(RunConfig::profile("desk").to_json() == desk.to_json());
  CHECK_THROWS_AS(RunConfig::profile("laptop"), ConfigError);
}

TEST_CASE("JSON round-trip and partial overrides") {
  const RunConfig base = RunConfig::desk();
  CHECK(RunConfig::from_json(base.to_json(), RunConfig::paper()).to_json() == base.to_json());

  const RunConfig r = RunConfig::from_json(R"({"epochs": 3, "lr": 0.01, "motion_gating": false, "data": "d"})", base);
  CHECK(r.train.epochs == 3);
  CHECK(r.train.lr == 0.01);
  CHECK_FALSE(r.model.motion_gating);
  CHECK(r.data == "d");
  CHECK(r.model.seq_len == base.model.seq_len);

  const auto j = nlohmann::json::parse(base.to_json());
  for (const char* key : {"seq_len", "input_hw", "epochs", "lr", "batch_size", "seed", "augment", "folds", "threads"}) {
    CHECK(j.contains(key));
  }
}

TEST_CASE("malformed configs are rejected") {
  const RunConfig base = RunConfig::desk();
  CHECK_THROWS_WITH_AS(RunConfig::from_json(R"({"epoch": 3})", base), doctest::Contains("epoch"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"epochs": "many"})", base), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"([1, 2])", base), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json("{", base), ConfigError);

  RunConfig bad = base;
  bad.model.seq_len = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = base;
  bad.train.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("relative paths resolve against a base directory") {
  RunConfig r = RunConfig::desk();
  r.data = "cohort";
  r.out = "/abs/out";
  r.resolve_paths("/configs");
  CHECK(r.data == std::filesystem::path("/configs/cohort"));
  CHECK(r.out == std::filesystem::path("/abs/out"));
}
