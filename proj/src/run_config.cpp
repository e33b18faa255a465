#include "mamaf/run_config.hpp"

#include <nlohmann/json.hpp>

namespace mamaf {

namespace {

using nlohmann::json;

// At 32x32 with ~26 training subjects per fold, 1e-5 barely moves the
// weights in 60 epochs; single-subject steps at 5e-4 train reliably.
constexpr double kDeskLearningRate = 5e-4;
constexpr int kDeskBatchSize = 1;

template <typename T>
void read_key(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::desk() {
  RunConfig c;
  c.model.seq_len = 25;
  c.model.input_hw = 32;
  c.train.epochs = 60;
  c.train.lr = kDeskLearningRate;
  c.train.batch_size = kDeskBatchSize;
  c.train.seed = 7;
  c.train.augment = false;
  return c;
}

RunConfig RunConfig::paper() {
  RunConfig c;
  c.model.seq_len = 75;
  c.model.input_hw = 224;
  c.train.epochs = 300;
  c.train.lr = 1e-5;
  c.train.augment = true;
  c.train.augment_target = 100;
  return c;
}

RunConfig RunConfig::profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

std::string RunConfig::to_json() const {
  json j{{"seq_len", model.seq_len},
         {"input_hw", model.input_hw},
         {"channels", model.channels},
         {"head_hidden", model.head_hidden},
         {"init_seed", model.init_seed},
         {"motion_gating", model.motion_gating},
         {"epochs", train.epochs},
         {"lr", train.lr},
         {"batch_size", train.batch_size},
         {"seed", train.seed},
         {"augment", train.augment},
         {"augment_target", train.augment_target},
         {"folds", train.folds},
         {"val_fraction", train.val_fraction},
         {"threads", train.threads},
         {"data", data.string()},
         {"out", out.string()}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const json known = json::parse(RunConfig{}.to_json());
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c = base;
  read_key(j, "seq_len", c.model.seq_len);
  read_key(j, "input_hw", c.model.input_hw);
  read_key(j, "channels", c.model.channels);
  read_key(j, "head_hidden", c.model.head_hidden);
  read_key(j, "init_seed", c.model.init_seed);
  read_key(j, "motion_gating", c.model.motion_gating);
  read_key(j, "epochs", c.train.epochs);
  read_key(j, "lr", c.train.lr);
  read_key(j, "batch_size", c.train.batch_size);
  read_key(j, "seed", c.train.seed);
  read_key(j, "augment", c.train.augment);
  read_key(j, "augment_target", c.train.augment_target);
  read_key(j, "folds", c.train.folds);
  read_key(j, "val_fraction", c.train.val_fraction);
  read_key(j, "threads", c.train.threads);
  std::string path;
  if (j.contains("data")) read_key(j, "data", path), c.data = path;
  if (j.contains("out")) read_key(j, "out", path), c.out = path;
  return c;
}

void RunConfig::resolve_paths(const std::filesystem::path& base_dir) {
  if (!data.empty() && data.is_relative()) data = base_dir / data;
  if (!out.empty() && out.is_relative()) out = base_dir / out;
  if (!data.empty()) data = data.lexically_normal();
  if (!out.empty()) out = out.lexically_normal();
}

}  // namespace mamaf
