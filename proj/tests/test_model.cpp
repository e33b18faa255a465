#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <cstring>

#include "mamaf/model.hpp"
#include "oracles.hpp"

using namespace mamaf;
namespace fs = std::filesystem;

namespace {

ModelConfig small(Index n = 25, Index hw = 32) {
  ModelConfig c;
  c.seq_len = n;
  c.input_hw = hw;
  c.init_seed = 3;
  return c;
}

std::array<Tensorf, kNumViews> views(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::array<Tensorf, kNumViews> v;
  for (auto& x : v) x = oracle::random_tensor<float>(c.view_shape(), rng, 0, 1);
  return v;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("mamaf_model_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointError::Kind load_error(const fs::path& p, const std::optional<ModelConfig>& expected = {}) {
  try {
    load_checkpoint(p, expected);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("load_checkpoint did not throw");
  return CheckpointError::Kind::io;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(ModelConfig{}.validate());
  CHECK_THROWS_AS(small(30).validate(), ConfigError);
  CHECK_THROWS_AS(small(0).validate(), ConfigError);
  CHECK_THROWS_AS(small(25, 40).validate(), ConfigError);
  CHECK_THROWS_AS(small(25, 0).validate(), ConfigError);
}

TEST_CASE("canonical config text is stable and round-trips") {
  ModelConfig c = small(50, 64);
  c.head_hidden = 17;
  c.motion_gating = false;
  CHECK(c.canonical() == c.canonical());
  CHECK(ModelConfig::from_canonical(c.canonical()) == c);
  CHECK_THROWS_AS(ModelConfig::from_canonical("{\"seq_len\": 25}"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_canonical("not json"), ConfigError);
}

TEST_CASE("parameter count matches the closed form for the default config") {
  // conv2d block: 3x3 kernels 3->64->32->16->8 with biases.
  const Index conv2d = (9 * 3 * 64 + 64) + (9 * 64 * 32 + 32) + (9 * 32 * 16 + 16) + (9 * 16 * 8 + 8);
  const Index motion = 2 * (9 * 8 * 8 + 8);
  const Index conv3d = (27 * 8 * 3 + 3) + (27 * 3 * 3 + 3);
  const Index head = (441 * 64 + 64) + (64 * 2 + 2);
  const Index closed = 4 * (conv2d + motion) + conv3d + head;
  CHECK(closed == 138147);
  CHECK(parameter_count(ModelConfig{}) == closed);

  // Only the head width depends on N and the frame size.
  CHECK(parameter_count(small(25, 32)) == closed - 441 * 64 + 1 * 1 * 3 * 64);
  CHECK(parameter_count(small(50, 224)) == closed - 441 * 64 + 2 * 49 * 3 * 64);
}

TEST_CASE("parameter names are unique and cover every branch") {
  auto net = init_params<float>(small());
  std::set<std::string> names;
  for (auto& [name, p] : collect_params(net)) names.insert(name);
  CHECK(names.size() == collect_params(net).size());
  for (int b = 0; b < 4; ++b) CHECK(names.count("branch" + std::to_string(b) + ".motion.gate.kernel") == 1);
  CHECK(names.count("head.output.bias") == 1);
}

TEST_CASE("branches are initialized independently") {
  const auto net = init_params<float>(small());
  CHECK_FALSE(net.conv2d[0][0].kernel == net.conv2d[1][0].kernel);
  CHECK(init_params<float>(small()).head.hidden.weight == net.head.hidden.weight);
}

TEST_CASE("forward shapes at the published resolution") {
  const ModelConfig c{};
  const auto w = ModelWeights::initialize(c);
  ForwardTrace tr;
  const Tensorf y = forward(c, w.params, views(c, 1), &tr);
  for (const Shape& s : tr.branch) CHECK(s == Shape{75, 14, 14, 8});
  CHECK(tr.fused == Shape{75, 14, 14, 8});
  CHECK(tr.reduced == Shape{3, 7, 7, 3});
  CHECK(tr.flat == Shape{441});
  CHECK(tr.output == Shape{2});
  CHECK(std::abs(y[0] + y[1] - 1.0f) < 1e-6);
}

TEST_CASE("forward: probabilities, determinism, zero videos") {
  const ModelConfig c = small();
  const auto w = ModelWeights::initialize(c);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto v = views(c, 10 + s);
    const Tensorf y = w.predict(v);
    CHECK(std::abs(y[0] + y[1] - 1.0f) < 1e-6);
    CHECK(w.predict(v) == y);
  }

  std::array<Tensorf, kNumViews> zero;
  for (auto& z : zero) z = Tensorf(c.view_shape());
  const Tensorf y0 = w.predict(zero);
  // Zero branches give a zero fused map, so only biases reach the head.
  const Tensorf fused(Shape{25, 2, 2, 8});
  const Tensorf expect = dense_head(flatten(conv3d_block(fused, w.params.conv3d)), w.params.head);
  CHECK(y0 == expect);
}

TEST_CASE("subjects are independent: reordering inputs reorders outputs") {
  const ModelConfig c = small();
  const auto w = ModelWeights::initialize(c);
  const auto a = views(c, 20), b = views(c, 21);
  const Tensorf ya = w.predict(a), yb = w.predict(b);
  CHECK(w.predict(b) == yb);
  CHECK(w.predict(a) == ya);
}

TEST_CASE("forward rejects malformed views naming the index") {
  const ModelConfig c = small();
  const auto w = ModelWeights::initialize(c);
  auto v = views(c, 2);
  v[3] = Tensorf(Shape{25, 32, 16, 3});
  CHECK_THROWS_WITH_AS(w.predict(v), doctest::Contains("view 3"), ShapeError);
}

TEST_CASE("checkpoint round-trip is bit exact") {
  TempDir dir;
  for (const ModelConfig& c : {small(), small(50, 48)}) {
    const auto w = ModelWeights::initialize(c);
    const fs::path p = dir.path / "w.ckpt";
    save_checkpoint(w, p);
    const auto r = load_checkpoint(p, c);
    CHECK(r.config == c);
    auto a = collect_params(w.params);
    auto b = collect_params(r.params);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(std::memcmp(a[i].second->data(), b[i].second->data(), sizeof(float) * a[i].second->size()) == 0);
    }
    const auto v = views(c, 4);
    const Tensorf y0 = w.predict(v), y1 = r.predict(v);
    CHECK(std::memcmp(y0.data(), y1.data(), sizeof(float) * 2) == 0);
  }
}

TEST_CASE("checkpoint errors are distinct") {
  TempDir dir;
  const ModelConfig c = small();
  const fs::path p = dir.path / "w.ckpt";
  save_checkpoint(ModelWeights::initialize(c), p);
  const auto bytes = slurp(p);

  CHECK(load_error(dir.path / "missing.ckpt") == CheckpointError::Kind::io);

  spit(dir.path / "trunc.ckpt", std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)));
  CHECK(load_error(dir.path / "trunc.ckpt") == CheckpointError::Kind::corrupt);
  spit(dir.path / "tiny.ckpt", std::vector<char>(bytes.begin(), bytes.begin() + 2));
  CHECK(load_error(dir.path / "tiny.ckpt") == CheckpointError::Kind::corrupt);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir.path / "magic.ckpt", bad_magic);
  CHECK(load_error(dir.path / "magic.ckpt") == CheckpointError::Kind::corrupt);

  auto bad_version = bytes;
  bad_version[4] = 9;
  spit(dir.path / "version.ckpt", bad_version);
  CHECK(load_error(dir.path / "version.ckpt") == CheckpointError::Kind::version);

  auto trailing = bytes;
  trailing.push_back(0);
  spit(dir.path / "trailing.ckpt", trailing);
  CHECK(load_error(dir.path / "trailing.ckpt") == CheckpointError::Kind::corrupt);

  // An N=25 checkpoint loaded into an N=75 run.
  ModelConfig run = c;
  run.seq_len = 75;
  CHECK(load_error(p, run) == CheckpointError::Kind::config_mismatch);
  // init_seed is not part of the compatibility check.
  ModelConfig reseeded = c;
  reseeded.init_seed = 99;
  CHECK_NOTHROW(load_checkpoint(p, reseeded));
}

TEST_CASE("checkpoint shape mismatch vs declared config") {
  TempDir dir;
  // Rewrite the embedded config to claim a larger frame while keeping 32x32 weights.
  const ModelConfig c = small();
  const fs::path p = dir.path / "w.ckpt";
  save_checkpoint(ModelWeights::initialize(c), p);
  auto bytes = slurp(p);
  const std::string from = c.canonical();
  ModelConfig other = c;
  other.input_hw = 48;  // same text length as 32
  const std::string to = other.canonical();
  REQUIRE(from.size() == to.size());
  std::copy(to.begin(), to.end(), bytes.begin() + 12);
  spit(p, bytes);
  CHECK(load_error(p) == CheckpointError::Kind::shape_mismatch);
}
