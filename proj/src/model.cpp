#include "mamaf/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace mamaf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void ModelConfig::validate() const {
  if (seq_len < kTemporalReduction || seq_len % kTemporalReduction != 0) {
    throw ConfigError("seq_len must be a positive multiple of 25, got " + std::to_string(seq_len));
  }
  if (input_hw < kSpatialReduction || input_hw % kSpatialReduction != 0) {
    throw ConfigError("input_hw must be a positive multiple of 16, got " + std::to_string(input_hw));
  }
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
}

std::string ModelConfig::canonical() const {
  nlohmann::json j{{"seq_len", seq_len},         {"input_hw", input_hw},   {"channels", channels},
                   {"head_hidden", head_hidden}, {"init_seed", init_seed}, {"motion_gating", motion_gating},
                   {"branches", kNumViews}};
  return j.dump();
}

ModelConfig ModelConfig::from_canonical(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("branches").get<std::size_t>() != kNumViews) throw ConfigError("only 4-branch models are supported");
    c.seq_len = j.at("seq_len").get<Index>();
    c.input_hw = j.at("input_hw").get<Index>();
    c.channels = j.at("channels").get<Index>();
    c.head_hidden = j.at("head_hidden").get<Index>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    c.motion_gating = j.at("motion_gating").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

Index parameter_count(const ModelConfig& config) {
  const auto net = init_params<float>(config);
  Index n = 0;
  for (const auto& [name, p] : collect_params(net)) n += p->size();
  return n;
}

namespace {

class Writer {
public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void floats(const float* p, Index n) {
    os_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
  }

private:
  std::ostream& os_;
};

class Reader {
public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  void raw(void* dst, std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint " + path_ + " is truncated");
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(&v, sizeof v);
    return v;
  }
  std::string str(std::uint32_t max_len = 1u << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint " + path_ + ": bad string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string path_;
};

constexpr char kMagic[4] = {'M', 'A', 'M', 'F'};

}  // namespace

void save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint " + path.string());
  Writer w(os);
  os.write(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(weights.config.canonical());
  const auto params = collect_params(weights.params);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (Index d : t->shape().dims()) w.u32(static_cast<std::uint32_t>(d));
    w.floats(t->data(), t->size());
  }
  if (!os) throw CheckpointError(CheckpointError::Kind::io, "failed writing checkpoint " + path.string());
}

ModelWeights load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(is), {}), path.string());

  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::corrupt, path.string() + " is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version, "checkpoint " + path.string() + " has format version " +
                                                              std::to_string(version) + ", expected " +
                                                              std::to_string(kCheckpointVersion));
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_canonical(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint " + path.string() + ": " + e.what());
  }
  if (expected) {
    ModelConfig a = config, b = *expected;
    a.init_seed = b.init_seed = 0;
    if (!(a == b)) {
      throw CheckpointError(CheckpointError::Kind::config_mismatch, "checkpoint config " + config.canonical() +
                                                                        " does not match run config " +
                                                                        expected->canonical());
    }
  }

  ModelWeights weights{config, init_params<float>(config)};
  auto params = collect_params(weights.params);
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint has " + std::to_string(count) +
                                                                     " parameters, config implies " +
                                                                     std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const std::string stored = r.str();
    if (stored != name) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch, "checkpoint record '" + stored + "', expected '" + name + "'");
    }
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError(CheckpointError::Kind::corrupt, "implausible rank for " + name);
    std::vector<Index> dims(rank);
    for (auto& d : dims) d = r.u32();
    if (dims != t->shape().dims()) {
      std::string got = "(";
      for (std::size_t i = 0; i < dims.size(); ++i) got += (i ? "," : "") + std::to_string(dims[i]);
      throw CheckpointError(CheckpointError::Kind::shape_mismatch,
                            "parameter " + name + " has shape " + got + "), config implies " + t->shape().str());
    }
    r.raw(t->data(), static_cast<std::size_t>(t->size()) * sizeof(float));
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::corrupt, "trailing bytes in checkpoint " + path.string());
  return weights;
}

}  // namespace mamaf
