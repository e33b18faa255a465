#include "mamaf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace mamaf {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::size_t Manifest::count(int label) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [label](const VideoSample& s) { return s.label == label; }));
}

const VideoSample& Manifest::find(const std::string& subject_id) const {
  for (const auto& s : samples) {
    if (s.subject_id == subject_id) return s;
  }
  throw DataError("subject '" + subject_id + "' not in manifest");
}

void Manifest::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (s.subject_id.empty()) throw DataError("manifest entry with empty subject_id");
    if (!seen.insert(s.subject_id).second) throw DataError("duplicate subject id '" + s.subject_id + "'");
    if (s.label != kNegative && s.label != kPositive) {
      throw DataError("subject '" + s.subject_id + "' has non-binary label " + std::to_string(s.label));
    }
    for (const auto& v : s.views) {
      if (v.empty()) throw DataError("subject '" + s.subject_id + "' is missing a view");
    }
  }
  if (count(kPositive) < 1 || count(kNegative) < 1) throw DataError("manifest needs at least one subject per class");
}

void write_manifest(const Manifest& manifest, const fs::path& dir) {
  manifest.validate();
  fs::create_directories(dir);
  std::ofstream lines(dir / "manifest.jsonl", std::ios::trunc);
  if (!lines) throw DataError("cannot write manifest in " + dir.string());
  for (const auto& s : manifest.samples) {
    json j{{"subject_id", s.subject_id}, {"label", s.label}, {"views", s.views}, {"frames", s.frame_counts}};
    if (s.subtype) j["subtype"] = *s.subtype;
    if (s.deficit_side) j["deficit_side"] = *s.deficit_side;
    lines << j.dump() << '\n';
  }
  std::ofstream meta(dir / "dataset.json", std::ios::trunc);
  meta << json{{"name", manifest.name}, {"resolution", manifest.resolution}, {"seed", manifest.seed}}.dump(2) << '\n';
  if (!lines || !meta) throw DataError("failed writing manifest in " + dir.string());
}

Manifest read_manifest(const fs::path& dir) {
  Manifest m;
  m.root = dir;
  std::ifstream lines(dir / "manifest.jsonl");
  if (!lines) throw DataError("cannot open " + (dir / "manifest.jsonl").string());
  try {
    if (std::ifstream meta(dir / "dataset.json"); meta) {
      const json j = json::parse(meta);
      m.name = j.value("name", m.name);
      m.resolution = j.value("resolution", Index{0});
      m.seed = j.value("seed", std::uint64_t{0});
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const json j = json::parse(line);
      VideoSample s;
      s.subject_id = j.at("subject_id").get<std::string>();
      s.label = j.at("label").get<int>();
      const auto views = j.at("views").get<std::vector<std::string>>();
      const auto frames = j.at("frames").get<std::vector<Index>>();
      if (views.size() != kNumViews || frames.size() != kNumViews) {
        throw DataError("manifest line " + std::to_string(lineno) + ": expected exactly 4 views");
      }
      std::copy(views.begin(), views.end(), s.views.begin());
      std::copy(frames.begin(), frames.end(), s.frame_counts.begin());
      if (j.contains("subtype")) s.subtype = j["subtype"].get<std::string>();
      if (j.contains("deficit_side")) s.deficit_side = j["deficit_side"].get<std::string>();
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Frame files
// ---------------------------------------------------------------------------

namespace {
constexpr char kVideoMagic[4] = {'M', 'V', 'I', 'D'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const std::vector<char>& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)]);
  return v;
}
}  // namespace

void write_video(const RawVideo& video, const fs::path& path) {
  const auto expected = static_cast<std::size_t>(video.frames * video.height * video.width * video.channels);
  if (video.frames < 1 || video.height < 1 || video.width < 1 || video.channels < 1 || video.pixels.size() != expected) {
    throw DataError("write_video: inconsistent video dimensions for " + path.string());
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kVideoMagic, 4);
  put_u32(os, kVideoFormatVersion);
  for (Index d : {video.frames, video.height, video.width, video.channels}) put_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(video.pixels.data()), static_cast<std::streamsize>(video.pixels.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

RawVideo read_video(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open video " + path.string());
  const std::vector<char> bytes(std::istreambuf_iterator<char>(is), {});
  constexpr std::size_t header = 4 + 5 * 4;
  if (bytes.size() < header || std::memcmp(bytes.data(), kVideoMagic, 4) != 0) {
    throw DataError(path.string() + " is not a frame file");
  }
  if (get_u32(bytes, 4) != kVideoFormatVersion) throw DataError(path.string() + ": unsupported frame file version");
  RawVideo v;
  v.frames = get_u32(bytes, 8);
  v.height = get_u32(bytes, 12);
  v.width = get_u32(bytes, 16);
  v.channels = get_u32(bytes, 20);
  if (v.frames < 1) throw DataError(path.string() + ": empty video");
  if (v.height < 1 || v.width < 1 || v.channels < 1) throw DataError(path.string() + ": zero frame dimension");
  const auto n = static_cast<std::size_t>(v.frames * v.height * v.width * v.channels);
  if (bytes.size() - header != n) throw DataError(path.string() + ": payload size does not match header");
  v.pixels.assign(bytes.begin() + header, bytes.end());
  return v;
}

Tensorf to_tensor(const RawVideo& video) {
  Tensorf t(Shape{video.frames, video.height, video.width, video.channels});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(video.pixels[static_cast<std::size_t>(i)]) / 255.0f;
  return t;
}

// ---------------------------------------------------------------------------
// Sampling / resizing
// ---------------------------------------------------------------------------

std::vector<Index> sample_indices(Index total_frames, Index n) {
  if (total_frames < 1) throw DataError("sample_frames: empty video");
  if (n < 1) throw DataError("sample_frames: target length must be >= 1");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i * total_frames / n;
  return idx;
}

Tensorf sample_frames(const Tensorf& video, Index n) {
  const auto idx = sample_indices(video.dim(0), n);
  std::vector<Index> dims = video.shape().dims();
  dims[0] = n;
  Tensorf out{Shape(dims)};
  const Index stride = video.size() / video.dim(0);
  for (Index i = 0; i < n; ++i) {
    out.array().segment(i * stride, stride) = video.array().segment(idx[static_cast<std::size_t>(i)] * stride, stride);
  }
  return out;
}

Tensorf resize_bilinear(const Tensorf& frame, Index out_h, Index out_w) {
  if (frame.rank() != 3) throw ShapeError("resize_bilinear: expected [H,W,C], got " + frame.shape().str());
  const Index H = frame.dim(0), W = frame.dim(1), C = frame.dim(2);
  Tensorf out(Shape{out_h, out_w, C});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  auto source = [](Index dst, double scale, Index n, Index& i0, Index& i1, double& frac) {
    const double s = std::max((static_cast<double>(dst) + 0.5) * scale - 0.5, 0.0);
    i0 = std::min(static_cast<Index>(s), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    frac = s - static_cast<double>(i0);
  };
  for (Index y = 0; y < out_h; ++y) {
    Index y0, y1;
    double fy;
    source(y, sy, H, y0, y1, fy);
    for (Index x = 0; x < out_w; ++x) {
      Index x0, x1;
      double fx;
      source(x, sx, W, x0, x1, fx);
      for (Index c = 0; c < C; ++c) {
        const double top = (1 - fx) * frame(y0, x0, c) + fx * frame(y0, x1, c);
        const double bottom = (1 - fx) * frame(y1, x0, c) + fx * frame(y1, x1, c);
        out(y, x, c) = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

Tensorf resize_video(const Tensorf& video, Index out_h, Index out_w) {
  if (video.rank() != 4) throw ShapeError("resize_video: expected [N,H,W,C], got " + video.shape().str());
  if (video.dim(1) == out_h && video.dim(2) == out_w) return video;
  std::vector<Tensorf> frames;
  for (Index i = 0; i < video.dim(0); ++i) frames.push_back(resize_bilinear(video.frame(i), out_h, out_w));
  return stack(frames);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

std::string SpatialTransform::str() const {
  std::string s = "rot" + std::to_string((quarter_turns % 4) * 90);
  if (flip == Flip::horizontal) s += "+flip_h";
  if (flip == Flip::vertical) s += "+flip_v";
  return s;
}

const std::array<SpatialTransform, 11>& augmentation_transforms() {
  static const std::array<SpatialTransform, 11> all = [] {
    std::array<SpatialTransform, 11> a;
    std::size_t i = 0;
    for (int q = 1; q <= 3; ++q) {
      for (Flip f : {Flip::none, Flip::horizontal, Flip::vertical}) a[i++] = {q, f};
    }
    a[i++] = {0, Flip::horizontal};
    a[i++] = {0, Flip::vertical};
    return a;
  }();
  return all;
}

Tensorf augment(const Tensorf& sequence, const SpatialTransform& transform) {
  if (sequence.rank() != 4) throw ShapeError("augment: expected [N,H,W,C], got " + sequence.shape().str());
  const Index N = sequence.dim(0), H = sequence.dim(1), W = sequence.dim(2), C = sequence.dim(3);
  const int q = ((transform.quarter_turns % 4) + 4) % 4;
  if (q % 2 == 1 && H != W) {
    throw ShapeError("augment: 90/270 degree rotation needs square frames, got " + sequence.shape().str());
  }
  const Index Ho = q % 2 ? W : H, Wo = q % 2 ? H : W;
  Tensorf out(Shape{N, Ho, Wo, C});
  for (Index i = 0; i < Ho; ++i) {
    for (Index j = 0; j < Wo; ++j) {
      // Undo the flip first (it is applied after the rotation), then the rotation.
      Index ri = i, rj = j;
      if (transform.flip == Flip::horizontal) rj = Wo - 1 - j;
      if (transform.flip == Flip::vertical) ri = Ho - 1 - i;
      Index si = ri, sj = rj;
      switch (q) {
        case 1: si = H - 1 - rj, sj = ri; break;
        case 2: si = H - 1 - ri, sj = W - 1 - rj; break;
        case 3: si = rj, sj = W - 1 - ri; break;
        default: break;
      }
      for (Index n = 0; n < N; ++n) {
        for (Index c = 0; c < C; ++c) out(n, i, j, c) = sequence(n, si, sj, c);
      }
    }
  }
  return out;
}

SpatialTransform random_transform(std::mt19937_64& rng) {
  const auto& all = augmentation_transforms();
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  return all[pick(rng)];
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

Sample load_sample(const Manifest& manifest, const VideoSample& vs, Index seq_len, Index hw) {
  Sample s;
  s.subject_id = vs.subject_id;
  s.source_id = vs.subject_id;
  s.label = vs.label;
  for (std::size_t v = 0; v < kNumViews; ++v) {
    const RawVideo raw = read_video(manifest.root / vs.views[v]);
    if (raw.channels != 3) throw DataError(vs.subject_id + " view " + std::to_string(v) + ": expected RGB frames");
    s.views[v] = resize_video(sample_frames(to_tensor(raw), seq_len), hw, hw);
  }
  return s;
}

std::vector<AugmentationDraw> plan_balance(const std::vector<int>& labels, std::size_t target_per_class,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AugmentationDraw> draws;
  for (int label : {kPositive, kNegative}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) members.push_back(i);
    }
    if (members.empty()) throw DataError("balance_augment: class " + std::to_string(label) + " has no samples");
    if (members.size() >= target_per_class) continue;
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < target_per_class - members.size(); ++k) {
      draws.push_back({members[k % members.size()], random_transform(rng), k});
    }
  }
  return draws;
}

std::vector<Sample> balance_augment(std::vector<Sample> train, std::size_t target_per_class, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& s : train) labels.push_back(s.label);
  const auto draws = plan_balance(labels, target_per_class, seed);
  train.reserve(train.size() + draws.size());
  for (const auto& d : draws) {
    const Sample& src = train[d.source];
    Sample copy;
    copy.subject_id = src.subject_id + "#aug" + std::to_string(d.copy);
    copy.source_id = src.source_id;
    copy.label = src.label;
    copy.augmented = true;
    for (std::size_t v = 0; v < kNumViews; ++v) copy.views[v] = augment(src.views[v], d.transform);
    train.push_back(std::move(copy));
  }
  return train;
}

// ---------------------------------------------------------------------------
// Fold planning
// ---------------------------------------------------------------------------

FoldPlan plan_folds(const Manifest& manifest, int k, double val_fraction, std::uint64_t seed) {
  manifest.validate();
  if (k < 2) throw ConfigError("plan_folds: k must be >= 2");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("plan_folds: val_fraction must be in [0,1)");

  std::mt19937_64 rng(seed);
  FoldPlan plan;
  plan.k = k;
  plan.val_fraction = val_fraction;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));

  std::array<std::vector<std::string>, 2> by_class;
  for (const auto& s : manifest.samples) by_class[static_cast<std::size_t>(s.label)].push_back(s.subject_id);
  for (int label : {kPositive, kNegative}) {
    if (by_class[static_cast<std::size_t>(label)].size() < static_cast<std::size_t>(k)) {
      throw DataError("plan_folds: class " + std::to_string(label) + " has " +
                      std::to_string(by_class[static_cast<std::size_t>(label)].size()) + " subjects, fewer than k=" +
                      std::to_string(k));
    }
  }

  std::size_t cursor = 0;
  for (int label : {kPositive, kNegative}) {
    auto ids = by_class[static_cast<std::size_t>(label)];
    std::shuffle(ids.begin(), ids.end(), rng);
    for (const auto& id : ids) plan.folds[cursor++ % static_cast<std::size_t>(k)].test.push_back(id);
  }

  for (auto& fold : plan.folds) {
    const std::set<std::string> test(fold.test.begin(), fold.test.end());
    for (int label : {kPositive, kNegative}) {
      std::vector<std::string> rest;
      for (const auto& id : by_class[static_cast<std::size_t>(label)]) {
        if (!test.count(id)) rest.push_back(id);
      }
      std::shuffle(rest.begin(), rest.end(), rng);
      std::size_t n_val = 0;
      if (rest.size() >= 2 && val_fraction > 0) {
        n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(rest.size()))));
        n_val = std::min(n_val, rest.size() - 1);
      }
      fold.validation.insert(fold.validation.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
      fold.train.insert(fold.train.end(), rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    }
  }
  plan.validate(manifest);
  return plan;
}

void FoldPlan::validate(const Manifest& manifest) const {
  if (folds.size() != static_cast<std::size_t>(k)) throw DataError("fold plan has wrong number of folds");
  std::set<std::string> all;
  for (const auto& s : manifest.samples) all.insert(s.subject_id);
  const double positive_rate =
      static_cast<double>(manifest.count(kPositive)) / static_cast<double>(manifest.samples.size());

  std::set<std::string> tested;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Fold& fold = folds[f];
    const std::string where = "fold " + std::to_string(f) + ": ";
    std::set<std::string> seen;
    for (const auto* part : {&fold.train, &fold.validation, &fold.test}) {
      for (const auto& id : *part) {
        if (!all.count(id)) throw DataError(where + "unknown subject '" + id + "'");
        if (!seen.insert(id).second) throw DataError(where + "subject '" + id + "' appears in more than one role");
      }
    }
    if (seen != all) throw DataError(where + "train/validation/test do not cover the cohort");
    for (const auto& id : fold.test) {
      if (!tested.insert(id).second) throw DataError(where + "subject '" + id + "' is tested in two folds");
    }
    std::size_t pos = 0;
    for (const auto& id : fold.test) pos += manifest.find(id).label == kPositive;
    const double expected = positive_rate * static_cast<double>(fold.test.size());
    if (std::abs(static_cast<double>(pos) - expected) > 1.0 + 1e-9) {
      throw DataError(where + "test fold has " + std::to_string(pos) + " positives, expected about " +
                      std::to_string(expected));
    }
  }
  if (tested != all) throw DataError("test folds do not partition the cohort");
}

std::string FoldPlan::to_json() const {
  json j{{"k", k}, {"val_fraction", val_fraction}, {"seed", seed}, {"folds", json::array()}};
  for (const auto& f : folds) j["folds"].push_back({{"train", f.train}, {"validation", f.validation}, {"test", f.test}});
  return j.dump(2);
}

FoldPlan FoldPlan::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    FoldPlan p;
    p.k = j.at("k").get<int>();
    p.val_fraction = j.at("val_fraction").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("folds")) {
      p.folds.push_back({f.at("train").get<std::vector<std::string>>(), f.at("validation").get<std::vector<std::string>>(),
                         f.at("test").get<std::vector<std::string>>()});
    }
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fold plan: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic cohort
// ---------------------------------------------------------------------------

namespace {

struct SubjectParams {
  double brightness, noise, phase, cycles, attenuation;
  bool deficit_left;
};

/// RGB tint per view.
constexpr std::array<std::array<double, 3>, kNumViews> kViewColors{{
    {1.0, 0.8, 0.6}, {0.6, 0.9, 1.0}, {0.9, 0.6, 0.9}, {0.8, 1.0, 0.7}}};

RawVideo render_view(const SynthOptions& o, const SubjectParams& p, std::size_t view, double view_phase,
                     std::mt19937_64& rng) {
  RawVideo v;
  v.frames = o.frames;
  v.height = v.width = o.hw;
  v.channels = 3;
  v.pixels.resize(static_cast<std::size_t>(o.frames * o.hw * o.hw * 3));
  std::normal_distribution<double> noise(0.0, p.noise);

  const double hw = static_cast<double>(o.hw);
  const double sigma = 0.1 * hw;
  const bool vertical = view % 2 == 0;
  const double amplitude = (vertical ? 0.22 : 0.1) * hw;
  const double amp_left = amplitude * (p.deficit_left ? p.attenuation : 1.0);
  const double amp_right = amplitude * (p.deficit_left ? 1.0 : p.attenuation);
  const auto& color = kViewColors[view];

  std::size_t k = 0;
  for (Index t = 0; t < o.frames; ++t) {
    const double theta =
        2 * std::numbers::pi * p.cycles * static_cast<double>(t) / static_cast<double>(o.frames) + p.phase + view_phase;
    // Mirror phase: the right blob moves opposite to the left one.
    const double dl = amp_left * std::sin(theta), dr = -amp_right * std::sin(theta);
    double lx = 0.27 * hw, ly = 0.5 * hw, rx = 0.73 * hw, ry = 0.5 * hw;
    if (vertical) ly += dl, ry += dr;
    else lx += dl, rx += dr;
    for (Index y = 0; y < o.hw; ++y) {
      for (Index x = 0; x < o.hw; ++x) {
        const double fy = static_cast<double>(y) + 0.5, fx = static_cast<double>(x) + 0.5;
        const double bl = std::exp(-((fx - lx) * (fx - lx) + (fy - ly) * (fy - ly)) / (2 * sigma * sigma));
        const double br = std::exp(-((fx - rx) * (fx - rx) + (fy - ry) * (fy - ry)) / (2 * sigma * sigma));
        for (int c = 0; c < 3; ++c) {
          const double value = p.brightness * (0.12 + 0.8 * color[static_cast<std::size_t>(c)] * (bl + br)) + noise(rng);
          v.pixels[k++] = static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
        }
      }
    }
  }
  return v;
}

}  // namespace

Manifest generate_synthetic_cohort(const fs::path& dir, const SynthOptions& o) {
  if (o.positives < 1 || o.negatives < 1) throw ConfigError("synthetic cohort needs at least one subject per class");
  if (o.frames < 1 || o.hw < 4) throw ConfigError("synthetic cohort needs frames >= 1 and hw >= 4");

  std::mt19937_64 rng(o.seed);
  std::vector<int> labels(o.positives, kPositive);
  labels.insert(labels.end(), o.negatives, kNegative);
  std::shuffle(labels.begin(), labels.end(), rng);

  Manifest m;
  m.name = "synthetic-unilateral-motion";
  m.resolution = o.hw;
  m.seed = o.seed;
  m.root = dir;
  fs::create_directories(dir / "views");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "subj_%03zu", i);
    SubjectParams p{};
    p.brightness = 0.85 + 0.3 * unit(rng);
    p.noise = 0.02 + 0.03 * unit(rng);
    p.phase = 2 * std::numbers::pi * unit(rng);
    p.cycles = 2.5 + 1.5 * unit(rng);
    p.deficit_left = unit(rng) < 0.5;
    p.attenuation = labels[i] == kPositive ? 0.2 * unit(rng) : 1.0;
    const bool tia = unit(rng) < 0.3;

    VideoSample s;
    s.subject_id = id;
    s.label = labels[i];
    if (labels[i] == kPositive) {
      s.subtype = tia ? "tia" : "stroke";
      s.deficit_side = p.deficit_left ? "left" : "right";
    }
    for (std::size_t v = 0; v < kNumViews; ++v) {
      const double view_phase = 0.5 * unit(rng);
      const RawVideo video = render_view(o, p, v, view_phase, rng);
      s.views[v] = "views/" + s.subject_id + "_v" + std::to_string(v) + ".mvid";
      s.frame_counts[v] = video.frames;
      write_video(video, dir / s.views[v]);
    }
    m.samples.push_back(std::move(s));
  }
  write_manifest(m, dir);
  return m;
}

double side_motion_energy(const Tensorf& video, bool left) {
  if (video.rank() != 4 || video.dim(0) < 2) throw ShapeError("side_motion_energy: need [T>=2,H,W,C]");
  const Index T = video.dim(0), H = video.dim(1), W = video.dim(2), C = video.dim(3);
  const Index x0 = left ? 0 : W / 2, x1 = left ? W / 2 : W;
  double energy = 0;
  for (Index t = 0; t + 1 < T; ++t) {
    for (Index y = 0; y < H; ++y) {
      for (Index x = x0; x < x1; ++x) {
        for (Index c = 0; c < C; ++c) {
          const double d = static_cast<double>(video(t + 1, y, x, c)) - video(t, y, x, c);
          energy += d * d;
        }
      }
    }
  }
  return energy / static_cast<double>((T - 1) * H * (x1 - x0) * C);
}

}  // namespace mamaf
