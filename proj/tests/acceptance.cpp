// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset; exits nonzero if any selected criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mamaf/data.hpp"
#include "mamaf/eval.hpp"
#include "mamaf/gradcheck_suite.hpp"
#include "mamaf/model.hpp"
#include "mamaf/training.hpp"
#include "oracles.hpp"

using namespace mamaf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures += (failures.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict metric_oracle() {
  Verdict v;
  const Metrics a = metrics({88, 6, 11, 43});
  const Metrics b = metrics({84, 10, 14, 40});
  const std::pair<std::optional<double>, double> rows[] = {{a.sensitivity, 93.62}, {a.specificity, 79.63},
                                                           {a.precision, 88.89},   {a.f1, 91.19},
                                                           {a.accuracy, 88.51},    {b.sensitivity, 89.36}};
  for (const auto& [got, want] : rows) {
    v.require(got.has_value() && percent(*got) == want, format_percent(got) + " != " + fmt(want));
  }
  v.detail << "(88,6,11,43) -> " << format_percent(a.sensitivity) << "/" << format_percent(a.specificity) << "/"
           << format_percent(a.precision) << "/" << format_percent(a.f1) << "/" << format_percent(a.accuracy)
           << "; (84,10,14,40) sensitivity " << format_percent(b.sensitivity);
  return v;
}

Verdict shape_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  for (Index n : {75, 50, 25}) {
    ModelConfig c;
    c.seq_len = n;
    c.input_hw = 224;
    const auto w = ModelWeights::initialize(c);
    std::mt19937_64 rng(static_cast<std::uint64_t>(n));
    std::array<Tensorf, kNumViews> views;
    for (auto& x : views) x = oracle::random_tensor<float>(c.view_shape(), rng, 0, 1);
    ForwardTrace tr;
    const Tensorf y = forward(c, w.params, views, &tr);
    const Shape feat{n, 14, 14, 8};
    for (const Shape& s : tr.branch) v.require(s == feat, "branch shape " + s.str() + " at N=" + std::to_string(n));
    v.require(tr.fused == feat, "fused shape " + tr.fused.str());
    v.require(tr.reduced == (Shape{n / 25, 7, 7, 3}), "3-D block shape " + tr.reduced.str());
    v.require(y.shape() == Shape{2}, "output shape " + y.shape().str());
    v.require(std::abs(static_cast<double>(y[0]) + y[1] - 1.0) <= 1e-6, "probabilities sum to " + fmt(y[0] + y[1], 9));
    if (n == 75) v.detail << "N=75: branch " << tr.branch[0].str() << ", fused " << tr.fused.str() << ", 3-D "
                          << tr.reduced.str() << ", output " << y.shape().str() << "; ";
    else v.detail << "N=" << n << ": 3-D " << tr.reduced.str() << "; ";
  }
  const double s = seconds_since(t0);
  v.require(s < 60, "runtime " + fmt(s) + " s");
  v.detail << fmt(s, 3) << " s";
  return v;
}

Verdict gradient_check() {
  Verdict v;
  const auto t0 = Clock::now();
  SuiteOptions o;
  o.seed = 0;
  const std::tuple<const char*, GradcheckReport, double> checks[] = {
      {"attention", check_attention(o), 1e-3},
      {"motion-aware", check_motion_aware(o), 1e-2},
      {"model N=25 32x32", check_model(o), 1e-2}};
  for (const auto& [name, r, tol] : checks) {
    v.require(r.pass && r.max_rel_err <= tol, std::string(name) + " rel err " + fmt(r.max_rel_err));
    v.require(r.coordinates.size() >= 10, std::string(name) + " sampled " + std::to_string(r.coordinates.size()));
    v.detail << name << " " << fmt(r.max_rel_err, 3) << " (tol " << fmt(tol) << ", " << r.coordinates.size()
             << " coords); ";
  }
  const double s = seconds_since(t0);
  v.require(s < 300, "runtime " + fmt(s) + " s");
  v.detail << fmt(s, 3) << " s";
  return v;
}

Verdict kernel_equivalence() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  double worst[4] = {0, 0, 0, 0};
  for (int i = 0; i < 100; ++i) {
    const bool same = pick(0, 1) == 1;
    {
      const Index kh = pick(1, 3), kw = pick(1, 3), h = pick(same ? 1 : kh, 9), w = pick(same ? 1 : kw, 9);
      const Index n = pick(1, 3), ci = pick(1, 4), co = pick(1, 4), sh = pick(1, 3), sw = pick(1, 3);
      const Tensorf x = oracle::random_tensor<float>(Shape{n, h, w, ci}, rng);
      const Tensorf k = oracle::random_tensor<float>(Shape{kh, kw, ci, co}, rng);
      const Tensorf b = oracle::random_tensor<float>(Shape{co}, rng);
      const Tensorf y = conv2d(x, k, b, Stride2{sh, sw}, same ? Padding::same : Padding::valid);
      const auto ref = oracle::conv2d(oracle::Dense::from(x), oracle::Dense::from(k), oracle::Dense::from(b), sh, sw, same);
      v.require(static_cast<std::size_t>(y.size()) == ref.v.size(), "conv2d output size");
      worst[0] = std::max(worst[0], oracle::max_abs_diff(oracle::Dense::from(y), ref.v));
    }
    {
      const Index kt = pick(1, 3), kh = pick(1, 3), kw = pick(1, 3);
      const Index t = pick(same ? 1 : kt, 6), h = pick(same ? 1 : kh, 7), w = pick(same ? 1 : kw, 7);
      const Index ci = pick(1, 3), co = pick(1, 3), st = pick(1, 2), sh = pick(1, 3), sw = pick(1, 3);
      const Tensorf x = oracle::random_tensor<float>(Shape{t, h, w, ci}, rng);
      const Tensorf k = oracle::random_tensor<float>(Shape{kt, kh, kw, ci, co}, rng);
      const Tensorf b = oracle::random_tensor<float>(Shape{co}, rng);
      const Tensorf y = conv3d(x, k, b, Stride3{st, sh, sw}, same ? Padding::same : Padding::valid);
      const auto ref =
          oracle::conv3d(oracle::Dense::from(x), oracle::Dense::from(k), oracle::Dense::from(b), st, sh, sw, same);
      v.require(static_cast<std::size_t>(y.size()) == ref.v.size(), "conv3d output size");
      worst[1] = std::max(worst[1], oracle::max_abs_diff(oracle::Dense::from(y), ref.v));
    }
    {
      const Index batch = pick(1, 3), m = pick(1, 8), k = pick(1, 8), n = pick(1, 8);
      const Tensorf a = oracle::random_tensor<float>(Shape{batch, m, k}, rng);
      const Tensorf b = oracle::random_tensor<float>(Shape{batch, k, n}, rng);
      const Tensorf y = matmul(a, b);
      worst[2] = std::max(worst[2], oracle::max_abs_diff(oracle::Dense::from(y),
                                                          oracle::matmul(oracle::Dense::from(a), oracle::Dense::from(b)).v));
    }
    {
      const Index batch = pick(1, 3), tokens = pick(1, 10), d = pick(1, 8);
      const Tensorf x = oracle::random_tensor<float>(Shape{batch, tokens, d}, rng);
      const Tensorf y = attention(x);
      worst[3] = std::max(worst[3], oracle::max_abs_diff(oracle::Dense::from(y), oracle::attention(oracle::Dense::from(x)).v));
    }
  }
  const char* names[4] = {"conv2d", "conv3d", "matmul", "attention"};
  for (int k = 0; k < 4; ++k) {
    v.require(worst[k] <= 1e-5, std::string(names[k]) + " max abs err " + fmt(worst[k]));
    v.detail << names[k] << " " << fmt(worst[k], 3) << "; ";
  }
  v.detail << "100 instances each, " << fmt(seconds_since(t0), 3) << " s";
  return v;
}

Verdict auc_equivalence() {
  Verdict v;
  std::mt19937_64 rng(5);
  double worst = 0;
  int tie_heavy = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 30)(rng);
    // Half the instances draw from a grid of at most 4 levels.
    const bool coarse = trial % 2 == 0;
    tie_heavy += coarse;
    const int levels = coarse ? std::uniform_int_distribution<int>(1, 4)(rng) : 1000000;
    std::vector<ScoredPrediction> preds;
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      const double s = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      const int y = i < 2 ? i : std::uniform_int_distribution<int>(0, 1)(rng);
      preds.push_back({std::to_string(i), s, y});
      scores.push_back(s);
      labels.push_back(y);
    }
    worst = std::max(worst, std::abs(roc_auc(preds).auc - oracle::auc_pairs(scores, labels)));
  }
  v.require(worst <= 1e-9, "max |trapezoid - pairs| " + fmt(worst));
  v.detail << "1000 instances (" << tie_heavy << " tie-heavy), max |diff| " << fmt(worst, 3);
  return v;
}

Manifest synthetic_ids(std::size_t pos, std::size_t neg) {
  Manifest m;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    VideoSample s;
    s.subject_id = "s" + std::to_string(i);
    s.label = i < pos ? kPositive : kNegative;
    for (std::size_t k = 0; k < kNumViews; ++k) s.views[k] = "views/" + s.subject_id + "_v" + std::to_string(k) + ".mvid";
    m.samples.push_back(s);
  }
  return m;
}

// Returns an empty string when no view file is shared between roles of a fold.
std::string leakage(const Manifest& m, const FoldPlan& plan) {
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    std::map<std::string, std::string> owner;
    const Fold& fold = plan.folds[f];
    for (const auto& [role, ids] : {std::pair{"train", &fold.train}, {"validation", &fold.validation}, {"test", &fold.test}}) {
      for (const auto& id : *ids) {
        for (const auto& file : m.find(id).views) {
          const std::string path = (m.root / file).lexically_normal().string();
          const auto [it, fresh] = owner.emplace(path, role);
          if (!fresh && it->second != role) return "fold " + std::to_string(f) + ": " + path + " read by " + it->second + " and " + role;
        }
      }
    }
  }
  return {};
}

Verdict fold_invariants() {
  Verdict v;
  std::mt19937_64 rng(6);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(5, 120)(rng);
    const std::size_t neg = std::uniform_int_distribution<std::size_t>(5, 120)(rng);
    const Manifest m = synthetic_ids(pos, neg);
    const FoldPlan plan = plan_folds(m, 5, 0.2, rng());
    try {
      plan.validate(m);
    } catch (const DataError& e) {
      v.require(false, e.what());
    }
    std::multiset<std::string> tested;
    const double ratio = static_cast<double>(pos) / static_cast<double>(pos + neg);
    for (const Fold& f : plan.folds) {
      tested.insert(f.test.begin(), f.test.end());
      std::size_t p = 0;
      for (const auto& id : f.test) p += m.find(id).label == kPositive;
      v.require(std::abs(static_cast<double>(p) - ratio * static_cast<double>(f.test.size())) <= 1.0 + 1e-9,
                "stratification off by more than one subject");
      v.require(f.train.size() + f.validation.size() + f.test.size() == pos + neg, "roles do not cover the cohort");
    }
    v.require(tested.size() == pos + neg && std::set(tested.begin(), tested.end()).size() == pos + neg,
              "test folds do not partition the cohort");
    const std::string leak = leakage(m, plan);
    v.require(leak.empty(), leak);
    ++checked;
  }

  // Balancing: any class below target gets exactly target - count copies.
  bool balanced = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(1, 140)(rng);
    const std::size_t neg = std::uniform_int_distribution<std::size_t>(1, 140)(rng);
    std::vector<int> labels(pos, kPositive);
    labels.insert(labels.end(), neg, kNegative);
    std::size_t add[2] = {0, 0};
    for (const auto& d : plan_balance(labels, 100, rng())) ++add[labels[d.source]];
    balanced = balanced && pos + add[kPositive] == std::max<std::size_t>(pos, 100) &&
               neg + add[kNegative] == std::max<std::size_t>(neg, 100);
  }
  v.require(balanced, "plan_balance does not reach exactly 100 per class");

  std::vector<Sample> train;
  std::mt19937_64 px(7);
  for (int i = 0; i < 43 + 57; ++i) {
    Sample s;
    s.subject_id = s.source_id = "t" + std::to_string(i);
    s.label = i < 43 ? kPositive : kNegative;
    for (auto& view : s.views) view = oracle::random_tensor<float>(Shape{1, 4, 4, 3}, px, 0, 1);
    train.push_back(std::move(s));
  }
  const auto out = balance_augment(train, 100, 8);
  std::size_t pos = 0, neg = 0;
  for (const auto& s : out) (s.label == kPositive ? pos : neg)++;
  v.require(pos == 100 && neg == 100, "balance_augment gave " + std::to_string(pos) + "/" + std::to_string(neg));

  v.detail << checked << " random cohorts (k=5) partition/disjoint/stratified, file-level leakage scan clean; "
           << "balance_augment 43+57 -> " << pos << "+" << neg;
  return v;
}

// ---------------------------------------------------------------------------
// End-to-end runs through the command-line binary.

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + MAMAF_CLI + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct CvRun {
  int code = -1;
  double seconds = 0;
  json report;
  std::string metrics_text;
};

CvRun cv(const fs::path& data, const fs::path& out, const std::string& extra) {
  CvRun r;
  const auto t0 = Clock::now();
  r.code = run_cli("-v cv --profile desk --data \"" + data.string() + "\" --out \"" + out.string() + "\" " + extra,
                   out.string() + ".log");
  r.seconds = seconds_since(t0);
  if (r.code == 0) {
    r.metrics_text = read_text(out / "metrics.json");
    r.report = json::parse(r.metrics_text);
  }
  return r;
}

double fraction(const json& j, const char* key) {
  return j[key].is_number() ? j[key].get<double>() / 100.0 : std::nan("");
}

struct EndToEnd {
  fs::path dir;
  CvRun main, control, rerun;
  bool ran = false;
};

EndToEnd e2e;

EndToEnd& end_to_end() {
  EndToEnd& e = e2e;
  if (e.ran) return e;
  e.ran = true;
  e.dir = fs::temp_directory_path() / ("mamaf_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(e.dir);
  const fs::path data = e.dir / "cohort";
  if (run_cli("synth --out \"" + data.string() + "\" --pos 20 --neg 20 --frames 40 --hw 32 --seed 7",
              e.dir / "synth.log") != 0) {
    return e;
  }
  std::cerr << "running desk-profile cross-validation (main, control, rerun); logs in " << e.dir << '\n';
  e.main = cv(data, e.dir / "main", "");
  e.control = cv(data, e.dir / "control", "--no-motion-gating");
  e.rerun = cv(data, e.dir / "rerun", "");
  return e;
}

Verdict learning_sanity() {
  Verdict v;
  const EndToEnd& e = end_to_end();
  v.require(e.main.code == 0, "main run exit code " + std::to_string(e.main.code));
  v.require(e.control.code == 0, "control run exit code " + std::to_string(e.control.code));
  if (!v.pass) return v;
  const double auc = fraction(e.main.report, "auc"), sens = fraction(e.main.report, "sensitivity");
  const double control_auc = fraction(e.control.report, "auc");
  const double minutes = (e.main.seconds + e.control.seconds) / 60;
  v.require(auc >= 0.90, "pooled AUC " + fmt(auc));
  v.require(sens >= 0.80, "sensitivity " + fmt(sens));
  v.require(control_auc <= auc + 0.05, "identity-gating control AUC " + fmt(control_auc));
  v.require(minutes <= 30, "runtime " + fmt(minutes) + " min");
  v.detail << "pooled AUC " << fmt(auc) << ", sensitivity " << fmt(sens) << ", specificity "
           << fmt(fraction(e.main.report, "specificity")) << "; control AUC " << fmt(control_auc) << "; "
           << fmt(e.main.seconds / 60, 3) << " + " << fmt(e.control.seconds / 60, 3) << " min";
  return v;
}

Verdict determinism() {
  Verdict v;
  const EndToEnd& e = end_to_end();
  v.require(e.main.code == 0 && e.rerun.code == 0, "a run failed");
  if (!v.pass) return v;
  v.require(e.main.metrics_text == e.rerun.metrics_text, "metrics.json differs");
  v.require(e.main.report["counts"] == e.rerun.report["counts"], "cumulative confusion differs");
  for (const char* f : {"predictions.csv", "folds.json"}) {
    v.require(read_text(e.dir / "main" / f) == read_text(e.dir / "rerun" / f), std::string(f) + " differs");
  }
  const auto& c = e.main.report["counts"];
  v.detail << "metrics.json " << e.main.metrics_text.size() << " bytes identical; cumulative (tp,fn,fp,tn) = ("
           << c["tp"] << "," << c["fn"] << "," << c["fp"] << "," << c["tn"] << ") in both runs";
  return v;
}

Verdict checkpoint_round_trip() {
  Verdict v;
  ModelConfig c;
  c.seq_len = 25;
  c.input_hw = 32;
  c.init_seed = 9;
  const auto w = ModelWeights::initialize(c);
  const fs::path p = fs::temp_directory_path() / ("mamaf_roundtrip_" + std::to_string(std::random_device{}()) + ".ckpt");
  save_checkpoint(w, p);
  const auto r = load_checkpoint(p, c);
  fs::remove(p);
  std::mt19937_64 rng(10);
  int subjects = 0;
  for (; subjects < 4; ++subjects) {
    std::array<Tensorf, kNumViews> views;
    for (auto& x : views) x = oracle::random_tensor<float>(c.view_shape(), rng, 0, 1);
    const Tensorf a = w.predict(views), b = r.predict(views);
    v.require(std::memcmp(a.data(), b.data(), sizeof(float) * 2) == 0, "outputs differ for subject " + std::to_string(subjects));
  }
  v.detail << subjects << " subjects, outputs bitwise identical after save/load";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"metric oracle", metric_oracle},
      {"shape oracle", shape_oracle},
      {"gradient check", gradient_check},
      {"kernel equivalence", kernel_equivalence},
      {"AUC equivalence", auc_equivalence},
      {"fold invariants", fold_invariants},
      {"end-to-end learning", learning_sanity},
      {"determinism", determinism},
      {"checkpoint round-trip", checkpoint_round_trip}};

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << v.detail.str() << (v.failures.empty() ? "" : " [failed: " + v.failures + "]") << std::endl;
    all = all && v.pass;
  }
  // Run directories are kept for inspection when something failed.
  if (e2e.ran && all) fs::remove_all(e2e.dir);
  else if (e2e.ran) std::cerr << "end-to-end artifacts kept in " << e2e.dir << '\n';
  return all ? 0 : 1;
}
