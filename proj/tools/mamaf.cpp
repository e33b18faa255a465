// Command-line front end: synth, cv, eval, gradcheck.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mamaf/data.hpp"
#include "mamaf/errors.hpp"
#include "mamaf/eval.hpp"
#include "mamaf/gradcheck_suite.hpp"
#include "mamaf/model.hpp"
#include "mamaf/run_config.hpp"
#include "mamaf/training.hpp"

namespace fs = std::filesystem;
using namespace mamaf;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

int verbosity = 0;

void log(int level, const std::string& line) {
  if (verbosity >= level) std::cerr << line << '\n';
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  long long pos = 20, neg = 20, frames = 40, hw = 32;
  std::uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a) {
  if (a.pos < 1 || a.neg < 1) throw ConfigError("--pos and --neg must both be >= 1");
  if (a.frames < 2) throw ConfigError("--frames must be >= 2");
  if (a.hw < 8) throw ConfigError("--hw must be >= 8");
  SynthOptions o;
  o.positives = static_cast<std::size_t>(a.pos);
  o.negatives = static_cast<std::size_t>(a.neg);
  o.frames = a.frames;
  o.hw = a.hw;
  o.seed = a.seed;
  const Manifest m = generate_synthetic_cohort(a.out, o);
  std::cout << "wrote " << m.samples.size() << " subjects (" << m.count(kPositive) << " positive, "
            << m.count(kNegative) << " negative) to " << a.out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct CvArgs {
  std::string profile = "desk";
  std::optional<fs::path> config, data, out;
  std::optional<long long> seq_len, hw, channels, head_hidden;
  std::optional<std::uint64_t> init_seed, seed;
  std::optional<int> epochs, batch_size, folds, threads;
  std::optional<double> lr, val_fraction;
  std::optional<std::size_t> augment_target;
  std::optional<bool> augment, motion_gating;
};

RunConfig effective_config(const CvArgs& a) {
  RunConfig c = RunConfig::profile(a.profile);
  if (a.config) {
    c = RunConfig::from_json(read_text(*a.config), c);
    c.resolve_paths(fs::absolute(*a.config).parent_path());
  }
  if (a.data) c.data = *a.data;
  if (a.out) c.out = *a.out;
  if (a.seq_len) c.model.seq_len = *a.seq_len;
  if (a.hw) c.model.input_hw = *a.hw;
  if (a.channels) c.model.channels = *a.channels;
  if (a.head_hidden) c.model.head_hidden = *a.head_hidden;
  if (a.init_seed) c.model.init_seed = *a.init_seed;
  if (a.motion_gating) c.model.motion_gating = *a.motion_gating;
  if (a.epochs) c.train.epochs = *a.epochs;
  if (a.lr) c.train.lr = *a.lr;
  if (a.batch_size) c.train.batch_size = *a.batch_size;
  if (a.seed) c.train.seed = *a.seed;
  if (a.augment) c.train.augment = *a.augment;
  if (a.augment_target) c.train.augment_target = *a.augment_target;
  if (a.folds) c.train.folds = *a.folds;
  if (a.val_fraction) c.train.val_fraction = *a.val_fraction;
  if (a.threads) c.train.threads = *a.threads;
  c.resolve_paths(fs::current_path());
  c.validate();
  if (c.data.empty()) throw ConfigError("no dataset: pass --data or set \"data\" in the config");
  if (c.out.empty()) throw ConfigError("no output directory: pass --out or set \"out\" in the config");
  return c;
}

int cmd_cv(const CvArgs& a) {
  RunConfig c = effective_config(a);
  const Manifest manifest = read_manifest(c.data);
  fs::create_directories(c.out);
  write_text(c.out / "config.json", c.to_json() + "\n");

  c.train.progress = [](const std::string& line) { log(1, line); };
  log(0, "cross-validating " + std::to_string(manifest.samples.size()) + " subjects, " +
             std::to_string(c.train.folds) + " folds, " + std::to_string(c.train.epochs) + " epochs");
  const CvResult r = run_cross_validation(manifest, c.model, c.train, c.out);

  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    const auto& o = r.folds[f];
    char buf[160];
    std::snprintf(buf, sizeof buf, "fold %zu: best epoch %d, tp=%lld fn=%lld fp=%lld tn=%lld", f,
                  o.log.best_epoch + 1, static_cast<long long>(o.counts.tp), static_cast<long long>(o.counts.fn),
                  static_cast<long long>(o.counts.fp), static_cast<long long>(o.counts.tn));
    log(0, buf);
  }
  std::cout << report_json(r.report) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint, data;
  std::optional<fs::path> folds, out;
  std::string split = "all";
  std::string part = "test";
};

std::vector<std::string> eval_subjects(const EvalArgs& a, const Manifest& manifest) {
  if (a.split == "all") {
    std::vector<std::string> ids;
    for (const auto& s : manifest.samples) ids.push_back(s.subject_id);
    return ids;
  }
  std::size_t fold = 0;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(a.split, &used);
    if (used != a.split.size() || v < 0) throw std::invalid_argument("");
    fold = static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("--split must be 'all' or a fold index, got '" + a.split + "'");
  }
  if (!a.folds) throw ConfigError("--split " + a.split + " needs --folds (the run's folds.json)");
  const FoldPlan plan = FoldPlan::from_json(read_text(*a.folds));
  plan.validate(manifest);
  if (fold >= plan.folds.size()) {
    throw ConfigError("unknown fold " + a.split + " (plan has " + std::to_string(plan.folds.size()) + " folds)");
  }
  const Fold& f = plan.folds[fold];
  if (a.part == "test") return f.test;
  if (a.part == "validation") return f.validation;
  return f.train;
}

int cmd_eval(const EvalArgs& a) {
  const ModelWeights w = load_checkpoint(a.checkpoint);
  const Manifest manifest = read_manifest(a.data);
  const auto ids = eval_subjects(a, manifest);
  const SampleSource source(manifest, w.config.seq_len, w.config.input_hw);
  const auto preds = predict(w, ids, source);
  const ConfusionMatrix cm = confusion_from_predictions(preds);
  bool pos = false, neg = false;
  for (const auto& p : preds) (p.label == kPositive ? pos : neg) = true;
  const std::optional<double> auc = pos && neg ? std::optional(roc_auc(preds).auc) : std::nullopt;
  const std::string json = metrics_json(cm, auc);
  if (a.out) {
    fs::create_directories(*a.out);
    write_text(*a.out / "metrics.json", json + "\n");
    write_text(*a.out / "predictions.csv", predictions_csv(preds));
  }
  std::cout << json << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string scope = "layer";
  std::uint64_t seed = 0;
  std::optional<std::string> flip_sign_of;
};

bool report(const std::string& what, const GradcheckReport& r, double tolerance) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %-14s max_rel_err=%.3e tol=%.0e coords=%zu redrawn=%d worst=%s",
                r.pass ? "PASS" : "FAIL", what.c_str(), r.max_rel_err, tolerance, r.coordinates.size(), r.redrawn,
                r.worst_parameter.c_str());
  std::cout << buf << '\n';
  for (const auto& c : r.coordinates) {
    std::snprintf(buf, sizeof buf, "  %s[%lld] analytic=% .6e numeric=% .6e rel=%.2e", c.parameter.c_str(),
                  static_cast<long long>(c.index), c.analytic, c.numeric, c.rel_err);
    log(1, buf);
  }
  return r.pass;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  SuiteOptions o;
  o.seed = a.seed;
  o.flip_sign_of = a.flip_sign_of;
  bool ok = true;
  std::string failed;
  auto run = [&](const std::string& name, const GradcheckReport& r, double tol) {
    if (!report(name, r, tol) && failed.empty()) failed = name + " (worst parameter " + r.worst_parameter + ")";
    ok = ok && r.pass;
  };
  if (a.scope == "layer") {
    // The hook names a parameter of one check; the others run unmodified.
    SuiteOptions plain = o;
    plain.flip_sign_of.reset();
    const bool in_motion = o.flip_sign_of && *o.flip_sign_of != "x";
    run("attention", check_attention(in_motion ? plain : o), kAttentionTolerance);
    run("motion_aware", check_motion_aware(o.flip_sign_of && !in_motion ? plain : o), kModuleTolerance);
  } else {
    run("model", check_model(o), kModelTolerance);
  }
  if (!ok) throw NumericalError("gradient check failed: " + failed);
  return kOk;
}

int exit_code_for(const CheckpointError& e) {
  return e.kind() == CheckpointError::Kind::config_mismatch ? kUsage : kData;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* v = std::getenv("MAMAF_VERBOSE")) verbosity = std::atoi(v);

  CLI::App app{"Multi-view motion-aware video classifier: data generation, cross-validation, evaluation"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", verbosity, "More progress output (repeatable; MAMAF_VERBOSE sets the default)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate the synthetic unilateral-motion cohort");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--pos", synth.pos, "Positive subjects")->capture_default_str();
  s->add_option("--neg", synth.neg, "Negative subjects")->capture_default_str();
  s->add_option("--frames", synth.frames, "Frames per view")->capture_default_str();
  s->add_option("--hw", synth.hw, "Frame side in pixels")->capture_default_str();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

  CvArgs cv;
  auto* c = app.add_subcommand("cv", "Stratified k-fold cross-validation with per-fold and pooled reports");
  c->add_option("--profile", cv.profile, "Base settings: desk or paper")->capture_default_str();
  c->add_option("--config", cv.config, "JSON run config (applied over the profile)");
  c->add_option("--data", cv.data, "Dataset directory holding manifest.jsonl");
  c->add_option("--out", cv.out, "Run directory");
  c->add_option("--seq-len", cv.seq_len, "Frames sampled per view (multiple of 25)");
  c->add_option("--hw", cv.hw, "Input frame side (multiple of 16)");
  c->add_option("--channels", cv.channels, "Input channels");
  c->add_option("--head-hidden", cv.head_hidden, "Dense head hidden units");
  c->add_option("--init-seed", cv.init_seed, "Weight initialization seed (fold index is added)");
  c->add_option("--motion-gating", cv.motion_gating, "Enable the motion-aware modules (true/false)");
  c->add_flag_callback("--no-motion-gating", [&] { cv.motion_gating = false; }, "Bypass the motion-aware modules");
  c->add_option("--epochs", cv.epochs, "Training epochs per fold");
  c->add_option("--lr", cv.lr, "Adam learning rate");
  c->add_option("--batch-size", cv.batch_size, "Minibatch size");
  c->add_option("--seed", cv.seed, "Fold planning and shuffling seed");
  c->add_option("--augment", cv.augment, "Balance the training split with rotations/flips (true/false)");
  c->add_option("--augment-target", cv.augment_target, "Samples per class after augmentation");
  c->add_option("--folds", cv.folds, "Number of folds");
  c->add_option("--val-fraction", cv.val_fraction, "Validation share of each fold's non-test subjects");
  c->add_option("--threads", cv.threads, "Folds trained concurrently");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a saved checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--folds", ev.folds, "folds.json of the run that produced the checkpoint");
  e->add_option("--split", ev.split, "'all' or a fold index")->capture_default_str();
  e->add_option("--part", ev.part, "Subset of the fold: test, validation or train")
      ->check(CLI::IsMember({"test", "validation", "train"}))
      ->capture_default_str();
  e->add_option("--out", ev.out, "Directory for metrics.json and predictions.csv");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  g->add_option("--scope", gc.scope, "layer or model")->check(CLI::IsMember({"layer", "model"}))->capture_default_str();
  g->add_option("--seed", gc.seed, "Seed for inputs, weights and sampled coordinates")->capture_default_str();
  g->add_option("--flip-sign", gc.flip_sign_of, "Test hook: negate one parameter's analytic gradient")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (c->parsed()) return cmd_cv(cv);
    if (e->parsed()) return cmd_eval(ev);
    if (g->parsed()) return cmd_gradcheck(gc);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& err) {
    std::cerr << "checkpoint error: " << err.what() << '\n';
    return exit_code_for(err);
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return kNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
