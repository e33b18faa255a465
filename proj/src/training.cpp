#include "mamaf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>
#include <mutex>
#include <set>
#include <thread>

namespace mamaf {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0,1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::string TrainLog::csv() const {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e + 1, train_loss[e], val_loss[e]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sample access
// ---------------------------------------------------------------------------

SampleSource::SampleSource(Manifest manifest, Index seq_len, Index hw, std::size_t cache_budget_bytes)
    : manifest_(std::move(manifest)), seq_len_(seq_len), hw_(hw) {
  const std::size_t per_sample = kNumViews * static_cast<std::size_t>(seq_len * hw * hw * 3) * sizeof(float);
  if (per_sample * manifest_.samples.size() <= cache_budget_bytes) {
    for (const auto& vs : manifest_.samples) {
      cache_.emplace(vs.subject_id, std::make_shared<const Sample>(load_sample(manifest_, vs, seq_len_, hw_)));
    }
  }
}

std::shared_ptr<const Sample> SampleSource::get(const std::string& subject_id) const {
  if (auto it = cache_.find(subject_id); it != cache_.end()) return it->second;
  return std::make_shared<const Sample>(load_sample(manifest_, manifest_.find(subject_id), seq_len_, hw_));
}

Sample SampleSource::materialize(const TrainItem& item) const {
  const auto src = get(item.source_id);
  Sample s = *src;
  s.subject_id = item.id;
  if (!item.transform.is_identity()) {
    s.augmented = true;
    for (auto& v : s.views) v = augment(v, item.transform);
  }
  return s;
}

std::vector<TrainItem> training_items(const Manifest& manifest, const std::vector<std::string>& train_ids,
                                      const TrainConfig& config, std::uint64_t seed) {
  std::vector<TrainItem> items;
  std::vector<int> labels;
  for (const auto& id : train_ids) {
    const int label = manifest.find(id).label;
    items.push_back({id, id, label, {}});
    labels.push_back(label);
  }
  if (!config.augment) return items;
  for (const auto& d : plan_balance(labels, config.augment_target, seed)) {
    const TrainItem& src = items[d.source];
    items.push_back({src.id + "#aug" + std::to_string(d.copy), src.source_id, src.label, d.transform});
  }
  return items;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::array<Tensorf, kNumViews> views_of(const Sample& s) { return s.views; }

Tensorf batch_probabilities(const ModelWeights& w, const std::vector<std::shared_ptr<const Sample>>& samples) {
  std::vector<Tensorf> rows;
  for (const auto& s : samples) rows.push_back(w.predict(views_of(*s)));
  return stack(rows);
}

}  // namespace

double mean_loss(const ModelWeights& weights, const std::vector<std::shared_ptr<const Sample>>& samples) {
  if (samples.empty()) throw ConfigError("mean_loss: no samples");
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s->label);
  return cross_entropy(batch_probabilities(weights, samples), one_hot<float>(labels))[0];
}

TrainResult train_fold(const ModelConfig& model, const std::vector<TrainItem>& train,
                       const std::vector<std::string>& validation, const SampleSource& source,
                       const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  model.validate();
  if (train.empty()) throw ConfigError("train_fold: empty training set");
  if (validation.empty()) throw ConfigError("train_fold: empty validation set");
  {
    std::set<std::string> train_sources;
    for (const auto& t : train) train_sources.insert(t.source_id);
    for (const auto& v : validation) {
      if (train_sources.count(v)) throw DataError("train_fold: subject '" + v + "' is in both train and validation");
    }
  }

  std::vector<std::shared_ptr<const Sample>> val;
  for (const auto& id : validation) val.push_back(source.get(id));

  ModelWeights weights = ModelWeights::initialize(model);
  AdamState<float> adam;
  adam.options.lr = config.lr;
  std::vector<Tensorf*> param_ptrs;
  for (auto& [name, p] : collect_params(weights.params)) param_ptrs.push_back(p);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{weights, {}};
  double best = std::numeric_limits<double>::infinity();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t b0 = 0, bi = 0; b0 < order.size(); b0 += batch, ++bi) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      Tape<float> tape;
      const NetParams<Var<float>> vars = record_params(tape, weights.params);
      std::vector<Var<float>> outputs;
      std::vector<int> labels;
      for (std::size_t i = b0; i < b1; ++i) {
        const Sample s = source.materialize(train[order[i]]);
        std::array<Var<float>, kNumViews> views;
        for (std::size_t v = 0; v < kNumViews; ++v) views[v] = tape.constant(s.views[v]);
        outputs.push_back(forward(weights.config, vars, views));
        labels.push_back(s.label);
      }
      const Var<float> loss = cross_entropy(stack(outputs), one_hot<float>(labels));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(bi + 1));
      }
      tape.backward(loss);
      const auto grads = gradients(tape, vars);
      for (std::size_t g = 0; g < grads.size(); ++g) {
        if (!grads[g].all_finite()) {
          throw NumericalError("non-finite gradient for " + collect_params(vars)[g].first + " at epoch " +
                               std::to_string(epoch + 1) + ", batch " + std::to_string(bi + 1));
        }
      }
      adam_step(adam, param_ptrs, grads);
      loss_sum += value * static_cast<double>(b1 - b0);
    }

    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double val_loss = mean_loss(weights, val);
    if (!std::isfinite(val_loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
    }
    result.log.train_loss.push_back(train_loss);
    result.log.val_loss.push_back(val_loss);
    result.log.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (val_loss < best) {
      best = val_loss;
      result.log.best_epoch = epoch;
      result.best = weights;
    }
    if (config.progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %d/%d train %.5f val %.5f%s (%.1fs)", epoch + 1, config.epochs, train_loss,
                    val_loss, result.log.best_epoch == epoch ? " *" : "", result.log.seconds.back());
      config.progress(buf);
    }
  }
  return result;
}

std::vector<ScoredPrediction> predict(const ModelWeights& weights, const std::vector<std::string>& subject_ids,
                                      const SampleSource& source) {
  std::vector<ScoredPrediction> out;
  for (const auto& id : subject_ids) {
    const auto s = source.get(id);
    const Tensorf p = weights.predict(views_of(*s));
    if (!p.all_finite()) throw NumericalError("non-finite prediction for subject " + id);
    out.push_back({id, static_cast<double>(p[1]), s->label});
  }
  return out;
}

std::string predictions_csv(const std::vector<ScoredPrediction>& preds) {
  std::string out = "subject_id,label,score\n";
  char buf[64];
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof buf, ",%d,%.9g\n", p.label, p.score);
    out += p.subject_id + buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

CvResult run_cross_validation(const Manifest& manifest, const ModelConfig& model, const TrainConfig& config,
                              const std::optional<fs::path>& out_dir) {
  config.validate();
  model.validate();
  CvResult cv;
  cv.plan = plan_folds(manifest, config.folds, config.val_fraction, config.seed);
  cv.plan.validate(manifest);

  const SampleSource source(manifest, model.seq_len, model.input_hw);
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text(*out_dir / "folds.json", cv.plan.to_json() + "\n");
  }

  const auto k = cv.plan.folds.size();
  cv.folds.resize(k);
  std::vector<ModelWeights> best(k);
  std::vector<std::exception_ptr> errors(k);

  auto run_fold = [&](std::size_t f) {
    try {
      const Fold& fold = cv.plan.folds[f];
      const std::uint64_t fold_seed = config.seed + f;
      const auto items = training_items(manifest, fold.train, config, fold_seed);
      // Augmented copies only ever come from this fold's training subjects.
      const std::set<std::string> held_out = [&] {
        std::set<std::string> s(fold.validation.begin(), fold.validation.end());
        s.insert(fold.test.begin(), fold.test.end());
        return s;
      }();
      for (const auto& it : items) {
        if (held_out.count(it.source_id)) throw DataError("training item '" + it.id + "' leaks a held-out subject");
      }

      TrainConfig fold_config = config;
      if (config.progress) {
        fold_config.progress = [&config, f](const std::string& line) {
          config.progress("fold " + std::to_string(f) + ": " + line);
        };
      }
      ModelConfig fold_model = model;
      fold_model.init_seed = model.init_seed + f;
      TrainResult trained = train_fold(fold_model, items, fold.validation, source, fold_config, fold_seed);

      FoldOutcome& out = cv.folds[f];
      out.log = std::move(trained.log);
      out.augmented_train = items.size() - fold.train.size();
      out.predictions = predict(trained.best, fold.test, source);
      out.counts = confusion_from_predictions(out.predictions);
      bool has_pos = false, has_neg = false;
      for (const auto& p : out.predictions) (p.label ? has_pos : has_neg) = true;
      if (has_pos && has_neg) out.roc = roc_auc(out.predictions);
      best[f] = std::move(trained.best);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  if (config.threads <= 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::vector<std::size_t> next(1, 0);
    std::mutex m;
    std::vector<std::jthread> pool;
    for (int t = 0; t < config.threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t f;
          {
            std::lock_guard lock(m);
            if (next[0] >= k) return;
            f = next[0]++;
          }
          run_fold(f);
        }
      });
    }
  }
  for (std::size_t f = 0; f < k; ++f) {
    if (!errors[f]) continue;
    try {
      std::rethrow_exception(errors[f]);
    } catch (const ConfigError& e) {
      throw ConfigError("fold " + std::to_string(f) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(f) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("fold " + std::to_string(f) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error("fold " + std::to_string(f) + ": " + e.what());
    }
  }

  std::vector<ScoredPrediction> pooled;
  std::vector<ConfusionMatrix> counts;
  for (const auto& f : cv.folds) {
    pooled.insert(pooled.end(), f.predictions.begin(), f.predictions.end());
    counts.push_back(f.counts);
    cv.report.fold_aucs.push_back(f.roc ? f.roc->auc : std::numeric_limits<double>::quiet_NaN());
  }
  cv.cumulative = cumulative_confusion(counts);
  if (cv.cumulative.total() != static_cast<std::int64_t>(manifest.samples.size())) {
    throw DataError("test folds did not cover the cohort exactly once");
  }
  cv.pooled = roc_auc(pooled);
  cv.report.counts = cv.cumulative;
  cv.report.metrics = metrics(cv.cumulative);
  cv.report.auc = cv.pooled.auc;
  cv.report.fold_counts = counts;

  if (out_dir) {
    std::vector<std::pair<std::string, RocCurve>> fold_curves;
    std::vector<LossCurve> losses;
    for (std::size_t f = 0; f < k; ++f) {
      const fs::path dir = *out_dir / ("fold_" + std::to_string(f));
      fs::create_directories(dir);
      const FoldOutcome& o = cv.folds[f];
      save_checkpoint(best[f], dir / "best.ckpt");
      write_text(dir / "train_log.csv", o.log.csv());
      write_text(dir / "test_predictions.csv", predictions_csv(o.predictions));
      write_text(dir / "metrics.json", metrics_json(o.counts, o.roc ? std::optional(o.roc->auc) : std::nullopt) + "\n");
      if (o.roc) {
        write_text(dir / "roc.csv", roc_csv(*o.roc));
        fold_curves.emplace_back("fold " + std::to_string(f), *o.roc);
      }
      write_text(dir / "loss_curve.svg", loss_svg({{"fold " + std::to_string(f), o.log.train_loss, o.log.val_loss}}));
      losses.push_back({"fold " + std::to_string(f), o.log.train_loss, o.log.val_loss});
    }
    write_text(*out_dir / "predictions.csv", predictions_csv(pooled));
    emit_report(cv.report, cv.pooled, fold_curves, losses, *out_dir);
  }
  return cv;
}

}  // namespace mamaf
