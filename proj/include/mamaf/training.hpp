#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mamaf/data.hpp"
#include "mamaf/eval.hpp"
#include "mamaf/model.hpp"

namespace mamaf {

struct TrainConfig {
  int epochs = 300;
  double lr = 1e-5;
  int batch_size = 2;
  std::uint64_t seed = 0;
  bool augment = true;
  std::size_t augment_target = 100;  ///< per class, training split only
  int folds = 5;
  double val_fraction = 0.2;
  int threads = 1;  ///< folds trained concurrently; 1 keeps everything on one thread
  /// Receives one line per epoch when set.
  std::function<void(const std::string&)> progress;

  void validate() const;
};

struct TrainLog {
  std::vector<double> train_loss, val_loss, seconds;
  int best_epoch = -1;  ///< 0-based; argmin of val_loss, earliest on ties

  std::string csv() const;
};

struct TrainResult {
  ModelWeights best;
  TrainLog log;
};

/// Training sample reference: an original subject or an augmented copy of one.
struct TrainItem {
  std::string id;
  std::string source_id;
  int label = kNegative;
  SpatialTransform transform;
};

/// Resolves subject ids to loaded samples (frames sampled and resized for the
/// model config). Caches everything when the cohort fits the memory budget.
class SampleSource {
public:
  SampleSource(Manifest manifest, Index seq_len, Index hw, std::size_t cache_budget_bytes = std::size_t{2} << 30);

  const Manifest& manifest() const { return manifest_; }
  /// Thread-safe for concurrent readers.
  std::shared_ptr<const Sample> get(const std::string& subject_id) const;
  Sample materialize(const TrainItem& item) const;

private:
  Manifest manifest_;
  Index seq_len_, hw_;
  std::map<std::string, std::shared_ptr<const Sample>> cache_;
};

/// Originals plus, when enabled, the augmented copies that balance each class
/// to the configured target. Mirrors balance_augment's draws.
std::vector<TrainItem> training_items(const Manifest& manifest, const std::vector<std::string>& train_ids,
                                      const TrainConfig& config, std::uint64_t seed);

/// Mean cross-entropy of `weights` over `samples` (no augmentation).
double mean_loss(const ModelWeights& weights, const std::vector<std::shared_ptr<const Sample>>& samples);

/// Shuffled minibatch Adam training; returns the weights with the lowest
/// validation loss seen at the end of any epoch.
TrainResult train_fold(const ModelConfig& model, const std::vector<TrainItem>& train,
                       const std::vector<std::string>& validation, const SampleSource& source,
                       const TrainConfig& config, std::uint64_t seed);

std::vector<ScoredPrediction> predict(const ModelWeights& weights, const std::vector<std::string>& subject_ids,
                                      const SampleSource& source);

struct FoldOutcome {
  TrainLog log;
  std::vector<ScoredPrediction> predictions;
  ConfusionMatrix counts;
  std::optional<RocCurve> roc;  ///< absent when the test fold holds a single class
  std::size_t augmented_train = 0;
};

struct CvResult {
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  ConfusionMatrix cumulative;
  RocCurve pooled;
  Report report;
};

/// Full k-fold protocol. With `out_dir`, writes folds.json, per-fold
/// checkpoints/logs/predictions and the pooled report files.
CvResult run_cross_validation(const Manifest& manifest, const ModelConfig& model, const TrainConfig& config,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string predictions_csv(const std::vector<ScoredPrediction>& preds);

}  // namespace mamaf
