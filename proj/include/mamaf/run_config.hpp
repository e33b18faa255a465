#pragma once

#include <filesystem>
#include <string>

#include "mamaf/model.hpp"
#include "mamaf/training.hpp"

namespace mamaf {

/// Everything a cross-validation run depends on, as one JSON object with flat keys.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path data;
  std::filesystem::path out;

  /// N=25, 32x32, 60 epochs, lr 5e-4, batch 1, no augmentation.
  static RunConfig desk();
  /// N=75, 224x224, 300 epochs, lr 1e-5, augmentation to 100 per class.
  static RunConfig paper();
  /// "desk" or "paper"; anything else is a ConfigError.
  static RunConfig profile(const std::string& name);

  void validate() const;
  /// Sorted keys, two-space indent.
  std::string to_json() const;
  /// Starts from `base` and overwrites the keys present in `text`. Unknown keys
  /// and wrongly typed values are ConfigErrors.
  static RunConfig from_json(const std::string& text, const RunConfig& base);
  /// Makes data/out absolute relative to `base_dir`.
  void resolve_paths(const std::filesystem::path& base_dir);
};

}  // namespace mamaf
