#pragma once

#include <optional>
#include <string>

#include "mamaf/gradcheck.hpp"

namespace mamaf {

struct SuiteOptions {
  std::uint64_t seed = 0;
  int samples = 10;  ///< minimum coordinates per check
  /// Central-difference step. Bias coordinates feed thousands of ReLUs, so
  /// larger steps routinely cross kinks.
  double epsilon = 1e-6;
  /// Test hook: negates the analytic gradient of this parameter before comparing.
  std::optional<std::string> flip_sign_of;
};

/// Analytic gradients from the float32 tape against 64-bit central differences.
/// Attention over 4 tokens of width 3; loss = <attention(x), R>. Tolerance 1e-3.
GradcheckReport check_attention(const SuiteOptions& opt);
/// Motion-aware module (2 channels) over a random [5,6,6,2] input, gradients w.r.t. its
/// parameters and input. Tolerance 1e-2.
GradcheckReport check_motion_aware(const SuiteOptions& opt);
/// Full network at N=25, 32x32, batch of two subjects, cross-entropy loss.
/// Every parameter tensor is sampled at least once. Tolerance 1e-2.
GradcheckReport check_model(const SuiteOptions& opt);

inline constexpr double kAttentionTolerance = 1e-3;
inline constexpr double kModuleTolerance = 1e-2;
inline constexpr double kModelTolerance = 1e-2;

}  // namespace mamaf
