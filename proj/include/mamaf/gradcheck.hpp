#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mamaf/tensor.hpp"

namespace mamaf {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

struct GradcheckOptions {
  double epsilon = 1e-3;
  double tolerance = 1e-2;
  /// Number of sampled coordinates; parameters are visited round-robin.
  int samples = 10;
  /// Denominator floor in the relative error, keeps near-zero gradients from
  /// dividing by ~0.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
  /// A coordinate whose forward and backward one-sided slopes disagree by more
  /// than the tolerance straddles a ReLU kink; it is redrawn up to this many
  /// times before being compared anyway.
  int max_redraws = 20;
};

struct CoordinateCheck {
  std::string parameter;
  Index index = 0;
  double analytic = 0, numeric = 0, rel_err = 0;
};

struct GradcheckReport {
  double max_rel_err = 0;
  bool pass = true;
  std::string worst_parameter;
  std::vector<CoordinateCheck> coordinates;
  int redrawn = 0;  ///< non-smooth coordinates replaced by fresh draws
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares analytic gradients against central differences
/// (f(p+e) - f(p-e)) / 2e of a 64-bit evaluation of the same function.
/// `analytic[i]` must have the shape of `params[i].value`.
template <typename AnalyticScalar>
GradcheckReport gradcheck(const std::function<double(const std::vector<Tensord>&)>& loss,
                          const std::vector<NamedTensor<double>>& params,
                          const std::vector<Tensor<AnalyticScalar>>& analytic, const GradcheckOptions& opt) {
  if (params.size() != analytic.size() || params.empty()) {
    throw ShapeError("gradcheck: need one analytic gradient per parameter");
  }
  std::vector<Tensord> point;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].value.shape(), analytic[i].shape(), "gradcheck");
    if (!params[i].value.all_finite()) throw NumericalError("gradcheck: non-finite value in " + params[i].name);
    if (!analytic[i].all_finite()) throw NumericalError("gradcheck: non-finite gradient for " + params[i].name);
    point.push_back(params[i].value);
  }

  std::mt19937_64 rng(opt.seed);
  const double center = loss(point);
  if (!std::isfinite(center)) throw NumericalError("gradcheck: non-finite loss at the evaluation point");
  struct Probe {
    double central, forward, backward;
  };
  auto probe = [&](std::size_t p, Index idx) {
    const double saved = point[p][idx];
    point[p][idx] = saved + opt.epsilon;
    const double up = loss(point);
    point[p][idx] = saved - opt.epsilon;
    const double down = loss(point);
    point[p][idx] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("gradcheck: non-finite loss while perturbing " + params[p].name);
    }
    return Probe{(up - down) / (2 * opt.epsilon), (up - center) / opt.epsilon, (center - down) / opt.epsilon};
  };

  GradcheckReport report;
  for (int s = 0; s < opt.samples; ++s) {
    const std::size_t p = static_cast<std::size_t>(s) % params.size();
    std::uniform_int_distribution<Index> pick(0, point[p].size() - 1);
    Index idx = pick(rng);
    Probe pr = probe(p, idx);
    for (int r = 0; r < opt.max_redraws && relative_error(pr.forward, pr.backward, opt.abs_floor) > opt.tolerance;
         ++r) {
      ++report.redrawn;
      idx = pick(rng);
      pr = probe(p, idx);
    }
    const double numeric = pr.central;
    CoordinateCheck c{params[p].name, idx, static_cast<double>(analytic[p][idx]), numeric, 0};
    c.rel_err = relative_error(c.analytic, c.numeric, opt.abs_floor);
    if (report.worst_parameter.empty() || c.rel_err > report.max_rel_err) {
      report.max_rel_err = c.rel_err;
      report.worst_parameter = c.parameter;
    }
    report.coordinates.push_back(std::move(c));
  }
  report.pass = report.max_rel_err <= opt.tolerance;
  return report;
}

}  // namespace mamaf
