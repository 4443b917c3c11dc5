#pragma once

#include <vector>

#include <Eigen/Core>

#include "deadtime/core.hpp"
#include "deadtime/histograms.hpp"

namespace deadtime {

/// Amplitude T* = sum(Y^e) / (N dt sum(lambda)) that minimises the Poisson
/// loss of T * lambda against the evaluation counts. DomainError when the
/// fitted flux sums to zero.
double optimal_scale(const FluxCurve& fit, const CountHistogram& eval, const DetectorConfig& eval_config);

struct EvaluationScore {
  double loss = 0.0;
  double scale = 0.0;
};

/// Poisson loss of T* lambda against the evaluation histogram.
EvaluationScore evaluation_loss(const FluxCurve& fit, const CountHistogram& eval, const DetectorConfig& eval_config);
EvaluationScore evaluation_loss(const FluxCurve& fit, const ShotTimestamps& eval, const DetectorConfig& eval_config);

enum class Scaling {
  optimal,  // rescale the fit by sum(truth) / sum(fit) first
  none,
};

/// Root-mean-square difference on a shared grid. InputError on grid mismatch.
double rmse(const FluxCurve& fit, const FluxCurve& truth, Scaling scaling = Scaling::optimal);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace deadtime
