#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "deadtime/core.hpp"
#include "deadtime/histograms.hpp"
#include "deadtime/optimizer.hpp"

namespace deadtime {

enum class LossKind { deadtime, poisson };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// exp() of the log-flux left the representable range.
class FluxOverflow : public DomainError {
 public:
  FluxOverflow(Eigen::Index bin, double exponent);
  Eigen::Index bin() const noexcept { return bin_; }
  double exponent() const noexcept { return exponent_; }

 private:
  Eigen::Index bin_;
  double exponent_;
};

/// What a fit is scored against: sum_m (exposure_m * lambda_m - counts_m * ln lambda_m).
struct BinnedTarget {
  Eigen::VectorXd exposure;  // shot-seconds of live time
  Eigen::VectorXd counts;
  double shot_seconds = 0.0;  // N * dt, used for the constant-rate start
};

BinnedTarget make_target(const Observation& observation, LossKind kind);
/// Poisson target on Müller-corrected counts. Throws NonPhysicalEstimate.
BinnedTarget muller_target(const Observation& observation);

double target_loss(const BinnedTarget& target, const Eigen::VectorXd& rates);

// ---------------------------------------------------------------------------
// Forward models

/// lambda(t) = exp(sum_j c_j T_j(u(t))) + b, u the affine map of the window onto [-1, 1].
struct ChebyshevModel {
  Eigen::VectorXd coefficients = Eigen::VectorXd::Zero(1);
  double background = 0.0;

  int order() const { return static_cast<int>(coefficients.size()) - 1; }
};

/// Log-flux interpolated by a natural cubic spline through one control value
/// per knot interval (at the interval midpoint), plus background. One interval
/// is a constant, two a straight line in log-flux.
struct SplineModel {
  std::vector<Picoseconds> knots;  // interval boundaries, offsets from window start
  Eigen::VectorXd values;          // one per interval
  double background = 0.0;

  std::size_t num_intervals() const { return knots.empty() ? 0 : knots.size() - 1; }
};

using FluxModel = std::variant<ChebyshevModel, SplineModel>;

/// T_0(u) .. T_order(u) by the three-term recurrence. DomainError for |u| > 1.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> chebyshev_eval(int order, Scalar u) {
  using std::abs;
  if (order < 0) throw DomainError("Chebyshev order must be non-negative");
  if (abs(u) > Scalar(1)) throw DomainError("Chebyshev argument outside [-1, 1]");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> t(order + 1);
  t[0] = Scalar(1);
  if (order >= 1) t[1] = u;
  for (int j = 1; j < order; ++j) t[j + 1] = Scalar(2) * u * t[j] - t[j - 1];
  return t;
}

/// Map of bin left edges onto [-1, 1).
Eigen::VectorXd normalized_bin_times(const DetectorConfig& config);

/// Rows: bins. Columns: T_0..T_order at the normalised left edge.
Eigen::MatrixXd chebyshev_design(int order, const DetectorConfig& config);
/// Rows: bins. Columns: sensitivity of log-flux to each interval's control value.
Eigen::MatrixXd spline_design(const std::vector<Picoseconds>& knots, const DetectorConfig& config);

/// Evenly spaced dyadic knots at the given depth (2^depth intervals). Knots fall
/// on bin edges, so num_bins must be divisible by 2^depth.
std::vector<Picoseconds> dyadic_knots(const DetectorConfig& config, int depth);

FluxCurve forward_flux(const ChebyshevModel& model, const DetectorConfig& config);
FluxCurve forward_flux(const SplineModel& model, const DetectorConfig& config);
FluxCurve forward_flux(const FluxModel& model, const DetectorConfig& config);

// ---------------------------------------------------------------------------
// Fitting

/// Even-indexed shots form the fit set, odd-indexed the validation set.
std::pair<ShotTimestamps, ShotTimestamps> thin_alternating(const ShotTimestamps& data);

struct FitDiagnostics {
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
};

struct ModelFit {
  FluxModel model;
  double fit_loss = 0.0;
  FitDiagnostics diagnostics;
};

/// Fitting objective in parameter space. x holds the basis coefficients followed
/// by beta, with log(lambda - b) = design * coefficients and b = scale * softplus(beta).
/// Returns the target loss and writes its gradient in x.
double design_objective(const BinnedTarget& target, const Eigen::MatrixXd& design, double scale,
                        const Eigen::VectorXd& x, Eigen::VectorXd& grad);

/// Initial rate max(total_counts / (N M dt), 1e-3 Hz).
double initial_rate(const BinnedTarget& target);
ChebyshevModel initial_chebyshev(const BinnedTarget& target, int order);

/// Minimises the target loss over the model's coefficients and background
/// (b >= 0 via softplus), starting from `start`.
ModelFit minimize(const BinnedTarget& target, const FluxModel& start, const DetectorConfig& grid,
                  const OptimizerSettings& settings = {});
ModelFit minimize(LossKind kind, const FluxModel& start, const Observation& fit,
                  const OptimizerSettings& settings = {});

struct OrderRange {
  int min = 0;
  int max = 20;
};

struct CandidateScore {
  int order = -1;              // Chebyshev order, -1 for splines
  std::size_t intervals = 0;   // spline intervals, 0 for Chebyshev
  double fit_loss = 0.0;
  double validation_loss = 0.0;
  bool converged = false;
  bool accepted = false;
};

struct FitResult {
  FluxModel model;
  double fit_loss = 0.0;
  double validation_loss = 0.0;
  int selected_order = -1;
  std::vector<Picoseconds> selected_knots;
  FitDiagnostics diagnostics;
  std::vector<CandidateScore> candidates;
};

/// Fits every order in range on `fit` and keeps the one with the smallest
/// validation loss (ties go to the lower order). Each order starts from the
/// previous order's optimum padded with a zero coefficient.
FitResult cross_validate(const BinnedTarget& fit, const BinnedTarget& validation, const DetectorConfig& grid,
                         OrderRange orders, const OptimizerSettings& settings = {});
FitResult cross_validate(const Observation& fit, const Observation& validation, LossKind kind,
                         OrderRange orders, const OptimizerSettings& settings = {});
FitResult cross_validate(const ShotTimestamps& data, const DetectorConfig& config, LossKind kind,
                         OrderRange orders, const OptimizerSettings& settings = {});

/// Dyadic knot trimming: fit the 2^max_depth grid, then visit the tree from the
/// root down, collapsing each node's subtree into one interval whenever that
/// does not raise the validation loss.
FitResult trim_spline_knots(const BinnedTarget& fit, const BinnedTarget& validation, const DetectorConfig& grid,
                            int max_depth, const OptimizerSettings& settings = {});
FitResult trim_spline_knots(const Observation& fit, const Observation& validation, LossKind kind,
                            int max_depth, const OptimizerSettings& settings = {});
FitResult trim_spline_knots(const ShotTimestamps& data, const DetectorConfig& config, LossKind kind,
                            int max_depth, const OptimizerSettings& settings = {});

}  // namespace deadtime
