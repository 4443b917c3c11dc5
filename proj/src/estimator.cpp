#include "deadtime/estimator.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <sstream>

#include <Eigen/LU>

#include "deadtime/models.hpp"

namespace deadtime {

const char* to_string(LossKind kind) { return kind == LossKind::deadtime ? "deadtime" : "poisson"; }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "deadtime") return LossKind::deadtime;
  if (name == "poisson") return LossKind::poisson;
  throw ConfigError("loss", "expected 'deadtime' or 'poisson', got '" + name + "'");
}

FluxOverflow::FluxOverflow(Eigen::Index bin, double exponent)
    : DomainError("flux model overflows exp() at bin " + std::to_string(bin) + " (log-flux " +
                  std::to_string(exponent) + ")"),
      bin_(bin),
      exponent_(exponent) {}

// ---------------------------------------------------------------------------
// Targets

BinnedTarget make_target(const Observation& observation, LossKind kind) {
  const DetectorConfig& config = observation.config;
  BinnedTarget target;
  target.exposure = kind == LossKind::deadtime ? deadtime_exposure(observation.active, config)
                                               : poisson_exposure(config);
  target.counts = observation.counts.as_double();
  target.shot_seconds = static_cast<double>(config.num_shots) * config.bin_width_seconds();
  return target;
}

BinnedTarget muller_target(const Observation& observation) {
  const DetectorConfig& config = observation.config;
  BinnedTarget target;
  target.shot_seconds = static_cast<double>(config.num_shots) * config.bin_width_seconds();
  target.exposure = poisson_exposure(config);
  target.counts = muller_correct(observation.counts, config) * target.shot_seconds;
  return target;
}

double target_loss(const BinnedTarget& target, const Eigen::VectorXd& rates) {
  return binned_nll(rates, target.exposure, target.counts);
}

// ---------------------------------------------------------------------------
// Bases

Eigen::VectorXd normalized_bin_times(const DetectorConfig& config) {
  const auto m = static_cast<Eigen::Index>(config.num_bins);
  Eigen::VectorXd u(m);
  for (Eigen::Index i = 0; i < m; ++i) u[i] = 2.0 * static_cast<double>(i) / static_cast<double>(m) - 1.0;
  return u;
}

Eigen::MatrixXd chebyshev_design(int order, const DetectorConfig& config) {
  const Eigen::VectorXd u = normalized_bin_times(config);
  Eigen::MatrixXd design(u.size(), order + 1);
  for (Eigen::Index i = 0; i < u.size(); ++i) design.row(i) = chebyshev_eval(order, u[i]).transpose();
  return design;
}

namespace {

void check_knots(const std::vector<Picoseconds>& knots, const DetectorConfig& config) {
  if (knots.size() < 2) throw InputError("spline needs at least two knots");
  if (knots.front() != 0 || knots.back() != config.window_length())
    throw InputError("spline knots must span the acquisition window");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (knots[i] <= knots[i - 1]) throw InputError("spline knots must be strictly increasing");
}

}  // namespace

Eigen::MatrixXd spline_design(const std::vector<Picoseconds>& knots, const DetectorConfig& config) {
  check_knots(knots, config);
  const auto intervals = static_cast<Eigen::Index>(knots.size() - 1);
  const auto bins = static_cast<Eigen::Index>(config.num_bins);
  Eigen::VectorXd mid(intervals);
  for (Eigen::Index k = 0; k < intervals; ++k)
    mid[k] = 0.5 * (static_cast<double>(knots[k]) + static_cast<double>(knots[k + 1]));
  Eigen::VectorXd t(bins);
  for (Eigen::Index i = 0; i < bins; ++i) t[i] = static_cast<double>(i) * static_cast<double>(config.bin_width);

  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(bins, intervals);
  if (intervals == 1) {
    design.setOnes();
    return design;
  }

  // Second derivatives at the control points as a linear map of the values;
  // natural end conditions pin the first and last to zero.
  Eigen::VectorXd h = mid.tail(intervals - 1) - mid.head(intervals - 1);
  Eigen::MatrixXd curvature = Eigen::MatrixXd::Zero(intervals, intervals);
  if (intervals >= 3) {
    const Eigen::Index n = intervals - 2;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, intervals);
    for (Eigen::Index i = 1; i <= n; ++i) {
      a(i - 1, i - 1) = 2.0 * (h[i - 1] + h[i]);
      if (i > 1) a(i - 1, i - 2) = h[i - 1];
      if (i < n) a(i - 1, i) = h[i];
      rhs(i - 1, i - 1) = 6.0 / h[i - 1];
      rhs(i - 1, i) = -6.0 / h[i - 1] - 6.0 / h[i];
      rhs(i - 1, i + 1) = 6.0 / h[i];
    }
    curvature.middleRows(1, n) = a.partialPivLu().solve(rhs);
  }

  Eigen::RowVectorXd unit(intervals);
  for (Eigen::Index i = 0; i < bins; ++i) {
    const double x = t[i];
    if (x <= mid[0]) {
      // Linear continuation; the natural spline has zero curvature at the ends.
      const double h0 = h[0];
      Eigen::RowVectorXd slope = -curvature.row(1) * (h0 / 6.0);
      slope[0] -= 1.0 / h0;
      slope[1] += 1.0 / h0;
      design.row(i) = slope * (x - mid[0]);
      design(i, 0) += 1.0;
    } else if (x >= mid[intervals - 1]) {
      const Eigen::Index last = intervals - 1;
      const double hl = h[last - 1];
      Eigen::RowVectorXd slope = curvature.row(last - 1) * (hl / 6.0);
      slope[last] += 1.0 / hl;
      slope[last - 1] -= 1.0 / hl;
      design.row(i) = slope * (x - mid[last]);
      design(i, last) += 1.0;
    } else {
      const auto upper = std::upper_bound(mid.data(), mid.data() + intervals, x);
      const Eigen::Index k = std::clamp<Eigen::Index>((upper - mid.data()) - 1, 0, intervals - 2);
      const double hk = h[k];
      const double a = (mid[k + 1] - x) / hk;
      const double b = (x - mid[k]) / hk;
      design.row(i) = ((a * a * a - a) * hk * hk / 6.0) * curvature.row(k) +
                      ((b * b * b - b) * hk * hk / 6.0) * curvature.row(k + 1);
      design(i, k) += a;
      design(i, k + 1) += b;
    }
  }
  return design;
}

std::vector<Picoseconds> dyadic_knots(const DetectorConfig& config, int depth) {
  if (depth < 0 || depth > 30) throw DomainError("dyadic depth must lie in [0, 30]");
  const Picoseconds parts = Picoseconds{1} << depth;
  if (config.num_bins % parts != 0)
    throw InputError(std::to_string(config.num_bins) + " bins do not split into 2^" + std::to_string(depth) +
                     " equal intervals");
  const Picoseconds step = config.window_length() / parts;
  std::vector<Picoseconds> knots(parts + 1);
  for (Picoseconds j = 0; j <= parts; ++j) knots[j] = j * step;
  return knots;
}

namespace {

FluxCurve rates_from_log(const Eigen::VectorXd& log_flux, double background, const DetectorConfig& config) {
  if (!(background >= 0.0) || !std::isfinite(background)) throw DomainError("background must be finite and >= 0");
  Eigen::Index worst = 0;
  const double peak = log_flux.size() ? log_flux.maxCoeff(&worst) : 0.0;
  if (!(peak < 709.0)) throw FluxOverflow(worst, peak);
  Eigen::VectorXd rates = log_flux.array().exp() + background;
  return FluxCurve(std::move(rates), config.bin_width);
}

}  // namespace

FluxCurve forward_flux(const ChebyshevModel& model, const DetectorConfig& config) {
  if (model.coefficients.size() == 0) throw InputError("Chebyshev model has no coefficients");
  return rates_from_log(chebyshev_design(model.order(), config) * model.coefficients, model.background, config);
}

FluxCurve forward_flux(const SplineModel& model, const DetectorConfig& config) {
  if (static_cast<std::size_t>(model.values.size()) != model.num_intervals())
    throw InputError("spline needs one control value per knot interval");
  return rates_from_log(spline_design(model.knots, config) * model.values, model.background, config);
}

FluxCurve forward_flux(const FluxModel& model, const DetectorConfig& config) {
  return std::visit([&config](const auto& m) { return forward_flux(m, config); }, model);
}

// ---------------------------------------------------------------------------
// Thinning

std::pair<ShotTimestamps, ShotTimestamps> thin_alternating(const ShotTimestamps& data) {
  if (data.num_shots() < 2) throw InputError("thinning needs at least two shots");
  ShotTimestamps fit;
  ShotTimestamps validation;
  fit.reserve((data.num_shots() + 1) / 2, data.total_detections() / 2 + 1);
  validation.reserve(data.num_shots() / 2, data.total_detections() / 2 + 1);
  for (std::size_t i = 0; i < data.num_shots(); ++i) (i % 2 == 0 ? fit : validation).append_shot(data.shot(i));
  return {std::move(fit), std::move(validation)};
}

// ---------------------------------------------------------------------------
// Minimisation

double initial_rate(const BinnedTarget& target) {
  const double bins = static_cast<double>(target.counts.size());
  const double rate = target.shot_seconds > 0.0 ? target.counts.sum() / (target.shot_seconds * bins) : 0.0;
  return std::max(rate, 1e-3);
}

ChebyshevModel initial_chebyshev(const BinnedTarget& target, int order) {
  if (order < 0) throw DomainError("Chebyshev order must be non-negative");
  const double rate = initial_rate(target);
  ChebyshevModel model;
  model.coefficients = Eigen::VectorXd::Zero(order + 1);
  model.coefficients[0] = std::log(rate);
  model.background = 1e-3 * rate;
  return model;
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double inverse_softplus(double y) {
  y = std::max(y, 1e-12);
  return y > 30.0 ? y : std::log(std::expm1(y));
}

}  // namespace

double design_objective(const BinnedTarget& target, const Eigen::MatrixXd& design, double scale,
                        const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
  const Eigen::Index p = design.cols();
  if (x.size() != p + 1 || target.counts.size() != design.rows())
    throw InputError("parameter vector does not match the design");
  const Eigen::VectorXd& exposure = target.exposure;
  const Eigen::VectorXd& counts = target.counts;
  const Eigen::VectorXd s = design * x.head(p);
  if (!(s.maxCoeff() < 700.0)) return std::numeric_limits<double>::infinity();
  const Eigen::ArrayXd e = s.array().exp();
  const double beta = x[p];
  const double b = scale * softplus(beta);
  const Eigen::ArrayXd lambda = e + b;
  Eigen::ArrayXd g(counts.size());
  CompensatedSum<double> total;
  for (Eigen::Index m = 0; m < counts.size(); ++m) {
    if (counts[m] > 0.0) {
      total.add(exposure[m] * lambda[m] - counts[m] * std::log(lambda[m]));
      g[m] = exposure[m] - counts[m] / lambda[m];
    } else {
      total.add(exposure[m] * lambda[m]);
      g[m] = exposure[m];
    }
  }
  grad.resize(p + 1);
  grad.head(p) = design.transpose() * (g * e).matrix();
  grad[p] = scale * sigmoid(beta) * g.sum();
  return total.value();
}

namespace {

struct DesignFit {
  Eigen::VectorXd coefficients;
  double background = 0.0;
  FitDiagnostics diagnostics;
};

// Shared engine over design_objective. The saturated-model loss is subtracted so
// the relative stopping rule sees a non-negative deviance rather than a large
// signed constant.
DesignFit fit_design(const BinnedTarget& target, const Eigen::MatrixXd& design, const Eigen::VectorXd& start,
                     double start_background, const OptimizerSettings& settings) {
  const Eigen::Index p = design.cols();
  const double scale = initial_rate(target);
  const Eigen::VectorXd& exposure = target.exposure;
  const Eigen::VectorXd& counts = target.counts;
  CompensatedSum<double> saturated;
  for (Eigen::Index m = 0; m < counts.size(); ++m)
    if (counts[m] > 0.0 && exposure[m] > 0.0)
      saturated.add(counts[m] - counts[m] * std::log(counts[m] / exposure[m]));
  const double offset = saturated.value();

  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) -> double {
    return design_objective(target, design, scale, x, grad) - offset;
  };

  Eigen::VectorXd x(p + 1);
  x.head(p) = start;
  x[p] = inverse_softplus(start_background / scale);
  const OptimizerReport report = lbfgs_minimize(objective, x, settings);

  DesignFit out;
  out.coefficients = x.head(p);
  out.background = scale * softplus(x[p]);
  out.diagnostics = {report.iterations, report.evaluations, report.converged, report.status};
  return out;
}

const DetectorConfig& check_target(const BinnedTarget& target, const DetectorConfig& grid) {
  if (static_cast<std::size_t>(target.counts.size()) != grid.num_bins ||
      target.exposure.size() != target.counts.size())
    throw InputError("binned target does not match the model grid");
  return grid;
}

ModelFit finish(const BinnedTarget& target, FluxModel model, const DetectorConfig& grid, FitDiagnostics diag) {
  ModelFit out;
  out.fit_loss = target_loss(target, forward_flux(model, grid).rates());
  out.model = std::move(model);
  out.diagnostics = std::move(diag);
  return out;
}

ModelFit minimize_chebyshev(const BinnedTarget& target, const ChebyshevModel& start, const Eigen::MatrixXd& design,
                            const DetectorConfig& grid, const OptimizerSettings& settings) {
  DesignFit fit = fit_design(target, design, start.coefficients, start.background, settings);
  ChebyshevModel model{std::move(fit.coefficients), fit.background};
  return finish(target, std::move(model), grid, std::move(fit.diagnostics));
}

ModelFit minimize_spline(const BinnedTarget& target, const SplineModel& start, const Eigen::MatrixXd& design,
                         const DetectorConfig& grid, const OptimizerSettings& settings) {
  DesignFit fit = fit_design(target, design, start.values, start.background, settings);
  SplineModel model{start.knots, std::move(fit.coefficients), fit.background};
  return finish(target, std::move(model), grid, std::move(fit.diagnostics));
}

}  // namespace

ModelFit minimize(const BinnedTarget& target, const FluxModel& start, const DetectorConfig& grid,
                  const OptimizerSettings& settings) {
  check_target(target, grid);
  if (target.counts.sum() <= 0.0 && target.shot_seconds <= 0.0) throw InputError("fit data is empty");
  if (const auto* cheb = std::get_if<ChebyshevModel>(&start))
    return minimize_chebyshev(target, *cheb, chebyshev_design(cheb->order(), grid), grid, settings);
  const auto& spline = std::get<SplineModel>(start);
  return minimize_spline(target, spline, spline_design(spline.knots, grid), grid, settings);
}

ModelFit minimize(LossKind kind, const FluxModel& start, const Observation& fit, const OptimizerSettings& settings) {
  return minimize(make_target(fit, kind), start, fit.config, settings);
}

// ---------------------------------------------------------------------------
// Model selection

FitResult cross_validate(const BinnedTarget& fit, const BinnedTarget& validation, const DetectorConfig& grid,
                         OrderRange orders, const OptimizerSettings& settings) {
  check_target(fit, grid);
  check_target(validation, grid);
  if (orders.min < 0 || orders.max < orders.min) throw DomainError("invalid Chebyshev order range");

  const Eigen::MatrixXd full_design = chebyshev_design(orders.max, grid);
  FitResult best;
  bool have_best = false;
  std::ostringstream failures;
  ChebyshevModel start = initial_chebyshev(fit, orders.min);

  for (int order = orders.min; order <= orders.max; ++order) {
    CandidateScore score;
    score.order = order;
    try {
      ModelFit candidate = minimize_chebyshev(fit, start, full_design.leftCols(order + 1), grid, settings);
      const auto& model = std::get<ChebyshevModel>(candidate.model);
      score.fit_loss = candidate.fit_loss;
      score.validation_loss = target_loss(validation, forward_flux(model, grid).rates());
      score.converged = candidate.diagnostics.converged;

      start = model;
      start.coefficients.conservativeResize(order + 2);
      start.coefficients[order + 1] = 0.0;

      if (!have_best || score.validation_loss < best.validation_loss) {
        best.model = candidate.model;
        best.fit_loss = score.fit_loss;
        best.validation_loss = score.validation_loss;
        best.selected_order = order;
        best.diagnostics = candidate.diagnostics;
        have_best = true;
      }
    } catch (const Error& e) {
      failures << "order " << order << ": " << e.what() << "; ";
      start.coefficients.conservativeResize(order + 2);
      start.coefficients[order + 1] = 0.0;
    }
    best.candidates.push_back(score);
  }
  if (!have_best) throw Error("every candidate order failed: " + failures.str());
  for (auto& c : best.candidates) c.accepted = c.order == best.selected_order;
  return best;
}

FitResult cross_validate(const Observation& fit, const Observation& validation, LossKind kind, OrderRange orders,
                         const OptimizerSettings& settings) {
  if (!fit.config.same_grid(validation.config)) throw InputError("fit and validation grids differ");
  return cross_validate(make_target(fit, kind), make_target(validation, kind), fit.config, orders, settings);
}

FitResult cross_validate(const ShotTimestamps& data, const DetectorConfig& config, LossKind kind, OrderRange orders,
                         const OptimizerSettings& settings) {
  const auto [fit, validation] = thin_alternating(data);
  return cross_validate(build_observation(fit, config), build_observation(validation, config), kind, orders,
                        settings);
}

FitResult trim_spline_knots(const BinnedTarget& fit, const BinnedTarget& validation, const DetectorConfig& grid,
                            int max_depth, const OptimizerSettings& settings) {
  check_target(fit, grid);
  check_target(validation, grid);
  const std::vector<Picoseconds> finest = dyadic_knots(grid, max_depth);
  const std::size_t parts = finest.size() - 1;
  std::vector<bool> present(parts + 1, true);

  auto knots_from = [&](const std::vector<bool>& keep) {
    std::vector<Picoseconds> k;
    for (std::size_t j = 0; j <= parts; ++j)
      if (keep[j]) k.push_back(finest[j]);
    return k;
  };
  auto score_of = [&](const ModelFit& f, bool accepted) {
    const auto& s = std::get<SplineModel>(f.model);
    CandidateScore c;
    c.intervals = s.num_intervals();
    c.fit_loss = f.fit_loss;
    c.validation_loss = target_loss(validation, forward_flux(s, grid).rates());
    c.converged = f.diagnostics.converged;
    c.accepted = accepted;
    return c;
  };

  const double rate = initial_rate(fit);
  SplineModel start{finest, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(parts), std::log(rate)), 1e-3 * rate};
  ModelFit current = minimize_spline(fit, start, spline_design(finest, grid), grid, settings);
  CandidateScore current_score = score_of(current, true);

  FitResult result;
  result.candidates.push_back(current_score);

  // Merges are tried coarse to fine: the root first, then each level of the
  // dyadic tree left to right. A node's whole subtree collapses to one interval
  // when that does not raise the validation loss. Trying the widest merge first
  // settles a flat stretch with one comparison rather than many small ones.
  for (int level = 0; level < max_depth; ++level) {
    const std::size_t span = std::size_t{1} << (max_depth - level);
    for (std::size_t a = 0; a < parts; a += span) {
      bool split = false;
      for (std::size_t k = a + 1; k < a + span && !split; ++k) split = present[k];
      if (!split) continue;

      std::vector<bool> trial = present;
      for (std::size_t k = a + 1; k < a + span; ++k) trial[k] = false;
      const auto& cur = std::get<SplineModel>(current.model);
      const auto first = static_cast<Eigen::Index>(
          std::lower_bound(cur.knots.begin(), cur.knots.end(), finest[a]) - cur.knots.begin());
      const auto last = static_cast<Eigen::Index>(
          std::lower_bound(cur.knots.begin(), cur.knots.end(), finest[a + span]) - cur.knots.begin());
      // Width-weighted mean of the collapsed control values as the warm start.
      double weighted = 0.0;
      for (Eigen::Index k = first; k < last; ++k)
        weighted += cur.values[k] * static_cast<double>(cur.knots[static_cast<std::size_t>(k) + 1] -
                                                        cur.knots[static_cast<std::size_t>(k)]);
      Eigen::VectorXd values(cur.values.size() - (last - first) + 1);
      values.head(first) = cur.values.head(first);
      values[first] = weighted / static_cast<double>(finest[a + span] - finest[a]);
      values.tail(cur.values.size() - last) = cur.values.tail(cur.values.size() - last);
      SplineModel merged{knots_from(trial), std::move(values), cur.background};

      try {
        ModelFit candidate = minimize_spline(fit, merged, spline_design(merged.knots, grid), grid, settings);
        CandidateScore score = score_of(candidate, false);
        if (score.validation_loss <= current_score.validation_loss) {
          score.accepted = true;
          present = std::move(trial);
          current = std::move(candidate);
          current_score = score;
        }
        result.candidates.push_back(score);
      } catch (const Error&) {
        // A failed merge leaves the finer configuration in place.
      }
    }
  }

  result.model = current.model;
  result.fit_loss = current.fit_loss;
  result.validation_loss = current_score.validation_loss;
  result.selected_knots = std::get<SplineModel>(current.model).knots;
  result.diagnostics = current.diagnostics;
  return result;
}

FitResult trim_spline_knots(const Observation& fit, const Observation& validation, LossKind kind, int max_depth,
                            const OptimizerSettings& settings) {
  if (!fit.config.same_grid(validation.config)) throw InputError("fit and validation grids differ");
  return trim_spline_knots(make_target(fit, kind), make_target(validation, kind), fit.config, max_depth, settings);
}

FitResult trim_spline_knots(const ShotTimestamps& data, const DetectorConfig& config, LossKind kind, int max_depth,
                            const OptimizerSettings& settings) {
  const auto [fit, validation] = thin_alternating(data);
  return trim_spline_knots(build_observation(fit, config), build_observation(validation, config), kind, max_depth,
                           settings);
}

}  // namespace deadtime
