#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include <Eigen/Core>

namespace deadtime {

struct OptimizerSettings {
  /// Converged when the objective drops by less than tolerance * max(|f|, 1)
  /// over `patience` consecutive iterations.
  double tolerance = 1e-9;
  int patience = 3;
  int max_iterations = 10000;
  /// Number of correction pairs kept by L-BFGS.
  int history = 8;
};

struct OptimizerReport {
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double value = std::numeric_limits<double>::infinity();
  std::string status;
};

/// Limited-memory BFGS with backtracking Armijo line search.
///
/// `objective(x, grad)` returns f(x) and fills grad. Non-finite values are
/// allowed and treated as "step too long". The iterate never increases f.
template <typename Objective>
OptimizerReport lbfgs_minimize(Objective&& objective, Eigen::VectorXd& x, const OptimizerSettings& settings) {
  using Vec = Eigen::VectorXd;
  OptimizerReport report;
  const Eigen::Index n = x.size();

  Vec grad(n);
  double f = objective(x, grad);
  ++report.evaluations;
  if (!std::isfinite(f)) {
    report.status = "objective not finite at the starting point";
    return report;
  }

  std::deque<Vec> s_hist;
  std::deque<Vec> y_hist;
  std::deque<double> rho_hist;
  std::deque<double> recent{f};

  Vec trial(n);
  Vec trial_grad(n);
  Vec direction(n);
  std::vector<double> alpha(static_cast<std::size_t>(settings.history));

  bool steepest = true;
  for (report.iterations = 0; report.iterations < settings.max_iterations;) {
    if (grad.lpNorm<Eigen::Infinity>() == 0.0) {
      report.converged = true;
      report.status = "zero gradient";
      break;
    }

    // Two-loop recursion.
    direction = -grad;
    const std::size_t m = s_hist.size();
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(direction);
      direction -= alpha[i] * y_hist[i];
    }
    if (m > 0) direction *= 1.0 / (rho_hist.back() * y_hist.back().squaredNorm());
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(direction);
      direction += (alpha[i] - beta) * s_hist[i];
    }
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction = -grad;
      slope = -grad.squaredNorm();
      steepest = true;
    }

    double step = steepest && m == 0 ? std::min(1.0, 1.0 / direction.norm()) : 1.0;
    double f_trial = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      trial = x + step * direction;
      f_trial = objective(trial, trial_grad);
      ++report.evaluations;
      if (std::isfinite(f_trial) && f_trial <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      if (std::isfinite(f_trial)) {
        // Minimiser of the quadratic through f, slope and f_trial, safeguarded.
        const double denom = 2.0 * (f_trial - f - slope * step);
        double next = denom > 0.0 ? -slope * step * step / denom : 0.5 * step;
        step = std::clamp(next, 0.1 * step, 0.5 * step);
      } else {
        step *= 0.1;
      }
    }

    if (!accepted || !(f_trial < f)) {
      if (!steepest) {
        // Curvature pairs may be stale; retry along the gradient.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        steepest = true;
        continue;
      }
      report.converged = true;
      report.status = "no further decrease at machine precision";
      break;
    }

    Vec s = trial - x;
    Vec y = trial_grad - grad;
    const double sy = s.dot(y);
    x = trial;
    grad = trial_grad;
    f = f_trial;
    ++report.iterations;
    steepest = false;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > settings.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    recent.push_back(f);
    if (static_cast<int>(recent.size()) > settings.patience + 1) recent.pop_front();
    if (static_cast<int>(recent.size()) == settings.patience + 1 &&
        recent.front() - f <= settings.tolerance * std::max(std::abs(f), 1.0)) {
      report.converged = true;
      report.status = "relative decrease below tolerance";
      break;
    }
  }
  if (!report.converged && report.status.empty()) report.status = "iteration limit reached";
  report.value = f;
  return report;
}

}  // namespace deadtime
