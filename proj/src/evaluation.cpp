#include "deadtime/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deadtime/models.hpp"

namespace deadtime {

double optimal_scale(const FluxCurve& fit, const CountHistogram& eval, const DetectorConfig& eval_config) {
  fit.check_grid(eval_config);
  if (static_cast<std::size_t>(eval.counts.size()) != eval_config.num_bins)
    throw InputError("evaluation histogram length does not match config");
  CompensatedSum<double> flux;
  for (Eigen::Index m = 0; m < fit.size(); ++m) flux.add(fit.rates()[m]);
  if (!(flux.value() > 0.0)) throw DomainError("fitted flux sums to zero; no scale factor exists");
  return static_cast<double>(eval.total()) /
         (static_cast<double>(eval_config.num_shots) * eval_config.bin_width_seconds() * flux.value());
}

EvaluationScore evaluation_loss(const FluxCurve& fit, const CountHistogram& eval, const DetectorConfig& eval_config) {
  EvaluationScore out;
  out.scale = optimal_scale(fit, eval, eval_config);
  const FluxCurve scaled(fit.rates() * out.scale, fit.bin_width());
  out.loss = poisson_loss(scaled, eval, eval_config).value;
  return out;
}

EvaluationScore evaluation_loss(const FluxCurve& fit, const ShotTimestamps& eval, const DetectorConfig& eval_config) {
  const DetectorConfig config = eval_config.with_shots(eval.num_shots());
  return evaluation_loss(fit, build_count_histogram(eval, config), config);
}

double rmse(const FluxCurve& fit, const FluxCurve& truth, Scaling scaling) {
  if (fit.size() != truth.size() || fit.bin_width() != truth.bin_width())
    throw InputError("rmse needs curves on the same grid");
  if (fit.size() == 0) throw InputError("rmse of empty curves");
  double scale = 1.0;
  if (scaling == Scaling::optimal) {
    const double total = fit.rates().sum();
    if (!(total > 0.0)) throw DomainError("fitted flux sums to zero; no scale factor exists");
    scale = truth.rates().sum() / total;
  }
  return std::sqrt((fit.rates() * scale - truth.rates()).squaredNorm() / static_cast<double>(fit.size()));
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double average = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = average;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw InputError("spearman needs two equal-length samples of size >= 2");
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const Eigen::ArrayXd x = Eigen::Map<const Eigen::ArrayXd>(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::ArrayXd y = Eigen::Map<const Eigen::ArrayXd>(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Eigen::ArrayXd dx = x - x.mean();
  const Eigen::ArrayXd dy = y - y.mean();
  const double denom = std::sqrt((dx * dx).sum() * (dy * dy).sum());
  if (denom == 0.0) throw DomainError("spearman of a constant sample");
  return (dx * dy).sum() / denom;
}

}  // namespace deadtime
