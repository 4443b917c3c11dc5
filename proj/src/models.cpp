#include "deadtime/models.hpp"

namespace deadtime {

namespace {

void check_lengths(const FluxCurve& flux, const CountHistogram& y, const DetectorConfig& config) {
  flux.check_grid(config);
  if (static_cast<std::size_t>(y.counts.size()) != config.num_bins)
    throw InputError("count histogram length does not match config");
}

}  // namespace

Eigen::VectorXd deadtime_exposure(const ActiveFractionHistogram& z, const DetectorConfig& config) {
  if (static_cast<std::size_t>(z.fractions.size()) != config.num_bins)
    throw InputError("active-fraction histogram length does not match config");
  return z.fractions * (static_cast<double>(config.num_shots) * config.bin_width_seconds());
}

Eigen::VectorXd poisson_exposure(const DetectorConfig& config) {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(config.num_bins),
                                   static_cast<double>(config.num_shots) * config.bin_width_seconds());
}

LossValue deadtime_loss(const FluxCurve& flux, const CountHistogram& y, const ActiveFractionHistogram& z,
                        const DetectorConfig& config) {
  check_lengths(flux, y, config);
  LossValue out;
  out.value = binned_nll(flux.rates(), deadtime_exposure(z, config), y.as_double(), &out.gradient);
  return out;
}

LossValue poisson_loss(const FluxCurve& flux, const CountHistogram& y, const DetectorConfig& config) {
  check_lengths(flux, y, config);
  LossValue out;
  out.value = binned_nll(flux.rates(), poisson_exposure(config), y.as_double(), &out.gradient);
  return out;
}

double muller_correct(double rate, double tau_seconds) {
  if (!(rate >= 0.0)) throw DomainError("measured rate must be non-negative");
  const double product = rate * tau_seconds;
  if (product >= 1.0) throw NonPhysicalEstimate(rate, product);
  return rate / (1.0 - product);
}

Eigen::VectorXd muller_correct(const CountHistogram& y, const DetectorConfig& config) {
  const Eigen::VectorXd rates = measured_rate(y, config);
  Eigen::VectorXd out(rates.size());
  for (Eigen::Index m = 0; m < rates.size(); ++m) {
    try {
      out[m] = muller_correct(rates[m], config.tau_seconds());
    } catch (const NonPhysicalEstimate& e) {
      throw NonPhysicalEstimate(e.rate(), e.rate_tau_product(), m);
    }
  }
  return out;
}

Eigen::VectorXd deadtime_bin_minimizer(const CountHistogram& y, const ActiveFractionHistogram& z,
                                       const DetectorConfig& config) {
  const Eigen::VectorXd exposure = deadtime_exposure(z, config);
  const Eigen::VectorXd counts = y.as_double();
  Eigen::VectorXd out(counts.size());
  for (Eigen::Index m = 0; m < counts.size(); ++m) {
    if (counts[m] == 0.0) {
      out[m] = 0.0;
      continue;
    }
    if (!(exposure[m] > 0.0)) {
      const double rate = counts[m] / (static_cast<double>(config.num_shots) * config.bin_width_seconds());
      throw NonPhysicalEstimate(rate, rate * config.tau_seconds(), m);
    }
    out[m] = counts[m] / exposure[m];
  }
  return out;
}

ActiveFractionHistogram coarse_bin_active(const CountHistogram& y, const DetectorConfig& config) {
  ActiveFractionHistogram z;
  z.fractions = Eigen::VectorXd::Ones(y.counts.size()) -
                y.as_double() * (config.tau_seconds() /
                                 (static_cast<double>(config.num_shots) * config.bin_width_seconds()));
  return z;
}

Eigen::VectorXd muller_equivalence_check(const CountHistogram& y, const DetectorConfig& config) {
  return deadtime_bin_minimizer(y, coarse_bin_active(y, config), config);
}

}  // namespace deadtime
