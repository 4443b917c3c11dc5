#pragma once

#include <cmath>

#include <Eigen/Core>

#include "deadtime/core.hpp"
#include "deadtime/histograms.hpp"

namespace deadtime {

/// Neumaier-compensated accumulator.
template <typename Scalar>
class CompensatedSum {
 public:
  void add(Scalar x) {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      compensation_ += (sum_ - t) + x;
    else
      compensation_ += (x - t) + sum_;
    sum_ = t;
  }
  Scalar value() const { return sum_ + compensation_; }

 private:
  Scalar sum_{0};
  Scalar compensation_{0};
};

struct LossValue {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d rate_m
};

/// Binned Poisson-type negative log likelihood
///   sum_m (exposure_m * rate_m - counts_m * ln rate_m)
/// where exposure is shot-seconds of live time per bin. Bins with zero exposure
/// and zero counts drop out. Throws DomainError for rate_m <= 0 with counts_m > 0.
template <typename Rates, typename Exposure, typename Counts>
double binned_nll(const Eigen::MatrixBase<Rates>& rates, const Eigen::MatrixBase<Exposure>& exposure,
                  const Eigen::MatrixBase<Counts>& counts, Eigen::VectorXd* gradient = nullptr) {
  using Scalar = typename Rates::Scalar;
  if (rates.size() != exposure.size() || rates.size() != counts.size())
    throw InputError("loss inputs have mismatched lengths");
  CompensatedSum<Scalar> total;
  if (gradient) gradient->setZero(rates.size());
  for (Eigen::Index m = 0; m < rates.size(); ++m) {
    const Scalar lambda = rates[m];
    const Scalar e = exposure[m];
    const Scalar y = counts[m];
    if (y == Scalar(0) && e == Scalar(0)) continue;
    if (y > Scalar(0)) {
      if (!(lambda > Scalar(0)))
        throw DomainError("rate must be positive where counts are observed (bin " + std::to_string(m) + ")");
      total.add(e * lambda - y * std::log(lambda));
      if (gradient) (*gradient)[m] = e - y / lambda;
    } else {
      total.add(e * lambda);
      if (gradient) (*gradient)[m] = e;
    }
  }
  return total.value();
}

/// Live exposure N * Z_m * dt in shot-seconds.
Eigen::VectorXd deadtime_exposure(const ActiveFractionHistogram& z, const DetectorConfig& config);
/// Exposure N * dt for every bin.
Eigen::VectorXd poisson_exposure(const DetectorConfig& config);

/// sum_m (N lambda_m Z_m dt - Y_m ln lambda_m) and its gradient in lambda.
LossValue deadtime_loss(const FluxCurve& flux, const CountHistogram& y, const ActiveFractionHistogram& z,
                        const DetectorConfig& config);
/// sum_m (N lambda_m dt - Y_m ln lambda_m) and its gradient in lambda.
LossValue poisson_loss(const FluxCurve& flux, const CountHistogram& y, const DetectorConfig& config);

/// lambda = R / (1 - R tau). Throws NonPhysicalEstimate when R tau >= 1.
double muller_correct(double rate, double tau_seconds);
/// Müller correction of every bin's measured rate.
Eigen::VectorXd muller_correct(const CountHistogram& y, const DetectorConfig& config);

/// Per-bin minimiser of the deadtime loss, lambda_m = Y_m / (N Z_m dt).
/// Bins with Y_m = 0 give 0; Y_m > 0 with Z_m <= 0 throws NonPhysicalEstimate.
Eigen::VectorXd deadtime_bin_minimizer(const CountHistogram& y, const ActiveFractionHistogram& z,
                                       const DetectorConfig& config);

/// Coarse-bin active fraction Z_m = 1 - Y_m tau / (N dt), valid when every
/// dead interval stays inside the bin of its detection.
ActiveFractionHistogram coarse_bin_active(const CountHistogram& y, const DetectorConfig& config);

/// Minimises the deadtime loss bin by bin with the coarse-bin active fraction
/// substituted. Agrees with the Müller correction.
Eigen::VectorXd muller_equivalence_check(const CountHistogram& y, const DetectorConfig& config);

}  // namespace deadtime
