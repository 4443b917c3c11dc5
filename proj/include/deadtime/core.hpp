#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace deadtime {

/// Integer picoseconds. All timestamps and grid durations are held in this unit;
/// conversion to seconds happens only at API boundaries.
using Picoseconds = std::uint64_t;

using CountVector = Eigen::Matrix<std::uint64_t, Eigen::Dynamic, 1>;

inline constexpr double kSecondsPerPicosecond = 1e-12;

inline double to_seconds(Picoseconds ps) {
  return static_cast<double>(ps) * kSecondsPerPicosecond;
}

/// Rounds to the nearest picosecond. Throws ConfigError for negative or non-finite input.
Picoseconds to_picoseconds(double seconds, const std::string& field = "duration");

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `field` is a dotted path such as "detector.tau".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Data that does not satisfy an operation's preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The Müller correction was asked to invert a rate at or above 1/tau.
class NonPhysicalEstimate : public Error {
 public:
  NonPhysicalEstimate(double rate, double rate_tau_product, std::ptrdiff_t bin = -1);
  double rate() const noexcept { return rate_; }
  double rate_tau_product() const noexcept { return product_; }
  std::ptrdiff_t bin() const noexcept { return bin_; }

 private:
  double rate_;
  double product_;
  std::ptrdiff_t bin_;
};

// ---------------------------------------------------------------------------
// Domain types

struct DetectorConfig {
  Picoseconds tau = 0;
  Picoseconds bin_width = 0;
  std::size_t num_bins = 0;
  std::uint64_t num_shots = 0;
  Picoseconds window_start = 0;

  static DetectorConfig from_seconds(double tau, double bin_width, std::size_t num_bins,
                                     std::uint64_t num_shots, double window_start = 0.0);

  /// Throws ConfigError naming the offending field. tau == 0 is accepted and
  /// disables deadtime.
  void validate() const;

  Picoseconds window_length() const { return bin_width * num_bins; }
  Picoseconds window_end() const { return window_start + window_length(); }
  double tau_seconds() const { return to_seconds(tau); }
  double bin_width_seconds() const { return to_seconds(bin_width); }

  DetectorConfig with_shots(std::uint64_t shots) const {
    DetectorConfig copy = *this;
    copy.num_shots = shots;
    return copy;
  }

  bool contains(Picoseconds t) const { return t >= window_start && t < window_end(); }

  /// Half-open bin lookup: a time on an edge belongs to the later bin.
  /// Throws InputError when `t` is outside the acquisition window.
  std::size_t bin_index(Picoseconds t) const;

  bool same_grid(const DetectorConfig& other) const {
    return bin_width == other.bin_width && num_bins == other.num_bins &&
           window_start == other.window_start;
  }
};

/// Left edges of every bin plus the closing edge (num_bins + 1 values).
std::vector<Picoseconds> bin_edges(const DetectorConfig& config);

/// Per-shot detection times stored contiguously (CSR layout).
class ShotTimestamps {
 public:
  ShotTimestamps() : offsets_{0} {}
  explicit ShotTimestamps(const std::vector<std::vector<Picoseconds>>& shots);
  ShotTimestamps(std::vector<Picoseconds> times, std::vector<std::size_t> offsets);

  void append_shot(std::span<const Picoseconds> detections);
  void reserve(std::size_t shots, std::size_t detections);

  std::size_t num_shots() const { return offsets_.size() - 1; }
  std::size_t total_detections() const { return times_.size(); }
  std::span<const Picoseconds> shot(std::size_t i) const {
    return {times_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  const std::vector<Picoseconds>& times() const { return times_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  /// Throws InputError unless every shot is strictly increasing and inside the window.
  void validate(const DetectorConfig& config) const;

  bool operator==(const ShotTimestamps&) const = default;

 private:
  std::vector<Picoseconds> times_;
  std::vector<std::size_t> offsets_;
};

/// Piecewise-constant arrival rate on the bin grid, photons per second.
class FluxCurve {
 public:
  FluxCurve() = default;
  FluxCurve(Eigen::VectorXd rates, Picoseconds bin_width);

  const Eigen::VectorXd& rates() const { return rates_; }
  /// Expected photon count at each bin edge, relative to the window start.
  const Eigen::VectorXd& cumulative() const { return cumulative_; }
  Picoseconds bin_width() const { return bin_width_; }
  Eigen::Index size() const { return rates_.size(); }
  double total() const { return cumulative_.size() ? cumulative_[cumulative_.size() - 1] : 0.0; }

  /// Throws InputError if the curve does not live on the config's grid.
  void check_grid(const DetectorConfig& config) const;

 private:
  Eigen::VectorXd rates_;
  Eigen::VectorXd cumulative_;
  Picoseconds bin_width_ = 0;
};

struct CountHistogram {
  CountVector counts;
  /// Optional per-shot counts, one column per shot.
  std::vector<CountVector> per_shot;

  std::uint64_t total() const { return counts.sum(); }
  Eigen::VectorXd as_double() const { return counts.cast<double>(); }
};

struct ActiveFractionHistogram {
  Eigen::VectorXd fractions;
  std::vector<Eigen::VectorXd> per_shot;
};

}  // namespace deadtime
