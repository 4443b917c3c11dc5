#include "deadtime/core.hpp"

#include <cmath>
#include <sstream>

namespace deadtime {

Picoseconds to_picoseconds(double seconds, const std::string& field) {
  if (!std::isfinite(seconds)) throw ConfigError(field, "must be finite");
  if (seconds < 0.0) throw ConfigError(field, "must be non-negative");
  const double ps = std::round(seconds / kSecondsPerPicosecond);
  if (ps > 9.0e18) throw ConfigError(field, "too large for picosecond storage");
  return static_cast<Picoseconds>(ps);
}

namespace {

std::string non_physical_message(double rate, double product, std::ptrdiff_t bin) {
  std::ostringstream os;
  os << "non-physical Müller estimate: R*tau = " << product << " >= 1 (R = " << rate << " Hz";
  if (bin >= 0) os << ", bin " << bin;
  os << ")";
  return os.str();
}

}  // namespace

NonPhysicalEstimate::NonPhysicalEstimate(double rate, double rate_tau_product, std::ptrdiff_t bin)
    : Error(non_physical_message(rate, rate_tau_product, bin)),
      rate_(rate),
      product_(rate_tau_product),
      bin_(bin) {}

DetectorConfig DetectorConfig::from_seconds(double tau, double bin_width, std::size_t num_bins,
                                            std::uint64_t num_shots, double window_start) {
  DetectorConfig config;
  config.tau = to_picoseconds(tau, "detector.tau");
  config.bin_width = to_picoseconds(bin_width, "detector.bin_width");
  config.num_bins = num_bins;
  config.num_shots = num_shots;
  config.window_start = to_picoseconds(window_start, "detector.window_start");
  config.validate();
  return config;
}

void DetectorConfig::validate() const {
  if (bin_width == 0) throw ConfigError("detector.bin_width", "must be > 0");
  if (num_bins == 0) throw ConfigError("detector.num_bins", "must be >= 1");
  if (num_shots == 0) throw ConfigError("detector.num_shots", "must be >= 1");
}

std::size_t DetectorConfig::bin_index(Picoseconds t) const {
  if (!contains(t)) {
    std::ostringstream os;
    os << "timestamp " << t << " ps outside acquisition window [" << window_start << ", "
       << window_end() << ") ps";
    throw InputError(os.str());
  }
  return static_cast<std::size_t>((t - window_start) / bin_width);
}

std::vector<Picoseconds> bin_edges(const DetectorConfig& config) {
  std::vector<Picoseconds> edges(config.num_bins + 1);
  for (std::size_t m = 0; m <= config.num_bins; ++m)
    edges[m] = config.window_start + m * config.bin_width;
  return edges;
}

// ---------------------------------------------------------------------------

ShotTimestamps::ShotTimestamps(const std::vector<std::vector<Picoseconds>>& shots) : offsets_{0} {
  std::size_t total = 0;
  for (const auto& s : shots) total += s.size();
  reserve(shots.size(), total);
  for (const auto& s : shots) append_shot(s);
}

ShotTimestamps::ShotTimestamps(std::vector<Picoseconds> times, std::vector<std::size_t> offsets)
    : times_(std::move(times)), offsets_(std::move(offsets)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != times_.size())
    throw InputError("shot offsets do not describe the timestamp array");
  for (std::size_t i = 1; i < offsets_.size(); ++i)
    if (offsets_[i] < offsets_[i - 1]) throw InputError("shot offsets must be non-decreasing");
}

void ShotTimestamps::append_shot(std::span<const Picoseconds> detections) {
  times_.insert(times_.end(), detections.begin(), detections.end());
  offsets_.push_back(times_.size());
}

void ShotTimestamps::reserve(std::size_t shots, std::size_t detections) {
  offsets_.reserve(shots + 1);
  times_.reserve(detections);
}

void ShotTimestamps::validate(const DetectorConfig& config) const {
  for (std::size_t i = 0; i < num_shots(); ++i) {
    const auto s = shot(i);
    for (std::size_t n = 0; n < s.size(); ++n) {
      if (!config.contains(s[n])) {
        std::ostringstream os;
        os << "shot " << i << ": timestamp " << s[n] << " ps outside acquisition window";
        throw InputError(os.str());
      }
      if (n > 0 && s[n] <= s[n - 1]) {
        std::ostringstream os;
        os << "shot " << i << ": timestamps not strictly increasing at index " << n;
        throw InputError(os.str());
      }
    }
  }
}

// ---------------------------------------------------------------------------

FluxCurve::FluxCurve(Eigen::VectorXd rates, Picoseconds bin_width)
    : rates_(std::move(rates)), bin_width_(bin_width) {
  if (bin_width_ == 0) throw InputError("flux curve bin width must be > 0");
  for (Eigen::Index m = 0; m < rates_.size(); ++m)
    if (!(rates_[m] >= 0.0) || !std::isfinite(rates_[m]))
      throw InputError("flux rates must be finite and non-negative (bin " + std::to_string(m) + ")");
  const double dt = to_seconds(bin_width_);
  cumulative_.resize(rates_.size() + 1);
  cumulative_[0] = 0.0;
  for (Eigen::Index m = 0; m < rates_.size(); ++m)
    cumulative_[m + 1] = cumulative_[m] + rates_[m] * dt;
}

void FluxCurve::check_grid(const DetectorConfig& config) const {
  if (static_cast<std::size_t>(rates_.size()) != config.num_bins || bin_width_ != config.bin_width)
    throw InputError("flux curve grid (" + std::to_string(rates_.size()) + " bins of " +
                     std::to_string(bin_width_) + " ps) does not match detector config (" +
                     std::to_string(config.num_bins) + " bins of " +
                     std::to_string(config.bin_width) + " ps)");
}

}  // namespace deadtime
