#include "deadtime/histograms.hpp"

#include <algorithm>

namespace deadtime {

HistogramAccumulator::HistogramAccumulator(const DetectorConfig& config, HistogramOptions options)
    : config_(config),
      options_(options),
      counts_(config.num_bins, 0),
      partial_dead_(config.num_bins, 0),
      full_cover_diff_(config.num_bins + 1, 0) {
  config_.validate();
}

void HistogramAccumulator::add_dead_interval(Picoseconds begin, Picoseconds end,
                                             std::vector<std::uint64_t>* shot_dead) {
  // begin/end are offsets from the window start, end <= window length.
  const Picoseconds width = config_.bin_width;
  const std::size_t first = begin / width;
  const std::size_t last = (end - 1) / width;
  if (first == last) {
    partial_dead_[first] += end - begin;
    if (shot_dead) (*shot_dead)[first] += end - begin;
    return;
  }
  const Picoseconds first_right = (first + 1) * width;
  partial_dead_[first] += first_right - begin;
  const Picoseconds last_left = last * width;
  partial_dead_[last] += end - last_left;
  if (last > first + 1) {
    full_cover_diff_[first + 1] += 1;
    full_cover_diff_[last] -= 1;
  }
  if (shot_dead) {
    (*shot_dead)[first] += first_right - begin;
    (*shot_dead)[last] += end - last_left;
    for (std::size_t m = first + 1; m < last; ++m) (*shot_dead)[m] += width;
  }
}

void HistogramAccumulator::add_shot(std::span<const Picoseconds> detections) {
  const Picoseconds window = config_.window_length();
  std::vector<std::uint64_t> shot_dead;
  CountVector shot_counts;
  if (options_.keep_per_shot) {
    shot_dead.assign(config_.num_bins, 0);
    shot_counts = CountVector::Zero(static_cast<Eigen::Index>(config_.num_bins));
  }

  Picoseconds dead_until = 0;  // relative to window start
  Picoseconds previous = 0;
  for (std::size_t n = 0; n < detections.size(); ++n) {
    const Picoseconds t_abs = detections[n];
    const std::size_t bin = config_.bin_index(t_abs);
    if (n > 0 && t_abs < previous) throw InputError("detections within a shot must be sorted");
    previous = t_abs;
    ++counts_[bin];
    if (options_.keep_per_shot) ++shot_counts[static_cast<Eigen::Index>(bin)];

    const Picoseconds t = t_abs - config_.window_start;
    const Picoseconds begin = std::max(t, dead_until);
    const Picoseconds end = std::min<Picoseconds>(t + config_.tau, window);
    if (end > begin) {
      add_dead_interval(begin, end, options_.keep_per_shot ? &shot_dead : nullptr);
      dead_until = end;
    }
  }
  detections_ += detections.size();
  ++shots_;

  if (options_.keep_per_shot) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(config_.num_bins));
    const double width = static_cast<double>(config_.bin_width);
    for (std::size_t m = 0; m < config_.num_bins; ++m)
      z[static_cast<Eigen::Index>(m)] = 1.0 - static_cast<double>(shot_dead[m]) / width;
    per_shot_counts_.push_back(std::move(shot_counts));
    per_shot_active_.push_back(std::move(z));
  }
}

void HistogramAccumulator::merge(const HistogramAccumulator& other) {
  if (!config_.same_grid(other.config_) || config_.tau != other.config_.tau)
    throw InputError("cannot merge histograms built on different grids");
  shots_ += other.shots_;
  detections_ += other.detections_;
  for (std::size_t m = 0; m < counts_.size(); ++m) {
    counts_[m] += other.counts_[m];
    partial_dead_[m] += other.partial_dead_[m];
  }
  for (std::size_t m = 0; m < full_cover_diff_.size(); ++m) full_cover_diff_[m] += other.full_cover_diff_[m];
  per_shot_counts_.insert(per_shot_counts_.end(), other.per_shot_counts_.begin(), other.per_shot_counts_.end());
  per_shot_active_.insert(per_shot_active_.end(), other.per_shot_active_.begin(), other.per_shot_active_.end());
}

std::vector<std::uint64_t> HistogramAccumulator::dead_picoseconds() const {
  std::vector<std::uint64_t> dead(partial_dead_);
  std::int64_t cover = 0;
  for (std::size_t m = 0; m < dead.size(); ++m) {
    cover += full_cover_diff_[m];
    dead[m] += static_cast<std::uint64_t>(cover) * config_.bin_width;
  }
  return dead;
}

CountHistogram HistogramAccumulator::count_histogram() const {
  CountHistogram y;
  y.counts = Eigen::Map<const CountVector>(counts_.data(), static_cast<Eigen::Index>(counts_.size()));
  y.per_shot = per_shot_counts_;
  return y;
}

ActiveFractionHistogram HistogramAccumulator::active_histogram() const {
  ActiveFractionHistogram z;
  z.fractions = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(config_.num_bins));
  if (shots_ > 0) {
    const auto dead = dead_picoseconds();
    const double exposure = static_cast<double>(shots_) * static_cast<double>(config_.bin_width);
    for (std::size_t m = 0; m < dead.size(); ++m)
      z.fractions[static_cast<Eigen::Index>(m)] = 1.0 - static_cast<double>(dead[m]) / exposure;
  }
  z.per_shot = per_shot_active_;
  return z;
}

Observation HistogramAccumulator::observation() const {
  return {config_.with_shots(std::max<std::uint64_t>(shots_, 1)), count_histogram(), active_histogram()};
}

// ---------------------------------------------------------------------------

namespace {

HistogramAccumulator accumulate(const ShotTimestamps& data, const DetectorConfig& config,
                                HistogramOptions options) {
  HistogramAccumulator acc(config, options);
  for (std::size_t i = 0; i < data.num_shots(); ++i) acc.add_shot(data.shot(i));
  return acc;
}

}  // namespace

CountHistogram build_count_histogram(const ShotTimestamps& data, const DetectorConfig& config,
                                     HistogramOptions options) {
  return accumulate(data, config, options).count_histogram();
}

ActiveFractionHistogram build_active_histogram(const ShotTimestamps& data, const DetectorConfig& config,
                                               HistogramOptions options) {
  return accumulate(data, config, options).active_histogram();
}

Observation build_observation(const ShotTimestamps& data, const DetectorConfig& config,
                              HistogramOptions options) {
  if (data.num_shots() == 0) throw InputError("no shots to histogram");
  return accumulate(data, config, options).observation();
}

double active_fraction(const ActiveFractionHistogram& z) {
  if (z.fractions.size() == 0) throw InputError("empty active-fraction histogram");
  return z.fractions.mean();
}

Eigen::VectorXd measured_rate(const CountHistogram& y, const DetectorConfig& config) {
  if (static_cast<std::size_t>(y.counts.size()) != config.num_bins)
    throw InputError("count histogram length does not match config");
  const double exposure = static_cast<double>(config.num_shots) * config.bin_width_seconds();
  return y.counts.cast<double>() / exposure;
}

}  // namespace deadtime
