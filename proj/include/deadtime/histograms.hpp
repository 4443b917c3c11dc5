#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deadtime/core.hpp"

namespace deadtime {

/// Y and Z accumulated over the same set of shots. `config.num_shots` is the
/// number of shots actually accumulated.
struct Observation {
  DetectorConfig config;
  CountHistogram counts;
  ActiveFractionHistogram active;
};

struct HistogramOptions {
  /// Keep per-shot y and z vectors. Memory grows as shots x bins.
  bool keep_per_shot = false;
};

/// Streaming Y/Z builder. Dead time is accumulated in integer picoseconds, so
/// merging partial accumulators in any order yields identical histograms.
class HistogramAccumulator {
 public:
  explicit HistogramAccumulator(const DetectorConfig& config, HistogramOptions options = {});

  /// Adds one shot. Detections must be sorted and inside the window
  /// (InputError otherwise). Overlapping dead intervals are merged.
  void add_shot(std::span<const Picoseconds> detections);
  void merge(const HistogramAccumulator& other);

  std::uint64_t shots() const { return shots_; }
  std::uint64_t detections() const { return detections_; }

  CountHistogram count_histogram() const;
  ActiveFractionHistogram active_histogram() const;
  Observation observation() const;

  /// Total dead picoseconds per bin summed over shots.
  std::vector<std::uint64_t> dead_picoseconds() const;

 private:
  void add_dead_interval(Picoseconds begin, Picoseconds end, std::vector<std::uint64_t>* shot_dead);

  DetectorConfig config_;
  HistogramOptions options_;
  std::uint64_t shots_ = 0;
  std::uint64_t detections_ = 0;
  std::vector<std::uint64_t> counts_;
  // Partial-bin dead time added directly; fully covered bins via a difference array.
  std::vector<std::uint64_t> partial_dead_;
  std::vector<std::int64_t> full_cover_diff_;
  std::vector<CountVector> per_shot_counts_;
  std::vector<Eigen::VectorXd> per_shot_active_;
};

CountHistogram build_count_histogram(const ShotTimestamps& data, const DetectorConfig& config,
                                     HistogramOptions options = {});
ActiveFractionHistogram build_active_histogram(const ShotTimestamps& data, const DetectorConfig& config,
                                               HistogramOptions options = {});
/// Both histograms in one pass; the returned config carries data.num_shots().
Observation build_observation(const ShotTimestamps& data, const DetectorConfig& config,
                              HistogramOptions options = {});

/// Mean of Z over all bins.
double active_fraction(const ActiveFractionHistogram& z);

/// R_m = Y_m / (N * dt), photons per second.
Eigen::VectorXd measured_rate(const CountHistogram& y, const DetectorConfig& config);

}  // namespace deadtime
