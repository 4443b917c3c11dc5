#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "deadtime/core.hpp"

namespace deadtime {

/// splitmix64: 64-bit state, cheap to seed, one stream per shot.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Seed of the RNG stream for one shot. Depends only on (master, shot) so a
/// shot can be regenerated in isolation and in any order.
std::uint64_t shot_seed(std::uint64_t master_seed, std::uint64_t shot_index);

struct GaussianTargetSpec {
  double peak_rate = 0.0;        // photons/s
  double center = 0.0;           // s
  double sigma = 1e-9;           // s
  double background_rate = 0.0;  // photons/s

  void validate() const;
  static double sigma_from_fwhm(double fwhm);
};

/// Flat-topped return with instantaneous edges.
struct RectangularTargetSpec {
  double rate = 0.0;
  double start = 0.0;
  double stop = 0.0;
  double background_rate = 0.0;

  void validate() const;
};

/// Long pulse with smooth logistic edges and sinusoidal ripple, standing in for
/// a laser pulse with amplifier-mode structure.
struct StructuredPulseSpec {
  struct Ripple {
    double amplitude;  // fraction of the envelope
    double period;     // s
    double phase;      // rad
  };
  double peak_rate = 0.0;
  double start = 0.0;
  double duration = 1e-6;
  double edge_time = 10e-9;
  std::vector<Ripple> ripples;
  double background_rate = 0.0;

  void validate() const;
  double rate_at(double t) const;
};

struct AttenuationSpec {
  double optical_density = 0.0;
  double transmission = 1.0;

  static AttenuationSpec from_od(double optical_density);
  void validate() const;
};

/// Samples `rate_at(t)` (t in seconds from shot start) at every bin's left edge.
FluxCurve sample_flux(const DetectorConfig& config, const std::function<double(double)>& rate_at);

FluxCurve constant_flux(double rate, const DetectorConfig& config);
FluxCurve gaussian_flux(const GaussianTargetSpec& spec, const DetectorConfig& config);
FluxCurve rectangular_flux(const RectangularTargetSpec& spec, const DetectorConfig& config);
FluxCurve structured_pulse_flux(const StructuredPulseSpec& spec, const DetectorConfig& config);

/// Pointwise scaling by the receiver transmission.
FluxCurve attenuate(const FluxCurve& flux, const AttenuationSpec& spec);

/// Draws one shot's photon arrivals directly from the curve by inverting the
/// piecewise-linear cumulative intensity. Sorted ascending; no deadtime.
std::vector<Picoseconds> sample_poisson_arrivals(const FluxCurve& flux, const DetectorConfig& config,
                                                 std::uint64_t rng_seed);

/// Greedy non-paralyzable filter: keeps an arrival only when it is at least
/// tau after the previously kept one. A 1 ps minimum separation always applies
/// since two detections cannot share a timing tick.
std::vector<Picoseconds> apply_deadtime(std::span<const Picoseconds> arrivals, Picoseconds tau);

/// Per-shot detection sampler. Sampling skips straight to the end of each dead
/// interval, which is equal in law to sample_poisson_arrivals followed by
/// apply_deadtime (the process is memoryless) but costs O(detections).
class ShotSampler {
 public:
  ShotSampler(const FluxCurve& flux, const DetectorConfig& config);

  /// Replaces `out` with the detections of the shot driven by `rng_seed`.
  void detect(std::uint64_t rng_seed, std::vector<Picoseconds>& out) const;
  /// Raw arrivals without deadtime.
  void arrivals(std::uint64_t rng_seed, std::vector<Picoseconds>& out) const;

 private:
  void run(std::uint64_t rng_seed, Picoseconds dead, std::vector<Picoseconds>& out) const;

  const FluxCurve& flux_;
  DetectorConfig config_;
};

/// Streams shots [first, first + count) through `sink(shot_index, detections)`.
template <typename Sink>
void for_each_shot(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t seed,
                   std::uint64_t first, std::uint64_t count, Sink&& sink) {
  ShotSampler sampler(flux, config);
  std::vector<Picoseconds> buffer;
  for (std::uint64_t i = first; i < first + count; ++i) {
    sampler.detect(shot_seed(seed, i), buffer);
    sink(i, std::span<const Picoseconds>(buffer));
  }
}

/// config.num_shots independent shots; deterministic for a fixed seed.
ShotTimestamps simulate_dataset(const FluxCurve& flux, const DetectorConfig& config,
                                std::uint64_t rng_seed);

}  // namespace deadtime
