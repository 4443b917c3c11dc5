#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deadtime/io.hpp"

namespace deadtime::scenarios {

struct Check {
  std::string id;  // e.g. "4.eval_loss"
  std::string description;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::string name;
  std::vector<std::pair<std::string, io::Table>> tables;  // file name, contents
  std::vector<Check> checks;

  bool passed() const;
};

io::Json summary_json(const std::vector<Report>& reports);
/// Writes every table under `directory` plus acceptance_summary.json.
void write_report(const std::string& directory, const std::vector<Report>& reports);

// ---------------------------------------------------------------------------

/// Coarse-bin Müller correction of a wide Gaussian, and a flat-topped target
/// sampled at dt = tau that drives R tau to 1.
struct MullerViolationParams {
  double tau = 25e-9;
  double sigma = 250e-9;
  double center = 1e-6;
  double fine_bin = 1e-9;
  std::uint64_t fine_bins = 4000;
  std::uint64_t coarse_factor = 2000;
  std::vector<double> peak_rates{1e6, 3e6, 10e6, 30e6, 100e6, 300e6};
  double background_rate = 1e3;
  std::uint64_t shots = 20000;

  double rect_rate = 10e9;
  double rect_start = 100e-9;
  double rect_stop = 400e-9;
  std::uint64_t rect_bins = 20;
  std::uint64_t rect_shots = 10000;
};

/// Narrow Gaussian swept from nearly linear to deep saturation, fitted with
/// both losses and scored against a low-flux evaluation set.
struct GaussianSweepParams {
  double tau = 25e-9;
  double bin_width = 25e-12;
  std::uint64_t num_bins = 400;
  std::uint64_t shots = 1000000;
  double fwhm = 1.18e-9;
  double center = 5e-9;
  double background_fraction = 1e-3;  // background as a fraction of the peak
  std::vector<double> peak_rates{16e6, 30e6, 60e6, 100e6, 160e6, 250e6, 400e6, 650e6, 1000e6, 1500e6, 2000e6};
  double eval_peak_rate = 1e6;
  std::uint64_t eval_shots = 10000000;
  int min_order = 0;
  int max_order = 20;
  double af_threshold = 0.85;
  double anchor_peak_rate = 100e6;
};

/// Replicate fits on disjoint subsets of increasing size at several flux levels.
struct ShotNoiseParams {
  double tau = 25e-9;
  double bin_width = 25e-12;
  std::uint64_t num_bins = 400;
  double fwhm = 1.18e-9;
  double center = 5e-9;
  double background_fraction = 1e-3;
  std::vector<double> peak_rates{80e6, 170e6, 270e6, 400e6, 560e6, 800e6, 1300e6, 2000e6};
  std::uint64_t replicates = 12;
  std::vector<std::uint64_t> subset_shots{250, 500, 750, 1000, 1250, 1500, 1750, 2000};
  std::vector<std::uint64_t> checked_shots{250, 500, 1000, 2000};
  int min_order = 0;
  int max_order = 8;
  double eval_peak_rate = 1e6;
  std::uint64_t eval_shots = 10000000;
  double separation_low = 0.7;
  double separation_high = 0.9;
};

/// Microsecond structured pulse at several attenuations, fitted with dyadic
/// splines under the deadtime loss and under Poisson on Müller-corrected counts.
struct ExtendedTargetParams {
  double tau = 53e-9;
  double bin_width = 1e-9;
  std::uint64_t num_bins = 2048;
  std::uint64_t shots = 320000;
  double peak_rate = 250e6;
  double pulse_start = 0.45e-6;
  double pulse_duration = 1.06e-6;
  double edge_time = 10e-9;
  std::vector<StructuredPulseSpec::Ripple> ripples{{0.15, 200e-9, 0.0}, {0.08, 73e-9, 1.0}};
  double background_fraction = 1e-3;
  std::vector<double> optical_densities{0.0, 0.3, 1.0, 3.0};
  std::vector<double> expected_muller_failures{0.0, 0.3};
  double eval_optical_density = 4.0;
  std::uint64_t eval_shots = 10000000;
  int max_depth = 7;
};

Report muller_violation(const MullerViolationParams& params, std::uint64_t seed);
Report gaussian_sweep(const GaussianSweepParams& params, std::uint64_t seed);
Report shot_noise_study(const ShotNoiseParams& params, std::uint64_t seed);
Report extended_target(const ExtendedTargetParams& params, std::uint64_t seed);

const std::vector<std::string>& names();

/// Runs a scenario by name. `overrides` may replace any parameter by its field
/// name; unknown names throw ConfigError.
Report run(const std::string& name, const io::Json& overrides, std::uint64_t seed);

}  // namespace deadtime::scenarios
