#include "deadtime/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deadtime/detail/parallel.hpp"

namespace deadtime {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kShotsPerBlock = 1 << 14;

}  // namespace

std::uint64_t shot_seed(std::uint64_t master_seed, std::uint64_t shot_index) {
  return mix64(mix64(master_seed) + 0x9E3779B97F4A7C15ull * (shot_index + 1));
}

// ---------------------------------------------------------------------------
// Flux generators

void GaussianTargetSpec::validate() const {
  if (!(peak_rate >= 0.0) || !std::isfinite(peak_rate)) throw ConfigError("flux.peak_rate", "must be >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("flux.sigma", "must be > 0");
  if (!(background_rate >= 0.0) || !std::isfinite(background_rate))
    throw ConfigError("flux.background_rate", "must be >= 0");
  if (!std::isfinite(center)) throw ConfigError("flux.center", "must be finite");
}

double GaussianTargetSpec::sigma_from_fwhm(double fwhm) {
  return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

void RectangularTargetSpec::validate() const {
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("flux.peak_rate", "must be >= 0");
  if (!(stop > start)) throw ConfigError("flux.stop", "must be after flux.start");
  if (!(background_rate >= 0.0)) throw ConfigError("flux.background_rate", "must be >= 0");
}

void StructuredPulseSpec::validate() const {
  if (!(peak_rate >= 0.0) || !std::isfinite(peak_rate)) throw ConfigError("flux.peak_rate", "must be >= 0");
  if (!(duration > 0.0)) throw ConfigError("flux.duration", "must be > 0");
  if (!(edge_time > 0.0)) throw ConfigError("flux.edge_time", "must be > 0");
  if (!(background_rate >= 0.0)) throw ConfigError("flux.background_rate", "must be >= 0");
  for (std::size_t k = 0; k < ripples.size(); ++k)
    if (!(ripples[k].period > 0.0))
      throw ConfigError("flux.ripples[" + std::to_string(k) + "].period", "must be > 0");
}

double StructuredPulseSpec::rate_at(double t) const {
  const double rise = 1.0 / (1.0 + std::exp(-(t - start) / edge_time));
  const double fall = 1.0 / (1.0 + std::exp((t - start - duration) / edge_time));
  double ripple = 1.0;
  double headroom = 1.0;
  for (const auto& r : ripples) {
    ripple += r.amplitude * std::sin(2.0 * std::numbers::pi * (t - start) / r.period + r.phase);
    headroom += std::abs(r.amplitude);
  }
  return peak_rate * rise * fall * std::max(ripple, 0.0) / headroom + background_rate;
}

void AttenuationSpec::validate() const {
  if (!(transmission > 0.0) || transmission > 1.0)
    throw ConfigError("attenuation.transmission", "must lie in (0, 1]");
}

AttenuationSpec AttenuationSpec::from_od(double optical_density) {
  if (!(optical_density >= 0.0) || !std::isfinite(optical_density))
    throw ConfigError("attenuation.optical_density", "must be finite and >= 0");
  return {optical_density, std::pow(10.0, -optical_density)};
}

FluxCurve sample_flux(const DetectorConfig& config, const std::function<double(double)>& rate_at) {
  config.validate();
  Eigen::VectorXd rates(static_cast<Eigen::Index>(config.num_bins));
  for (std::size_t m = 0; m < config.num_bins; ++m)
    rates[static_cast<Eigen::Index>(m)] = rate_at(to_seconds(config.window_start + m * config.bin_width));
  return FluxCurve(std::move(rates), config.bin_width);
}

FluxCurve constant_flux(double rate, const DetectorConfig& config) {
  return sample_flux(config, [rate](double) { return rate; });
}

FluxCurve gaussian_flux(const GaussianTargetSpec& spec, const DetectorConfig& config) {
  spec.validate();
  return sample_flux(config, [&spec](double t) {
    const double x = (t - spec.center) / spec.sigma;
    return spec.peak_rate * std::exp(-0.5 * x * x) + spec.background_rate;
  });
}

FluxCurve rectangular_flux(const RectangularTargetSpec& spec, const DetectorConfig& config) {
  spec.validate();
  return sample_flux(config, [&spec](double t) {
    return (t >= spec.start && t < spec.stop ? spec.rate : 0.0) + spec.background_rate;
  });
}

FluxCurve structured_pulse_flux(const StructuredPulseSpec& spec, const DetectorConfig& config) {
  spec.validate();
  return sample_flux(config, [&spec](double t) { return spec.rate_at(t); });
}

FluxCurve attenuate(const FluxCurve& flux, const AttenuationSpec& spec) {
  spec.validate();
  return FluxCurve(flux.rates() * spec.transmission, flux.bin_width());
}

// ---------------------------------------------------------------------------
// Sampling

ShotSampler::ShotSampler(const FluxCurve& flux, const DetectorConfig& config)
    : flux_(flux), config_(config) {
  config_.validate();
  flux_.check_grid(config_);
}

void ShotSampler::detect(std::uint64_t rng_seed, std::vector<Picoseconds>& out) const {
  run(rng_seed, std::max<Picoseconds>(config_.tau, 1), out);
}

void ShotSampler::arrivals(std::uint64_t rng_seed, std::vector<Picoseconds>& out) const {
  run(rng_seed, 0, out);
}

// Each arrival solves Lambda(t) = level + E with E ~ Exp(1). With a positive
// dead period the next search restarts at the recorded tick plus the deadtime;
// with zero dead period the level simply accumulates (plain Poisson stream).
void ShotSampler::run(std::uint64_t rng_seed, Picoseconds dead, std::vector<Picoseconds>& out) const {
  out.clear();
  const Eigen::VectorXd& cum = flux_.cumulative();
  const Eigen::VectorXd& rates = flux_.rates();
  const auto num_bins = static_cast<Eigen::Index>(config_.num_bins);
  const double total = cum[num_bins];
  if (!(total > 0.0)) return;

  const Picoseconds width = config_.bin_width;
  const Picoseconds window = config_.window_length();
  const double dt = config_.bin_width_seconds();

  SplitMix64 rng(rng_seed);
  double level = 0.0;
  Eigen::Index k = 0;
  Picoseconds search_start = 0;
  for (;;) {
    const double target = level - std::log1p(-rng.uniform());
    if (target >= total) break;
    while (cum[k + 1] <= target) ++k;
    const double fraction = (target - cum[k]) / (rates[k] * dt);
    const Picoseconds bin_left = static_cast<Picoseconds>(k) * width;
    Picoseconds t = bin_left + static_cast<Picoseconds>(std::floor(fraction * static_cast<double>(width)));
    t = std::clamp<Picoseconds>(t, std::max(bin_left, search_start), bin_left + width - 1);
    if (t >= window) break;
    out.push_back(config_.window_start + t);

    if (dead == 0) {
      level = target;
      continue;
    }
    search_start = t + dead;
    if (search_start >= window) break;
    k = static_cast<Eigen::Index>(search_start / width);
    const double within = static_cast<double>(search_start - static_cast<Picoseconds>(k) * width) /
                          static_cast<double>(width);
    level = cum[k] + rates[k] * dt * within;
  }
}

std::vector<Picoseconds> sample_poisson_arrivals(const FluxCurve& flux, const DetectorConfig& config,
                                                 std::uint64_t rng_seed) {
  ShotSampler sampler(flux, config);
  std::vector<Picoseconds> out;
  sampler.arrivals(rng_seed, out);
  return out;
}

std::vector<Picoseconds> apply_deadtime(std::span<const Picoseconds> arrivals, Picoseconds tau) {
  const Picoseconds gap = std::max<Picoseconds>(tau, 1);
  std::vector<Picoseconds> kept;
  for (const Picoseconds t : arrivals) {
    if (!kept.empty() && t < kept.back()) throw InputError("arrivals must be sorted ascending");
    if (kept.empty() || t - kept.back() >= gap) kept.push_back(t);
  }
  return kept;
}

ShotTimestamps simulate_dataset(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t rng_seed) {
  config.validate();
  flux.check_grid(config);
  const std::uint64_t shots = config.num_shots;
  const std::size_t blocks = static_cast<std::size_t>((shots + kShotsPerBlock - 1) / kShotsPerBlock);
  std::vector<ShotTimestamps> parts(blocks);
  detail::parallel_for(blocks, [&](std::size_t b) {
    const std::uint64_t first = b * kShotsPerBlock;
    const std::uint64_t count = std::min<std::uint64_t>(kShotsPerBlock, shots - first);
    ShotTimestamps& part = parts[b];
    for_each_shot(flux, config, rng_seed, first, count,
                  [&part](std::uint64_t, std::span<const Picoseconds> d) { part.append_shot(d); });
  });

  std::size_t total = 0;
  for (const auto& p : parts) total += p.total_detections();
  ShotTimestamps out;
  out.reserve(shots, total);
  for (const auto& p : parts)
    for (std::size_t i = 0; i < p.num_shots(); ++i) out.append_shot(p.shot(i));
  return out;
}

}  // namespace deadtime
