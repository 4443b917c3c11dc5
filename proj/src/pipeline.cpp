#include "deadtime/pipeline.hpp"

#include <algorithm>

#include "deadtime/detail/parallel.hpp"
#include "deadtime/simulator.hpp"

namespace deadtime {

namespace {

constexpr std::uint64_t kBlock = 16384;

struct SplitAccumulator {
  HistogramAccumulator fit;
  HistogramAccumulator validation;

  explicit SplitAccumulator(const DetectorConfig& config) : fit(config), validation(config) {}

  void merge(const SplitAccumulator& other) {
    fit.merge(other.fit);
    validation.merge(other.validation);
  }
  SplitObservation observation() const { return {fit.observation(), validation.observation()}; }
};

template <typename Accumulator, typename Add>
Accumulator accumulate_blocks(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t seed,
                              std::uint64_t first_shot, Add&& add) {
  config.validate();
  flux.check_grid(config);
  const std::uint64_t shots = config.num_shots;
  const std::size_t blocks = static_cast<std::size_t>((shots + kBlock - 1) / kBlock);
  std::vector<Accumulator> parts(blocks, Accumulator(config));
  detail::parallel_for(blocks, [&](std::size_t b) {
    const std::uint64_t first = first_shot + b * kBlock;
    const std::uint64_t count = std::min<std::uint64_t>(kBlock, shots - b * kBlock);
    Accumulator& part = parts[b];
    for_each_shot(flux, config, seed, first, count, [&](std::uint64_t i, std::span<const Picoseconds> d) {
      add(part, i - first_shot, d);
    });
  });
  Accumulator total(config);
  for (const auto& p : parts) total.merge(p);
  return total;
}

}  // namespace

Observation simulate_observation(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t seed,
                                 std::uint64_t first_shot) {
  return accumulate_blocks<HistogramAccumulator>(
             flux, config, seed, first_shot,
             [](HistogramAccumulator& acc, std::uint64_t, std::span<const Picoseconds> d) { acc.add_shot(d); })
      .observation();
}

SplitObservation simulate_split(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t seed,
                                std::uint64_t first_shot) {
  return accumulate_blocks<SplitAccumulator>(flux, config, seed, first_shot,
                                             [](SplitAccumulator& acc, std::uint64_t i,
                                                std::span<const Picoseconds> d) {
                                               (i % 2 == 0 ? acc.fit : acc.validation).add_shot(d);
                                             })
      .observation();
}

std::vector<SplitObservation> simulate_split_prefixes(const FluxCurve& flux, const DetectorConfig& config,
                                                      std::uint64_t seed, std::uint64_t first_shot,
                                                      const std::vector<std::uint64_t>& checkpoints) {
  if (checkpoints.empty()) return {};
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end()) || checkpoints.front() == 0)
    throw InputError("checkpoints must be positive and increasing");
  const DetectorConfig run = config.with_shots(checkpoints.back());
  run.validate();
  flux.check_grid(run);
  std::vector<SplitObservation> out;
  out.reserve(checkpoints.size());
  SplitAccumulator acc(run);
  std::size_t next = 0;
  for_each_shot(flux, run, seed, first_shot, run.num_shots, [&](std::uint64_t i, std::span<const Picoseconds> d) {
    const std::uint64_t local = i - first_shot;
    (local % 2 == 0 ? acc.fit : acc.validation).add_shot(d);
    while (next < checkpoints.size() && local + 1 == checkpoints[next]) {
      out.push_back(acc.observation());
      ++next;
    }
  });
  return out;
}

}  // namespace deadtime
