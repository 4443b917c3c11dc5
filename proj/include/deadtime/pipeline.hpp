#pragma once

#include <cstdint>
#include <vector>

#include "deadtime/core.hpp"
#include "deadtime/histograms.hpp"

namespace deadtime {

/// Fit and validation histograms from alternating shots.
struct SplitObservation {
  Observation fit;
  Observation validation;
};

/// Simulates config.num_shots shots starting at shot index `first_shot` and
/// histograms them without storing timestamps.
Observation simulate_observation(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t seed,
                                 std::uint64_t first_shot = 0);

/// As simulate_observation, with even shots (counted from `first_shot`) in the
/// fit set and odd shots in the validation set.
SplitObservation simulate_split(const FluxCurve& flux, const DetectorConfig& config, std::uint64_t seed,
                                std::uint64_t first_shot = 0);

/// Split histograms of the leading `checkpoints[k]` shots for each k, from a
/// single pass over max(checkpoints) shots. Checkpoints must be increasing.
std::vector<SplitObservation> simulate_split_prefixes(const FluxCurve& flux, const DetectorConfig& config,
                                                      std::uint64_t seed, std::uint64_t first_shot,
                                                      const std::vector<std::uint64_t>& checkpoints);

}  // namespace deadtime
