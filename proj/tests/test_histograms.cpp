#include <doctest.h>

#include <cmath>
#include <random>

#include "deadtime/histograms.hpp"
#include "deadtime/pipeline.hpp"
#include "deadtime/simulator.hpp"
#include "oracles.hpp"

using namespace deadtime;
using Shots = std::vector<std::vector<Picoseconds>>;

TEST_CASE("count histogram") {
  const auto cfg = DetectorConfig::from_seconds(2e-9, 1e-9, 5, 2);
  SUBCASE("no detections") {
    CHECK(build_count_histogram(ShotTimestamps(Shots{{}, {}}), cfg).counts.sum() == 0);
  }
  SUBCASE("a detection on an edge goes to the later bin") {
    const auto y = build_count_histogram(ShotTimestamps(Shots{{2000}, {}}), cfg);
    CHECK(y.counts[2] == 1);
    CHECK(y.total() == 1);
  }
  SUBCASE("outside the window") {
    CHECK_THROWS_AS(build_count_histogram(ShotTimestamps(Shots{{5000}, {}}), cfg), InputError);
  }
  SUBCASE("per-shot vectors sum to the total") {
    const auto y = build_count_histogram(ShotTimestamps(Shots{{0, 2500}, {4999}}), cfg, {.keep_per_shot = true});
    REQUIRE(y.per_shot.size() == 2);
    CHECK(y.per_shot[0] + y.per_shot[1] == y.counts);
    CHECK(y.total() == 3);
  }
}

TEST_CASE("active fraction histogram examples") {
  SUBCASE("no detections") {
    const auto cfg = DetectorConfig::from_seconds(25e-9, 1e-9, 6, 3);
    const auto z = build_active_histogram(ShotTimestamps(Shots{{}, {}, {}}), cfg);
    CHECK(z.fractions.minCoeff() == 1.0);
    CHECK(active_fraction(z) == 1.0);
  }
  SUBCASE("detection at a left edge with tau = 2 dt") {
    const auto cfg = DetectorConfig::from_seconds(2e-9, 1e-9, 6, 1);
    const auto z = build_active_histogram(ShotTimestamps(Shots{{1000}}), cfg);
    CHECK(z.fractions[0] == 1.0);
    CHECK(z.fractions[1] == 0.0);
    CHECK(z.fractions[2] == 0.0);
    CHECK(z.fractions[3] == 1.0);
  }
  SUBCASE("detection at a midpoint with tau = dt") {
    const auto cfg = DetectorConfig::from_seconds(1e-9, 1e-9, 6, 1);
    const auto z = build_active_histogram(ShotTimestamps(Shots{{1500}}), cfg);
    CHECK(z.fractions[1] == 0.5);
    CHECK(z.fractions[2] == 0.5);
    CHECK(z.fractions[3] == 1.0);
  }
  SUBCASE("deadtime is truncated at the window end") {
    const auto cfg = DetectorConfig::from_seconds(10e-9, 1e-9, 4, 1);
    const auto z = build_active_histogram(ShotTimestamps(Shots{{3000}}), cfg);
    CHECK(z.fractions[3] == 0.0);
    CHECK(z.fractions.head(3).minCoeff() == 1.0);
  }
  SUBCASE("mean of Z") {
    ActiveFractionHistogram z;
    z.fractions = Eigen::Vector4d(1.0, 0.5, 0.5, 1.0);
    CHECK(active_fraction(z) == 0.75);
  }
}

TEST_CASE("Z matches brute-force sub-sampling at 1 ps") {
  std::mt19937_64 rng(2024);
  for (int instance = 0; instance < 40; ++instance) {
    std::uniform_int_distribution<int> bins(1, 64), width(5, 40), tau_ps(0, 300), shots(1, 6);
    const auto cfg = DetectorConfig::from_seconds(tau_ps(rng) * 1e-12, width(rng) * 1e-12,
                                                  static_cast<std::size_t>(bins(rng)),
                                                  static_cast<std::uint64_t>(shots(rng)), (instance % 3) * 7e-12);
    const auto raw = oracle::random_detections(rng, cfg, cfg.num_shots, 3.0);
    const auto z = build_active_histogram(ShotTimestamps(raw), cfg);
    const auto expected = oracle::brute_force_active(raw, cfg);
    CHECK((z.fractions - expected).cwiseAbs().maxCoeff() < 2e-3);
    CHECK((z.fractions - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dead-time accounting identity") {
  std::mt19937_64 rng(99);
  const auto cfg = DetectorConfig::from_seconds(53e-9, 1e-9, 256, 300);
  const auto raw = oracle::random_detections(rng, cfg, cfg.num_shots, 4.0);
  HistogramAccumulator acc(cfg, {.keep_per_shot = true});
  for (const auto& s : raw) acc.add_shot(s);
  const auto z = acc.active_histogram();
  const auto dead = acc.dead_picoseconds();
  std::uint64_t expected_total = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::uint64_t expected = 0;
    for (const auto t : raw[i]) expected += std::min(t + cfg.tau, cfg.window_end()) - t;
    expected_total += expected;
    const double measured = ((1.0 - z.per_shot[i].array()) * static_cast<double>(cfg.bin_width)).sum();
    CHECK(measured == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  }
  std::uint64_t total = 0;
  for (const auto d : dead) total += d;
  CHECK(total == expected_total);
}

TEST_CASE("coarse-bin identity") {
  // Detections placed so every dead interval stays inside its own bin.
  std::mt19937_64 rng(5);
  const auto cfg = DetectorConfig::from_seconds(25e-9, 1e-6, 8, 500);
  std::vector<std::vector<Picoseconds>> shots(cfg.num_shots);
  std::bernoulli_distribution hit(0.6);
  std::uniform_int_distribution<Picoseconds> offset(0, cfg.bin_width - cfg.tau);
  for (auto& s : shots)
    for (std::size_t m = 0; m < cfg.num_bins; ++m)
      if (hit(rng)) s.push_back(m * cfg.bin_width + offset(rng));
  const auto obs = build_observation(ShotTimestamps(shots), cfg);
  const double n_dt = static_cast<double>(cfg.num_shots) * cfg.bin_width_seconds();
  for (std::size_t m = 0; m < cfg.num_bins; ++m) {
    const double expected = 1.0 - static_cast<double>(obs.counts.counts[m]) * cfg.tau_seconds() / n_dt;
    CHECK(obs.active.fractions[m] == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("merging accumulators is order independent") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 400, 3000);
  const auto flux = gaussian_flux({2e9, 5e-9, 0.5e-9, 2e6}, cfg);
  const auto data = simulate_dataset(flux, cfg, 17);
  HistogramAccumulator whole(cfg);
  HistogramAccumulator parts[3] = {HistogramAccumulator(cfg), HistogramAccumulator(cfg), HistogramAccumulator(cfg)};
  for (std::size_t i = 0; i < data.num_shots(); ++i) {
    whole.add_shot(data.shot(i));
    parts[i % 3].add_shot(data.shot(i));
  }
  HistogramAccumulator forward(cfg), backward(cfg);
  for (int k = 0; k < 3; ++k) forward.merge(parts[k]);
  for (int k = 3; k-- > 0;) backward.merge(parts[k]);
  CHECK(forward.dead_picoseconds() == whole.dead_picoseconds());
  CHECK(backward.dead_picoseconds() == whole.dead_picoseconds());
  CHECK(forward.count_histogram().counts == whole.count_histogram().counts);
  CHECK(forward.active_histogram().fractions == whole.active_histogram().fractions);
  CHECK(backward.active_histogram().fractions == whole.active_histogram().fractions);
}

TEST_CASE("Z with tau = 0 is identically one") {
  const auto cfg = DetectorConfig::from_seconds(0.0, 25e-12, 400, 2000);
  const auto flux = gaussian_flux({5e9, 5e-9, 0.5e-9, 0.0}, cfg);
  const auto obs = build_observation(simulate_dataset(flux, cfg, 1), cfg);
  CHECK(obs.counts.total() > 0);
  CHECK(obs.active.fractions.minCoeff() == 1.0);
}

TEST_CASE("measured rate") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 1e-6, 2, 1000);
  CountHistogram y;
  y.counts = CountVector(2);
  y.counts << 0, 1000;
  const auto r = measured_rate(y, cfg);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(1e6));
}

TEST_CASE("R tau stays below the per-bin ceiling") {
  // At most ceil(dt / tau) detections fit in one bin, so R tau <= ceil(dt / tau) tau / dt.
  for (const double dt : {25e-9, 30e-9, 50e-9, 1e-6}) {
    const auto cfg = DetectorConfig::from_seconds(25e-9, dt, 8, 2000);
    const auto y = build_count_histogram(simulate_dataset(constant_flux(1e11, cfg), cfg, 4), cfg);
    const double bound = std::ceil(dt / 25e-9 - 1e-9) * 25e-9 / dt;
    CHECK((measured_rate(y, cfg) * 25e-9).maxCoeff() <= bound + 1e-12);
  }
}

TEST_CASE("active fraction anchor at 100 MHz") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 400, 200000);
  const auto flux = gaussian_flux({1e8, 5e-9, GaussianTargetSpec::sigma_from_fwhm(1.18e-9), 1e5}, cfg);
  const auto obs = simulate_observation(flux, cfg, 8);
  CHECK(active_fraction(obs.active) == doctest::Approx(0.94).epsilon(0.01 / 0.94));
}
