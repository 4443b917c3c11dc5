#include <doctest.h>

#include <random>

#include "deadtime/core.hpp"

using namespace deadtime;
using Shots = std::vector<std::vector<Picoseconds>>;

TEST_CASE("bin_edges") {
  SUBCASE("four 25 ps bins") {
    const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 4, 1);
    CHECK(bin_edges(cfg) == std::vector<Picoseconds>{0, 25, 50, 75, 100});
  }
  SUBCASE("single 1 ns bin") {
    const auto cfg = DetectorConfig::from_seconds(25e-9, 1e-9, 1, 1);
    CHECK(bin_edges(cfg) == std::vector<Picoseconds>{0, 1000});
  }
  SUBCASE("40000 bins of 25 ps close at 1 us") {
    const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 40000, 1);
    const auto edges = bin_edges(cfg);
    REQUIRE(edges.size() == 40001);
    CHECK(edges.back() == 1'000'000);
  }
  SUBCASE("window start offsets every edge") {
    const auto cfg = DetectorConfig::from_seconds(25e-9, 10e-12, 3, 1, 1e-9);
    CHECK(bin_edges(cfg) == std::vector<Picoseconds>{1000, 1010, 1020, 1030});
  }
}

TEST_CASE("bins are half-open") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 4, 1);
  CHECK(cfg.bin_index(0) == 0);
  CHECK(cfg.bin_index(24) == 0);
  CHECK(cfg.bin_index(25) == 1);
  CHECK(cfg.bin_index(99) == 3);
  CHECK_THROWS_AS(cfg.bin_index(100), InputError);
}

TEST_CASE("quantising to a bin and back moves a timestamp by less than one bin") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 40000, 1, 3e-9);
  const auto edges = bin_edges(cfg);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Picoseconds> pick(cfg.window_start, cfg.window_end() - 1);
  for (int i = 0; i < 100000; ++i) {
    const Picoseconds t = pick(rng);
    const Picoseconds left = edges[cfg.bin_index(t)];
    REQUIRE(left <= t);
    REQUIRE(t - left < cfg.bin_width);
  }
}

TEST_CASE("DetectorConfig validation names the field") {
  auto field_of = [](auto&& make) {
    try {
      make();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  CHECK(field_of([] { DetectorConfig::from_seconds(-1e-9, 25e-12, 4, 1); }) == "detector.tau");
  CHECK(field_of([] { DetectorConfig::from_seconds(25e-9, 0.0, 4, 1); }) == "detector.bin_width");
  CHECK(field_of([] { DetectorConfig::from_seconds(25e-9, 25e-12, 0, 1); }) == "detector.num_bins");
  CHECK(field_of([] { DetectorConfig::from_seconds(25e-9, 25e-12, 4, 0); }) == "detector.num_shots");
  CHECK(field_of([] { DetectorConfig::from_seconds(25e-9, 25e-12, 4, 1, std::nan("")); }) ==
        "detector.window_start");
  CHECK_NOTHROW(DetectorConfig::from_seconds(0.0, 25e-12, 4, 1));
}

TEST_CASE("to_picoseconds rounds to the nearest tick") {
  CHECK(to_picoseconds(25e-12) == 25);
  CHECK(to_picoseconds(1.18e-9) == 1180);
  CHECK(to_picoseconds(53e-9) == 53000);
  CHECK(to_seconds(25) == doctest::Approx(25e-12));
  CHECK_THROWS_AS(to_picoseconds(-1e-12), ConfigError);
  CHECK_THROWS_AS(to_picoseconds(INFINITY), ConfigError);
}

TEST_CASE("ShotTimestamps layout and validation") {
  const auto cfg = DetectorConfig::from_seconds(1e-9, 1e-9, 10, 3);
  const ShotTimestamps data(Shots{{1, 5000}, {}, {9999}});
  CHECK(data.num_shots() == 3);
  CHECK(data.total_detections() == 3);
  CHECK(data.shot(1).empty());
  CHECK(data.shot(2)[0] == 9999);
  CHECK_NOTHROW(data.validate(cfg));
  CHECK_THROWS_AS(ShotTimestamps(std::vector<std::vector<Picoseconds>>{{10000}}).validate(cfg), InputError);
  CHECK_THROWS_AS(ShotTimestamps(std::vector<std::vector<Picoseconds>>{{5, 5}}).validate(cfg), InputError);
  CHECK_THROWS_AS(ShotTimestamps(std::vector<std::vector<Picoseconds>>{{7, 3}}).validate(cfg), InputError);
  CHECK_THROWS_AS(ShotTimestamps(std::vector<Picoseconds>{1, 2}, std::vector<std::size_t>{0, 3}), InputError);
}

TEST_CASE("FluxCurve cumulative intensity") {
  Eigen::VectorXd rates(3);
  rates << 1e9, 0.0, 2e9;
  const FluxCurve flux(rates, 1000);
  REQUIRE(flux.cumulative().size() == 4);
  CHECK(flux.cumulative()[0] == 0.0);
  CHECK(flux.cumulative()[1] == doctest::Approx(1.0));
  CHECK(flux.cumulative()[2] == doctest::Approx(1.0));
  CHECK(flux.total() == doctest::Approx(3.0));
  for (Eigen::Index m = 0; m < 3; ++m)
    CHECK(flux.cumulative()[m + 1] - flux.cumulative()[m] == doctest::Approx(rates[m] * 1e-9));

  Eigen::VectorXd negative(1);
  negative << -1.0;
  CHECK_THROWS_AS(FluxCurve(negative, 1000), InputError);

  CHECK_NOTHROW(flux.check_grid(DetectorConfig::from_seconds(1e-9, 1e-9, 3, 1)));
  CHECK_THROWS_AS(flux.check_grid(DetectorConfig::from_seconds(1e-9, 1e-9, 4, 1)), InputError);
  CHECK_THROWS_AS(flux.check_grid(DetectorConfig::from_seconds(1e-9, 2e-9, 3, 1)), InputError);
}
