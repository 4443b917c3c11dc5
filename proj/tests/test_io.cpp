#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "deadtime/io.hpp"
#include "deadtime/pipeline.hpp"

using namespace deadtime;
using io::Json;

namespace {

std::string error_field(const Json& json) {
  try {
    io::parse_run_config(json);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "none";
}

Json minimal() {
  return Json::parse(R"({
    "detector": {"tau": 0, "bin_width": 1e-9, "num_bins": 100, "num_shots": 1000},
    "flux": {"shape": "constant", "rate": 1e7}
  })");
}

}  // namespace

TEST_CASE("run configuration parsing") {
  const auto cfg = io::parse_run_config(minimal());
  CHECK(cfg.detector.tau == 0);
  CHECK(cfg.detector.bin_width == 1000);
  CHECK(cfg.seed == 1);
  CHECK(std::get<io::ConstantFluxSpec>(cfg.flux).rate == 1e7);

  const auto gaussian = io::parse_run_config(Json::parse(R"({
    "detector": {"tau": 25e-9, "bin_width": 25e-12, "num_bins": 400, "num_shots": 1000000},
    "flux": {"shape": "gaussian", "peak_rate": 6.5e8, "center": 5e-9, "fwhm": 1.18e-9, "background_rate": 6.5e5},
    "seed": 7, "od": [0, 0.3, 1]
  })"));
  CHECK(std::get<GaussianTargetSpec>(gaussian.flux).sigma == doctest::Approx(0.501e-9).epsilon(1e-3));
  CHECK(gaussian.seed == 7);
  CHECK(gaussian.optical_densities == std::vector<double>{0, 0.3, 1});

  SUBCASE("errors carry the field path") {
    Json j = minimal();
    j["detector"]["tau"] = -1e-9;
    CHECK(error_field(j) == "detector.tau");
    j = minimal();
    j["detector"].erase("num_bins");
    CHECK(error_field(j) == "detector.num_bins");
    j = minimal();
    j["detector"]["num_shots"] = 0;
    CHECK(error_field(j) == "detector.num_shots");
    j = minimal();
    j["detector"]["typo"] = 1;
    CHECK(error_field(j) == "detector.typo");
    j = minimal();
    j["flux"]["shape"] = "triangle";
    CHECK(error_field(j) == "flux.shape");
    j = minimal();
    j["od"] = {0.0, -1.0};
    CHECK(error_field(j) == "od[1]");
    j = minimal();
    j["flux"] = Json::parse(R"({"shape": "structured", "peak_rate": 1, "start": 0, "duration": 1e-7,
                                "edge_time": 1e-9, "ripples": [{"amplitude": 0.1, "period": 0}]})");
    CHECK(error_field(j) == "flux.ripples[0].period");
  }
}

TEST_CASE("timestamp files round-trip") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 400, 500);
  const auto data = simulate_dataset(gaussian_flux({2e9, 5e-9, 0.5e-9, 2e6}, cfg), cfg, 3);

  std::stringstream csv;
  io::write_timestamps_csv(csv, data);
  CHECK(csv.str().rfind("shot_index,timestamp_ps\n", 0) == 0);
  CHECK(io::read_timestamps_csv(csv, cfg.num_shots) == data);

  CHECK(io::timestamps_from_json(io::timestamps_to_json(data)) == data);

  const auto dir = std::filesystem::temp_directory_path() / "deadtime_io_test";
  std::filesystem::create_directories(dir);
  io::save_timestamps((dir / "t.csv").string(), data, io::Format::csv);
  io::save_timestamps((dir / "t.json").string(), data, io::Format::json);
  CHECK(io::load_timestamps((dir / "t.csv").string(), cfg.num_shots) == data);
  CHECK(io::load_timestamps((dir / "t.json").string(), 0) == data);

  std::stringstream bad("shot_index,timestamp_ps\n0,12\n7,3\n");
  CHECK_THROWS_AS(io::read_timestamps_csv(bad, 5), InputError);
  std::stringstream header("shot,time\n");
  CHECK_THROWS_AS(io::read_timestamps_csv(header, 5), InputError);
}

TEST_CASE("histogram files") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 3, 10);
  const Eigen::Vector3d z(1.0, 0.123456789123, 0.5);
  std::stringstream out;
  io::write_histogram_csv(out, cfg, z, 9);
  CHECK(out.str() == "bin_index,left_edge_ps,value\n0,0,1.000000000\n1,25,0.123456789\n2,50,0.500000000\n");
  const auto back = io::read_histogram_csv(out);
  CHECK(back.left_edges == std::vector<Picoseconds>{0, 25, 50});
  CHECK(back.values[1] == 0.123456789);
  const auto json = io::histogram_from_json(io::histogram_to_json(cfg, z, 9));
  CHECK(json.values == back.values);
}

TEST_CASE("fit records round-trip") {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 400, 4000);
  const auto split = simulate_split(gaussian_flux({3e8, 5e-9, 0.5e-9, 3e5}, cfg), cfg, 2);
  io::FitRecord record;
  record.result = cross_validate(split.fit, split.validation, LossKind::poisson, {0, 4});
  record.loss = LossKind::poisson;
  record.grid = split.fit.config;
  record.active_fraction = active_fraction(split.fit.active);
  const auto back = io::fit_from_json(Json::parse(io::fit_to_json(record).dump()));
  CHECK(back.loss == LossKind::poisson);
  CHECK(back.grid.same_grid(cfg));
  CHECK(back.result.selected_order == record.result.selected_order);
  CHECK(std::get<ChebyshevModel>(back.result.model).coefficients ==
        std::get<ChebyshevModel>(record.result.model).coefficients);
  CHECK(forward_flux(back.result.model, cfg).rates() == forward_flux(record.result.model, cfg).rates());

  const auto spline_cfg = DetectorConfig::from_seconds(53e-9, 1e-9, 256, 4000);
  const auto s = simulate_split(constant_flux(1e7, spline_cfg), spline_cfg, 2);
  record.result = trim_spline_knots(s.fit, s.validation, LossKind::deadtime, 3);
  record.loss = LossKind::deadtime;
  record.grid = s.fit.config;
  const auto spline_back = io::fit_from_json(io::fit_to_json(record));
  CHECK(std::get<SplineModel>(spline_back.result.model).knots == std::get<SplineModel>(record.result.model).knots);
  CHECK(forward_flux(spline_back.result.model, spline_cfg).rates() ==
        forward_flux(record.result.model, spline_cfg).rates());
}

TEST_CASE("tables") {
  CHECK(io::format_number(0.1) == "0.1");
  CHECK(io::format_number(1234567.891, 4) == "1.235e+06");
  io::Table t;
  t.columns = {"a", "b"};
  t.add({"1", "x"});
  CHECK_THROWS(t.add({"only one"}));
  std::stringstream out;
  io::write_csv(out, t);
  CHECK(out.str() == "a,b\n1,x\n");

  const auto table = io::evaluation_table({{"s", 0.9, "deadtime", -10.5, 3.0, 0.25}, {"s", 0.9, "poisson", -9.0, {}, 0.5}});
  CHECK(table.columns == std::vector<std::string>{"scenario", "active_fraction", "family", "evaluation_loss", "rmse", "scale"});
  CHECK(table.rows[1][4].empty());
}
