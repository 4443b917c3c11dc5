#include <doctest.h>

#include <sstream>

#include "deadtime/scenarios.hpp"

using namespace deadtime;
using io::Json;

namespace {

std::string render(const scenarios::Report& report) {
  std::ostringstream out;
  for (const auto& [file, table] : report.tables) {
    out << "# " << file << '\n';
    io::write_csv(out, table);
  }
  out << scenarios::summary_json({report}).dump();
  return out.str();
}

const io::Table& table(const scenarios::Report& report, const std::string& file) {
  for (const auto& [name, t] : report.tables)
    if (name == file) return t;
  FAIL("missing table " << file);
  throw std::logic_error("unreachable");
}

}  // namespace

TEST_CASE("scenario names and errors") {
  CHECK(scenarios::names() ==
        std::vector<std::string>{"muller-violation", "gaussian-sweep", "shot-noise-study", "extended-target"});
  CHECK_THROWS_AS(scenarios::run("no-such-scenario", Json(), 1), ConfigError);
  CHECK_THROWS_AS(scenarios::run("muller-violation", Json{{"shotz", 5}}, 1), ConfigError);
  CHECK_THROWS_AS(scenarios::run("muller-violation", Json{{"shots", "many"}}, 1), ConfigError);
}

TEST_CASE("muller-violation reports non-physical bins") {
  const Json small{{"shots", 2000}, {"rect_shots", 2000}};
  const auto report = scenarios::run("muller-violation", small, 1);
  CHECK(table(report, "nonphysical.csv").rows.size() >= 1);
  CHECK(render(report) == render(scenarios::run("muller-violation", small, 1)));
}

TEST_CASE("gaussian-sweep emits a row per point and family") {
  const Json small{{"shots", 20000}, {"peak_rates", {100e6, 650e6}}, {"eval_shots", 100000}, {"max_order", 4}};
  const auto report = scenarios::run("gaussian-sweep", small, 3);
  const auto& sweep = table(report, "sweep.csv");
  REQUIRE(sweep.rows.size() == 4);
  CHECK(sweep.rows[0][2] == "deadtime");
  CHECK(sweep.rows[1][2] == "poisson");
  CHECK(render(report) == render(scenarios::run("gaussian-sweep", small, 3)));
  CHECK(render(report) != render(scenarios::run("gaussian-sweep", small, 4)));
}

TEST_CASE("shot-noise-study emits 12 replicate losses per subset size") {
  const Json small{{"peak_rates", {400e6}},    {"subset_shots", {250, 500}}, {"checked_shots", {250, 500}},
                   {"eval_shots", 100000},      {"max_order", 3}};
  const auto report = scenarios::run("shot-noise-study", small, 1);
  const auto& losses = table(report, "losses.csv");
  CHECK(losses.rows.size() == 1 * 2 * 12 * 2);
  std::map<std::string, int> per_size;
  for (const auto& row : losses.rows) ++per_size[row[2] + "/" + row[4]];
  for (const auto& [key, n] : per_size) CHECK_MESSAGE(n == 12, key);
}

TEST_CASE("extended-target runs at reduced scale") {
  const Json small{{"shots", 10000}, {"eval_shots", 100000}, {"max_depth", 4}, {"optical_densities", {0.0, 1.0}},
                   {"expected_muller_failures", {0.0}}};
  const auto report = scenarios::run("extended-target", small, 1);
  const auto& fits = table(report, "fits.csv");
  CHECK(fits.rows.size() == 4);
  bool saw_failure = false;
  for (const auto& row : fits.rows) saw_failure |= row[4] == "nonphysical";
  CHECK(saw_failure);
}
