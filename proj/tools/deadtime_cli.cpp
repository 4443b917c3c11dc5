#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "deadtime/estimator.hpp"
#include "deadtime/evaluation.hpp"
#include "deadtime/histograms.hpp"
#include "deadtime/io.hpp"
#include "deadtime/models.hpp"
#include "deadtime/scenarios.hpp"
#include "deadtime/simulator.hpp"

namespace fs = std::filesystem;
using namespace deadtime;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kNonPhysical = 3, kNotConverged = 4 };

constexpr std::uint64_t kDefaultReproduceSeed = 1;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string loss = "deadtime";
  std::string basis = "chebyshev";
  std::string orders = "0..20";
  int depth = 7;
  bool quiet = false;
  std::string timestamps;
  std::string fit;
  std::string eval_timestamps;
  std::string truth;
  std::string scenario_id = "adhoc";
  std::string format = "csv";
  bool muller = false;
  std::string scenario;
};

class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet) {}
  template <typename T>
  Log& operator<<(const T& x) {
    if (!quiet_) std::cerr << x;
    return *this;
  }

 private:
  bool quiet_;
};

OrderRange parse_orders(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const int j = std::stoi(text);
      return {j, j};
    }
    OrderRange r{std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2))};
    if (r.min < 0 || r.max < r.min) throw ConfigError("orders", "expected min..max with 0 <= min <= max");
    return r;
  } catch (const std::logic_error&) {
    throw ConfigError("orders", "expected min..max, got '" + text + "'");
  }
}

std::string extension(io::Format f) { return f == io::Format::json ? ".json" : ".csv"; }

std::string od_suffix(double od) {
  std::string s = io::format_number(od, 6);
  return "_od" + s;
}

io::RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("config", "--config is required");
  io::RunConfig config = io::load_run_config(o.config);
  if (o.seed) config.seed = *o.seed;
  return config;
}

int cmd_simulate(const Options& o) {
  Log log(o.quiet);
  const io::RunConfig config = load_config(o);
  const io::Format format = io::parse_format(o.format);
  fs::create_directories(o.out);
  const FluxCurve flux = io::build_flux(config.flux, config.detector);
  std::vector<std::optional<double>> levels;
  if (config.optical_densities.empty()) levels.push_back(std::nullopt);
  for (const double od : config.optical_densities) levels.push_back(od);

  for (std::size_t k = 0; k < levels.size(); ++k) {
    const FluxCurve level = levels[k] ? attenuate(flux, AttenuationSpec::from_od(*levels[k])) : flux;
    const std::string suffix = levels[k] ? od_suffix(*levels[k]) : "";
    // Each attenuation level gets its own stream so levels are independent.
    const std::uint64_t seed = levels[k] ? shot_seed(config.seed, k) : config.seed;
    log << "simulating " << config.detector.num_shots << " shots" << suffix << "\n";
    const ShotTimestamps data = simulate_dataset(level, config.detector, seed);
    io::save_timestamps((fs::path(o.out) / ("timestamps" + suffix + extension(format))).string(), data, format);
    io::save_histogram((fs::path(o.out) / ("truth" + suffix + extension(format))).string(), config.detector,
                       level.rates(), 6, format);
    log << "  " << data.total_detections() << " detections\n";
  }
  return kOk;
}

ShotTimestamps load_checked(const std::string& path, const DetectorConfig& detector) {
  if (path.empty()) throw ConfigError("timestamps", "--timestamps is required");
  ShotTimestamps data = io::load_timestamps(path, detector.num_shots);
  data.validate(detector);
  return data;
}

int cmd_histogram(const Options& o) {
  Log log(o.quiet);
  const io::RunConfig config = load_config(o);
  const io::Format format = io::parse_format(o.format);
  const ShotTimestamps data = load_checked(o.timestamps, config.detector);
  const Observation obs = build_observation(data, config.detector);
  fs::create_directories(o.out);
  io::save_histogram((fs::path(o.out) / ("counts" + extension(format))).string(), obs.config,
                     obs.counts.as_double(), 0, format);
  io::save_histogram((fs::path(o.out) / ("active" + extension(format))).string(), obs.config,
                     obs.active.fractions, 9, format);
  log << "shots " << obs.config.num_shots << ", detections " << obs.counts.total() << ", AF "
      << active_fraction(obs.active) << "\n";
  if (o.muller) {
    try {
      const Eigen::VectorXd corrected = muller_correct(obs.counts, obs.config);
      io::save_histogram((fs::path(o.out) / ("muller" + extension(format))).string(), obs.config, corrected, 6,
                         format);
    } catch (const NonPhysicalEstimate& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kNonPhysical;
    }
  }
  return kOk;
}

int cmd_fit(const Options& o) {
  Log log(o.quiet);
  const io::RunConfig config = load_config(o);
  const LossKind loss = parse_loss_kind(o.loss);
  const ShotTimestamps data = load_checked(o.timestamps, config.detector);
  const auto [fit_shots, validation_shots] = thin_alternating(data);
  const Observation fit = build_observation(fit_shots, config.detector);
  const Observation validation = build_observation(validation_shots, config.detector);

  io::FitRecord record;
  record.loss = loss;
  record.grid = fit.config;
  record.active_fraction = active_fraction(build_active_histogram(data, config.detector));
  if (o.basis == "chebyshev") {
    const OrderRange orders = parse_orders(o.orders);
    log << "cross-validating orders " << orders.min << ".." << orders.max << " (" << o.loss << " loss)\n";
    record.result = cross_validate(fit, validation, loss, orders);
  } else if (o.basis == "spline") {
    log << "trimming dyadic knots from depth " << o.depth << " (" << o.loss << " loss)\n";
    record.result = trim_spline_knots(fit, validation, loss, o.depth);
  } else {
    throw ConfigError("basis", "expected 'chebyshev' or 'spline', got '" + o.basis + "'");
  }

  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "fit.json") << io::fit_to_json(record).dump(2) << '\n';
  const FluxCurve flux = forward_flux(record.result.model, config.detector);
  io::save_histogram((fs::path(o.out) / "fit_flux.csv").string(), config.detector, flux.rates(), 6, io::Format::csv);
  log << "validation loss " << record.result.validation_loss << ", fit loss " << record.result.fit_loss << "\n";
  if (!record.result.diagnostics.converged) {
    std::cerr << "error: selected fit did not converge (" << record.result.diagnostics.status << ")\n";
    return kNotConverged;
  }
  return kOk;
}

int cmd_evaluate(const Options& o) {
  Log log(o.quiet);
  const io::RunConfig config = load_config(o);
  if (o.fit.empty()) throw ConfigError("fit", "--fit is required");
  if (o.eval_timestamps.empty()) throw ConfigError("eval-timestamps", "--eval-timestamps is required");
  const io::FitRecord record = io::fit_from_json(io::load_json(o.fit));
  if (!record.grid.same_grid(config.detector))
    throw InputError("fit grid does not match the evaluation detector grid");
  const FluxCurve flux = forward_flux(record.result.model, config.detector);
  const ShotTimestamps eval = load_checked(o.eval_timestamps, config.detector);
  const EvaluationScore score = evaluation_loss(flux, eval, config.detector);

  io::EvaluationRow row{o.scenario_id, record.active_fraction, to_string(record.loss), score.loss, std::nullopt,
                        score.scale};
  if (!o.truth.empty()) {
    const io::HistogramFile truth = io::load_histogram(o.truth);
    if (truth.values.size() != config.detector.num_bins) throw InputError("truth curve has the wrong length");
    Eigen::VectorXd rates = Eigen::Map<const Eigen::VectorXd>(truth.values.data(),
                                                               static_cast<Eigen::Index>(truth.values.size()));
    row.rmse = rmse(flux, FluxCurve(std::move(rates), config.detector.bin_width));
  }
  fs::create_directories(o.out);
  io::save_csv((fs::path(o.out) / "evaluation.csv").string(), io::evaluation_table({row}));
  log << "evaluation loss " << score.loss << ", scale " << score.scale << "\n";
  return kOk;
}

int cmd_reproduce(const Options& o) {
  Log log(o.quiet);
  io::Json overrides;
  std::uint64_t seed = kDefaultReproduceSeed;
  if (!o.config.empty()) {
    const io::Json json = io::load_json(o.config);
    if (!json.is_object()) throw ConfigError("<root>", "expected an object");
    for (const auto& item : json.items())
      if (item.key() != "seed" && item.key() != "parameters") throw ConfigError(item.key(), "unknown key");
    if (json.contains("seed")) {
      if (!json["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
      seed = json["seed"].get<std::uint64_t>();
    }
    if (json.contains("parameters")) overrides = json["parameters"];
  }
  if (o.seed) seed = *o.seed;

  std::vector<std::string> names;
  if (o.scenario == "all")
    names = scenarios::names();
  else
    names.push_back(o.scenario);

  std::vector<scenarios::Report> reports;
  for (const auto& name : names) {
    log << "running " << name << "\n";
    reports.push_back(scenarios::run(name, overrides, seed));
    for (const auto& c : reports.back().checks)
      log << "  [" << (c.passed ? "pass" : "FAIL") << "] " << c.id << ": " << c.detail << "\n";
  }
  scenarios::write_report(o.out, reports);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-counting deadtime toolkit: simulate, histogram, fit and evaluate."};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--seed", o.seed, "Override the configured RNG seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--quiet", o.quiet, "Suppress progress messages");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Simulate detection timestamps");
  common(simulate);
  simulate->add_option("--format", o.format, "csv or json");

  CLI::App* histogram = app.add_subcommand("histogram", "Build count and active-fraction histograms");
  common(histogram);
  histogram->add_option("--timestamps", o.timestamps, "Timestamp file")->required();
  histogram->add_option("--format", o.format, "csv or json");
  histogram->add_flag("--muller", o.muller, "Also write the Müller-corrected rates");

  CLI::App* fit = app.add_subcommand("fit", "Fit a flux model with holdout cross-validation");
  common(fit);
  fit->add_option("--timestamps", o.timestamps, "Timestamp file")->required();
  fit->add_option("--loss", o.loss, "deadtime or poisson");
  fit->add_option("--basis", o.basis, "chebyshev or spline");
  fit->add_option("--orders", o.orders, "Chebyshev order range min..max");
  fit->add_option("--depth", o.depth, "Dyadic depth of the finest spline grid");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a fit against an evaluation dataset");
  common(evaluate);
  evaluate->add_option("--fit", o.fit, "fit.json from the fit command")->required();
  evaluate->add_option("--eval-timestamps", o.eval_timestamps, "Evaluation timestamp file")->required();
  evaluate->add_option("--truth", o.truth, "Optional true flux histogram for RMSE");
  evaluate->add_option("--scenario-id", o.scenario_id, "Scenario label for the report row");

  CLI::App* reproduce = app.add_subcommand("reproduce", "Run a named scenario and write its reports");
  common(reproduce);
  reproduce->add_option("scenario", o.scenario, "muller-violation, gaussian-sweep, shot-noise-study, "
                                                "extended-target or all")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o);
    if (histogram->parsed()) return cmd_histogram(o);
    if (fit->parsed()) return cmd_fit(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (reproduce->parsed()) return cmd_reproduce(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
