// Acceptance run: one PASS/FAIL line per numbered criterion, then the checks
// behind each line. Tolerances are fixed here and do not depend on the run.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "deadtime/estimator.hpp"
#include "deadtime/evaluation.hpp"
#include "deadtime/histograms.hpp"
#include "deadtime/models.hpp"
#include "deadtime/pipeline.hpp"
#include "deadtime/scenarios.hpp"
#include "deadtime/simulator.hpp"
#include "oracles.hpp"

using namespace deadtime;

namespace {

struct Outcome {
  std::string id;
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int number = 0;
  std::string title;
  std::vector<Outcome> checks;

  bool passed() const {
    if (checks.empty()) return false;
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << x;
  return out.str();
}

void progress(const std::string& what) { std::cerr << "[acceptance] " << what << std::endl; }

// Pulls a scenario check into a criterion, failing loudly if it is missing.
Outcome take(const scenarios::Report& report, const std::string& id) {
  for (const auto& c : report.checks)
    if (c.id == id) return {c.id, c.passed, c.detail};
  return {id, false, "check not produced by scenario " + report.name};
}

// ---------------------------------------------------------------------------

Criterion saturation_law(std::uint64_t seed) {
  Criterion c{1, "saturation law", {}};
  constexpr double tau = 25e-9;
  constexpr double tolerance = 0.01;
  constexpr double time_limit = 30.0;
  const auto cfg = DetectorConfig::from_seconds(tau, 25e-9, 200, 1000000);
  std::uint64_t stream = 0;
  for (const double lambda : {1e6, 10e6, 40e6, 100e6}) {
    const auto start = Clock::now();
    const auto obs = simulate_observation(constant_flux(lambda, cfg), cfg, shot_seed(seed, 100 + stream++));
    const double elapsed = seconds_since(start);
    const double measured = static_cast<double>(obs.counts.total()) /
                            (static_cast<double>(cfg.num_shots) * to_seconds(cfg.window_length()));
    const double expected = oracle::saturated_rate(lambda, tau);
    const double rel = std::abs(measured - expected) / expected;
    const std::string tag = fmt(lambda / 1e6) + "MHz";
    c.checks.push_back({"1.rate_" + tag, rel <= tolerance,
                        "measured " + fmt(measured, 8) + " Hz vs " + fmt(expected, 8) + " Hz, relative error " +
                            fmt(rel, 3) + " (limit 0.01)"});
    c.checks.push_back({"1.runtime_" + tag, elapsed < time_limit, fmt(elapsed, 3) + " s (limit 30 s)"});
  }
  return c;
}

Criterion muller_equivalence(std::uint64_t seed) {
  Criterion c{2, "Müller equivalence of the single-bin deadtime MLE", {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int disagreements = 0;
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double tau = (1.0 + 99.0 * u(rng)) * 1e-9;
    const double dt = tau * (100.0 + 1e4 * u(rng));
    const auto shots = static_cast<std::uint64_t>(1 + 1e6 * u(rng));
    const auto cfg = DetectorConfig::from_seconds(tau, dt, 1, shots);
    const double ceiling = 0.999 * static_cast<double>(shots) * cfg.bin_width_seconds() / cfg.tau_seconds();
    CountHistogram y;
    y.counts = CountVector::Constant(1, static_cast<std::uint64_t>(u(rng) * ceiling));
    const double muller = muller_correct(y, cfg)[0];
    const double mle = muller_equivalence_check(y, cfg)[0];
    const double rel = muller == 0.0 ? std::abs(mle) : std::abs(mle - muller) / std::abs(muller);
    worst = std::max(worst, rel);
    if (rel > 1e-12) ++disagreements;
  }
  c.checks.push_back({"2.equivalence", disagreements == 0,
                      "10000 tuples, " + std::to_string(disagreements) + " beyond 1e-12, worst relative " +
                          fmt(worst, 3)});
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 9 property suites.

Outcome z_oracle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int instance = 0; instance < 200; ++instance) {
    std::uniform_int_distribution<int> bins(1, 64), width(5, 40), tau_ps(0, 300), shots(1, 6);
    const auto cfg = DetectorConfig::from_seconds(tau_ps(rng) * 1e-12, width(rng) * 1e-12,
                                                  static_cast<std::size_t>(bins(rng)),
                                                  static_cast<std::uint64_t>(shots(rng)), (instance % 3) * 7e-12);
    const auto raw = oracle::random_detections(rng, cfg, cfg.num_shots, 3.0);
    const auto z = build_active_histogram(ShotTimestamps(raw), cfg);
    worst = std::max(worst, (z.fractions - oracle::brute_force_active(raw, cfg)).cwiseAbs().maxCoeff());
  }
  return {"9.z_oracle", worst < 1e-12, "200 random instances, max |Z - brute force| " + fmt(worst, 3)};
}

Outcome accounting_identity(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 1);
  const auto cfg = DetectorConfig::from_seconds(53e-9, 1e-9, 256, 500);
  const auto raw = oracle::random_detections(rng, cfg, cfg.num_shots, 4.0);
  HistogramAccumulator acc(cfg);
  std::uint64_t expected = 0;
  for (const auto& s : raw) {
    acc.add_shot(s);
    for (const auto t : s) expected += std::min(t + cfg.tau, cfg.window_end()) - t;
  }
  std::uint64_t total = 0;
  for (const auto d : acc.dead_picoseconds()) total += d;
  const auto z = acc.active_histogram();
  const double from_z = ((1.0 - z.fractions.array()) * static_cast<double>(cfg.bin_width)).sum() *
                        static_cast<double>(cfg.num_shots);
  const double rel = std::abs(from_z - static_cast<double>(expected)) / static_cast<double>(expected);
  return {"9.accounting", total == expected && rel < 1e-12,
          "dead ps " + std::to_string(total) + " vs " + std::to_string(expected) + ", from Z relative " + fmt(rel, 3)};
}

Outcome gradients(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 2);
  std::normal_distribution<double> jitter(0.0, 0.3);
  double worst = 0.0;
  auto compare = [&](const Eigen::VectorXd& g, const Eigen::VectorXd& fd) {
    for (Eigen::Index i = 0; i < g.size(); ++i)
      worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(g[i]), 1e-6));
  };

  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 400, 2000);
  const auto truth = gaussian_flux({4e8, 5e-9, GaussianTargetSpec::sigma_from_fwhm(1.18e-9), 4e5}, cfg);
  const auto obs = simulate_observation(truth, cfg, shot_seed(seed, 7));

  // Flux-space loss gradients.
  Eigen::VectorXd lambda = truth.rates();
  for (Eigen::Index m = 0; m < lambda.size(); ++m) lambda[m] *= std::exp(jitter(rng));
  const Eigen::VectorXd slice = lambda.segment(180, 24);
  auto embed = [&](const Eigen::VectorXd& part) {
    Eigen::VectorXd full = lambda;
    full.segment(180, 24) = part;
    return FluxCurve(full, cfg.bin_width);
  };
  compare(deadtime_loss(FluxCurve(lambda, cfg.bin_width), obs.counts, obs.active, cfg).gradient.segment(180, 24),
          oracle::finite_difference(
              [&](const Eigen::VectorXd& v) { return deadtime_loss(embed(v), obs.counts, obs.active, cfg).value; },
              slice));
  compare(poisson_loss(FluxCurve(lambda, cfg.bin_width), obs.counts, cfg).gradient.segment(180, 24),
          oracle::finite_difference(
              [&](const Eigen::VectorXd& v) { return poisson_loss(embed(v), obs.counts, cfg).value; }, slice));

  // Parameter-space gradients through both bases.
  auto parameter_check = [&](const BinnedTarget& target, const Eigen::MatrixXd& design, const Eigen::VectorXd& x) {
    const double scale = initial_rate(target);
    Eigen::VectorXd grad;
    design_objective(target, design, scale, x, grad);
    compare(grad, oracle::finite_difference(
                      [&](const Eigen::VectorXd& v) {
                        Eigen::VectorXd unused;
                        return design_objective(target, design, scale, v, unused);
                      },
                      x, 1e-6, 1.0));
  };
  for (const auto kind : {LossKind::deadtime, LossKind::poisson}) {
    const auto target = make_target(obs, kind);
    Eigen::VectorXd x(9);
    for (Eigen::Index i = 0; i < 9; ++i) x[i] = jitter(rng);
    x[0] += std::log(initial_rate(target));
    parameter_check(target, chebyshev_design(7, cfg), x);
  }
  const auto spline_cfg = DetectorConfig::from_seconds(53e-9, 1e-9, 256, 2000);
  const auto spline_obs = simulate_observation(constant_flux(2e7, spline_cfg), spline_cfg, shot_seed(seed, 8));
  Eigen::VectorXd x(9);
  for (Eigen::Index i = 0; i < 9; ++i) x[i] = std::log(2e7) + jitter(rng);
  x[8] = jitter(rng);
  parameter_check(make_target(spline_obs, LossKind::deadtime), spline_design(dyadic_knots(spline_cfg, 3), spline_cfg),
                  x);

  return {"9.gradients", worst <= 1e-6, "worst relative gradient error " + fmt(worst, 3) + " (limit 1e-6)"};
}

Outcome determinism(std::uint64_t seed) {
  const auto cfg = DetectorConfig::from_seconds(25e-9, 25e-12, 400, 4000);
  const auto flux = gaussian_flux({6.5e8, 5e-9, GaussianTargetSpec::sigma_from_fwhm(1.18e-9), 6.5e5}, cfg);
  const auto a = simulate_dataset(flux, cfg, seed);
  const auto b = simulate_dataset(flux, cfg, seed);
  const auto other = simulate_dataset(flux, cfg, seed + 1);

  // Shots are independent streams: generating them backwards gives the same data.
  std::vector<std::vector<Picoseconds>> backwards(cfg.num_shots);
  for (std::uint64_t i = cfg.num_shots; i-- > 0;)
    for_each_shot(flux, cfg, seed, i, 1, [&](std::uint64_t k, std::span<const Picoseconds> s) {
      backwards[k].assign(s.begin(), s.end());
    });

  const auto fit_a = cross_validate(a, cfg, LossKind::deadtime, {0, 6});
  const auto fit_b = cross_validate(b, cfg, LossKind::deadtime, {0, 6});
  const bool same_fit = fit_a.selected_order == fit_b.selected_order &&
                        std::get<ChebyshevModel>(fit_a.model).coefficients ==
                            std::get<ChebyshevModel>(fit_b.model).coefficients &&
                        fit_a.validation_loss == fit_b.validation_loss;
  const bool ok = a == b && !(a == other) && ShotTimestamps(backwards) == a && same_fit;
  return {"9.determinism", ok,
          std::string("repeat ") + (a == b ? "identical" : "differs") + ", other seed " +
              (a == other ? "identical" : "differs") + ", reverse order " +
              (ShotTimestamps(backwards) == a ? "identical" : "differs") + ", fits " +
              (same_fit ? "identical" : "differ")};
}

Outcome tau_zero(std::uint64_t seed) {
  const auto cfg = DetectorConfig::from_seconds(0.0, 25e-12, 400, 20000);
  const auto flux = gaussian_flux({8e8, 5e-9, GaussianTargetSpec::sigma_from_fwhm(1.18e-9), 8e5}, cfg);
  const auto split = simulate_split(flux, cfg, shot_seed(seed, 9));
  const auto d = cross_validate(split.fit, split.validation, LossKind::deadtime, {0, 8});
  const auto p = cross_validate(split.fit, split.validation, LossKind::poisson, {0, 8});
  const auto eval = simulate_observation(flux, cfg.with_shots(50000), shot_seed(seed, 10));
  const auto score_d = evaluation_loss(forward_flux(d.model, cfg), eval.counts, eval.config);
  const auto score_p = evaluation_loss(forward_flux(p.model, cfg), eval.counts, eval.config);
  const bool ok = d.selected_order == p.selected_order &&
                  std::get<ChebyshevModel>(d.model).coefficients == std::get<ChebyshevModel>(p.model).coefficients &&
                  score_d.loss == score_p.loss && split.fit.active.fractions.minCoeff() == 1.0;
  return {"9.tau_zero", ok,
          "orders " + std::to_string(d.selected_order) + "/" + std::to_string(p.selected_order) +
              ", evaluation losses " + fmt(score_d.loss, 15) + " / " + fmt(score_p.loss, 15)};
}

Criterion property_suites(std::uint64_t seed) {
  Criterion c{9, "property suites", {}};
  c.checks.push_back(z_oracle(seed));
  c.checks.push_back(accounting_identity(seed));
  c.checks.push_back(gradients(seed));
  c.checks.push_back(determinism(seed));
  c.checks.push_back(tau_zero(seed));
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance run for the deadtime toolkit");
  std::uint64_t seed = 1;
  std::string out_dir;
  bool report_only = false;
  app.add_option("--seed", seed, "Master seed (fixed at 1 before any results were seen)");
  app.add_option("--out", out_dir, "Directory for the report and scenario tables");
  app.add_flag("--report-only", report_only, "Always exit 0; failures are reported, not signalled");
  CLI11_PARSE(app, argc, argv);

  const auto run_start = Clock::now();
  std::vector<Criterion> criteria;
  std::vector<scenarios::Report> reports;
  std::vector<Outcome> extra;

  try {
    progress("criterion 1");
    criteria.push_back(saturation_law(seed));
    progress("criterion 2");
    criteria.push_back(muller_equivalence(seed));

    progress("muller-violation");
    reports.push_back(scenarios::run("muller-violation", io::Json::object(), seed));
    criteria.push_back({3, "Müller failure modes",
                        {take(reports.back(), "3a.underestimate"), take(reports.back(), "3b.nonphysical")}});

    progress("gaussian-sweep");
    const auto sweep_start = Clock::now();
    reports.push_back(scenarios::run("gaussian-sweep", io::Json::object(), seed));
    const double sweep_seconds = seconds_since(sweep_start);
    const auto& sweep = reports.back();
    criteria.push_back({4, "deadtime-fit dominance over the Gaussian sweep",
                        {take(sweep, "4.eval_loss"), take(sweep, "4.rmse_deadtime"), take(sweep, "4.rmse_poisson"),
                         {"4.runtime", sweep_seconds < 1200.0, fmt(sweep_seconds, 4) + " s (limit 1200 s)"}}});
    criteria.push_back({5, "active-fraction anchor", {take(sweep, "5.af_anchor")}});
    criteria.push_back(
        {6, "first-photon bias", {take(sweep, "6.first_photon"), take(sweep, "6.deadtime_argmax")}});
    extra.push_back(take(sweep, "eval.spearman"));

    progress("shot-noise-study");
    reports.push_back(scenarios::run("shot-noise-study", io::Json::object(), seed));
    criteria.push_back(
        {7, "shot-noise study", {take(reports.back(), "7.sd_monotone"), take(reports.back(), "7.separation")}});

    progress("extended-target");
    reports.push_back(scenarios::run("extended-target", io::Json::object(), seed));
    criteria.push_back(
        {8, "extended-target generalisation", {take(reports.back(), "8.loss"), take(reports.back(), "8.muller_fails")}});

    progress("criterion 9");
    criteria.push_back(property_suites(seed));
  } catch (const std::exception& e) {
    std::cerr << "acceptance run aborted: " << e.what() << '\n';
    return report_only ? 0 : 2;
  }

  std::ostringstream text;
  bool all = true;
  for (const auto& c : criteria) {
    all = all && c.passed();
    text << (c.passed() ? "PASS" : "FAIL") << "  criterion " << c.number << ": " << c.title << '\n';
  }
  text << "\nseed " << seed << ", total runtime " << fmt(seconds_since(run_start), 4) << " s\n\nchecks:\n";
  for (const auto& c : criteria)
    for (const auto& o : c.checks) text << "  " << (o.passed ? "pass" : "FAIL") << "  " << o.id << ": " << o.detail << '\n';
  text << "\nadditional checks (not numbered criteria):\n";
  for (const auto& o : extra) text << "  " << (o.passed ? "pass" : "FAIL") << "  " << o.id << ": " << o.detail << '\n';

  std::cout << text.str() << std::flush;
  if (!out_dir.empty()) {
    scenarios::write_report(out_dir, reports);
    std::ofstream(std::filesystem::path(out_dir) / "acceptance_report.txt") << text.str();
  }
  return (all || report_only) ? 0 : 1;
}
