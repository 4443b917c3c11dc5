#include "deadtime/scenarios.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "deadtime/detail/parallel.hpp"
#include "deadtime/estimator.hpp"
#include "deadtime/evaluation.hpp"
#include "deadtime/models.hpp"
#include "deadtime/pipeline.hpp"
#include "deadtime/simulator.hpp"

namespace deadtime::scenarios {

namespace {

using io::format_number;

constexpr std::uint64_t kEvalStream = 0xE7A1;

std::string num(double x, int digits = 10) { return format_number(x, digits); }
std::string exact(double x) { return format_number(x, 15); }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Pools the fit and validation halves back into one histogram pair.
Observation pooled(const SplitObservation& split) {
  Observation out = split.fit;
  const double nf = static_cast<double>(split.fit.config.num_shots);
  const double nv = static_cast<double>(split.validation.config.num_shots);
  out.config.num_shots += split.validation.config.num_shots;
  out.counts.counts += split.validation.counts.counts;
  out.active.fractions = (split.fit.active.fractions * nf + split.validation.active.fractions * nv) / (nf + nv);
  return out;
}

Eigen::Index argmax(const Eigen::VectorXd& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return i;
}

double max_rate_tau(const Observation& obs) {
  return measured_rate(obs.counts, obs.config).maxCoeff() * obs.config.tau_seconds();
}

std::string join(const std::vector<std::string>& parts, const char* sep = "; ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

const char* family_name(int f) { return f == 0 ? "deadtime" : "poisson"; }
LossKind family_kind(int f) { return f == 0 ? LossKind::deadtime : LossKind::poisson; }

}  // namespace

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

io::Json summary_json(const std::vector<Report>& reports) {
  io::Json json;
  bool all = true;
  io::Json list = io::Json::array();
  for (const auto& r : reports) {
    io::Json item;
    item["scenario"] = r.name;
    item["passed"] = r.passed();
    io::Json checks = io::Json::array();
    for (const auto& c : r.checks)
      checks.push_back({{"id", c.id}, {"description", c.description}, {"passed", c.passed}, {"detail", c.detail}});
    item["checks"] = std::move(checks);
    list.push_back(std::move(item));
    all = all && r.passed();
  }
  json["passed"] = all;
  json["scenarios"] = std::move(list);
  return json;
}

void write_report(const std::string& directory, const std::vector<Report>& reports) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  for (const auto& r : reports) {
    const fs::path dir = fs::path(directory) / r.name;
    fs::create_directories(dir);
    for (const auto& [file, table] : r.tables) io::save_csv((dir / file).string(), table);
  }
  std::ofstream out(fs::path(directory) / "acceptance_summary.json");
  if (!out) throw InputError("cannot write acceptance_summary.json under '" + directory + "'");
  out << summary_json(reports).dump(2) << '\n';
}

// ---------------------------------------------------------------------------

Report muller_violation(const MullerViolationParams& p, std::uint64_t seed) {
  if (p.coarse_factor == 0 || p.fine_bins % p.coarse_factor != 0)
    throw ConfigError("coarse_factor", "must divide fine_bins");
  if (p.peak_rates.empty()) throw ConfigError("peak_rates", "must not be empty");
  Report report{"muller-violation", {}, {}};

  const DetectorConfig fine = DetectorConfig::from_seconds(p.tau, p.fine_bin, p.fine_bins, p.shots);
  const std::uint64_t coarse_bins = p.fine_bins / p.coarse_factor;
  const DetectorConfig coarse =
      DetectorConfig::from_seconds(p.tau, p.fine_bin * static_cast<double>(p.coarse_factor), coarse_bins, p.shots);
  const auto center_bin = static_cast<Eigen::Index>(coarse.bin_index(to_picoseconds(p.center, "center")));

  struct Point {
    Eigen::VectorXd truth;
    Eigen::VectorXd measured;
    std::vector<double> corrected;  // NaN when non-physical
  };
  std::vector<Point> points(p.peak_rates.size());
  detail::parallel_for(points.size(), [&](std::size_t k) {
    const GaussianTargetSpec spec{p.peak_rates[k], p.center, p.sigma, p.background_rate};
    const FluxCurve flux = gaussian_flux(spec, fine);
    const Observation obs = simulate_observation(flux, fine, shot_seed(seed, k));
    CountHistogram y;
    y.counts = CountVector::Zero(static_cast<Eigen::Index>(coarse_bins));
    Point& out = points[k];
    out.truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(coarse_bins));
    for (std::uint64_t m = 0; m < p.fine_bins; ++m) {
      const auto c = static_cast<Eigen::Index>(m / p.coarse_factor);
      y.counts[c] += obs.counts.counts[static_cast<Eigen::Index>(m)];
      out.truth[c] += flux.rates()[static_cast<Eigen::Index>(m)] / static_cast<double>(p.coarse_factor);
    }
    out.measured = measured_rate(y, coarse);
    for (Eigen::Index c = 0; c < out.measured.size(); ++c) {
      try {
        out.corrected.push_back(muller_correct(out.measured[c], coarse.tau_seconds()));
      } catch (const NonPhysicalEstimate&) {
        out.corrected.push_back(std::nan(""));
      }
    }
  });

  io::Table table{{"peak_rate", "bin", "true_mean_rate", "measured_rate", "rate_tau", "muller_estimate", "ratio"}, {}};
  io::Table records{{"case", "peak_rate", "bin", "measured_rate", "rate_tau"}, {}};
  std::vector<double> ratios;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point& pt = points[k];
    for (Eigen::Index c = 0; c < pt.truth.size(); ++c) {
      const double est = pt.corrected[static_cast<std::size_t>(c)];
      const double rt = pt.measured[c] * coarse.tau_seconds();
      table.add({num(p.peak_rates[k]), std::to_string(c), num(pt.truth[c]), num(pt.measured[c]), num(rt),
                 std::isnan(est) ? "nonphysical" : num(est), std::isnan(est) ? "" : num(est / pt.truth[c])});
      if (std::isnan(est)) records.add({"coarse-gaussian", num(p.peak_rates[k]), std::to_string(c), num(pt.measured[c]), num(rt)});
    }
    const double est = pt.corrected[static_cast<std::size_t>(center_bin)];
    ratios.push_back(std::isnan(est) ? 0.0 : est / pt.truth[center_bin]);
  }

  {
    std::ostringstream detail;
    detail << "Müller/true mean rate in the pulse bin:";
    for (std::size_t k = 0; k < ratios.size(); ++k) detail << " " << num(p.peak_rates[k]) << "->" << num(ratios[k]);
    const std::size_t top = std::min<std::size_t>(2, ratios.size());
    bool under = true;
    for (std::size_t k = ratios.size() - top; k < ratios.size(); ++k) under = under && ratios[k] < 0.95;
    report.checks.push_back({"3a.underestimate",
                             "coarse-bin Müller estimate falls below 0.95 of the true mean rate at the two highest "
                             "peak rates",
                             under, detail.str()});
  }

  // Flat-topped target sampled at dt = tau.
  const DetectorConfig rect_cfg = DetectorConfig::from_seconds(p.tau, p.tau, p.rect_bins, p.rect_shots);
  const RectangularTargetSpec rect{p.rect_rate, p.rect_start, p.rect_stop, p.background_rate};
  const Observation robs = simulate_observation(rectangular_flux(rect, rect_cfg), rect_cfg, shot_seed(seed, 0xB));
  const Eigen::VectorXd rates = measured_rate(robs.counts, rect_cfg);
  io::Table rect_table{{"bin", "left_edge_ps", "counts", "rate_tau", "muller_estimate"}, {}};
  int over = 0;
  for (Eigen::Index m = 0; m < rates.size(); ++m) {
    const double rt = rates[m] * rect_cfg.tau_seconds();
    std::string est;
    try {
      est = num(muller_correct(rates[m], rect_cfg.tau_seconds()));
    } catch (const NonPhysicalEstimate&) {
      est = "nonphysical";
      ++over;
      records.add({"rectangular-dt-equals-tau", num(p.rect_rate), std::to_string(m), num(rates[m]), num(rt)});
    }
    rect_table.add({std::to_string(m), std::to_string(rect_cfg.window_start + m * rect_cfg.bin_width),
                    std::to_string(robs.counts.counts[m]), num(rt), est});
  }
  bool raised = false;
  std::string message;
  try {
    muller_correct(robs.counts, rect_cfg);
  } catch (const NonPhysicalEstimate& e) {
    raised = true;
    message = e.what();
  }
  report.checks.push_back({"3b.nonphysical",
                           "sampling at dt = tau yields a bin with R tau >= 1 and the correction reports it",
                           raised && over > 0,
                           std::to_string(over) + " bins with R tau >= 1; " + (raised ? message : "no error raised")});

  report.tables.emplace_back("coarse.csv", std::move(table));
  report.tables.emplace_back("rectangular.csv", std::move(rect_table));
  report.tables.emplace_back("nonphysical.csv", std::move(records));
  return report;
}

// ---------------------------------------------------------------------------

Report gaussian_sweep(const GaussianSweepParams& p, std::uint64_t seed) {
  if (p.peak_rates.empty()) throw ConfigError("peak_rates", "must not be empty");
  Report report{"gaussian-sweep", {}, {}};
  const DetectorConfig cfg = DetectorConfig::from_seconds(p.tau, p.bin_width, p.num_bins, p.shots);
  const double sigma = GaussianTargetSpec::sigma_from_fwhm(p.fwhm);
  auto spec_at = [&](double peak) { return GaussianTargetSpec{peak, p.center, sigma, peak * p.background_fraction}; };

  const DetectorConfig eval_cfg = cfg.with_shots(p.eval_shots);
  const FluxCurve eval_truth = gaussian_flux(spec_at(p.eval_peak_rate), cfg);
  const Observation eval = simulate_observation(eval_truth, eval_cfg, shot_seed(seed, kEvalStream));

  struct Point {
    FluxCurve truth;
    Observation data;
    std::array<FitResult, 2> fits;
    std::array<FluxCurve, 2> flux;
    std::array<EvaluationScore, 2> score;
    std::array<double, 2> rmse{};
  };
  std::vector<Point> points(p.peak_rates.size());
  detail::parallel_for(points.size(), [&](std::size_t k) {
    Point& pt = points[k];
    pt.truth = gaussian_flux(spec_at(p.peak_rates[k]), cfg);
    const SplitObservation split = simulate_split(pt.truth, cfg, shot_seed(seed, k + 1));
    pt.data = pooled(split);
    for (int f = 0; f < 2; ++f) {
      pt.fits[f] = cross_validate(split.fit, split.validation, family_kind(f), {p.min_order, p.max_order});
      pt.flux[f] = forward_flux(pt.fits[f].model, cfg);
      pt.score[f] = evaluation_loss(pt.flux[f], eval.counts, eval.config);
      pt.rmse[f] = rmse(pt.flux[f], eval_truth, Scaling::optimal);
    }
  });

  io::Table sweep{{"peak_rate", "active_fraction", "family", "selected_order", "converged", "fit_loss",
                   "validation_loss", "evaluation_loss", "rmse", "scale", "peak_ratio", "argmax_bin"},
                  {}};
  std::vector<io::EvaluationRow> rows;
  std::vector<double> all_rmse;
  std::vector<double> all_loss;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point& pt = points[k];
    const double af = active_fraction(pt.data.active);
    for (int f = 0; f < 2; ++f) {
      const FitResult& r = pt.fits[f];
      sweep.add({num(p.peak_rates[k]), num(af), family_name(f), std::to_string(r.selected_order),
                 r.diagnostics.converged ? "1" : "0", exact(r.fit_loss), exact(r.validation_loss),
                 exact(pt.score[f].loss), num(pt.rmse[f]), num(pt.score[f].scale),
                 num(pt.flux[f].rates().maxCoeff() / pt.truth.rates().maxCoeff()),
                 std::to_string(argmax(pt.flux[f].rates()))});
      rows.push_back({"gaussian-sweep/peak=" + num(p.peak_rates[k]), af, family_name(f), pt.score[f].loss,
                      pt.rmse[f], pt.score[f].scale});
      all_rmse.push_back(pt.rmse[f]);
      all_loss.push_back(pt.score[f].loss);
    }
  }

  // Evaluation-loss dominance below the AF threshold.
  {
    std::vector<std::string> bad;
    int considered = 0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double af = active_fraction(points[k].data.active);
      if (af >= p.af_threshold) continue;
      ++considered;
      if (!(points[k].score[0].loss < points[k].score[1].loss))
        bad.push_back("AF " + num(af) + ": deadtime " + exact(points[k].score[0].loss) + " vs poisson " +
                      exact(points[k].score[1].loss));
    }
    report.checks.push_back({"4.eval_loss",
                             "deadtime-fit evaluation loss below Poisson-fit evaluation loss at every AF < " +
                                 num(p.af_threshold),
                             considered > 0 && bad.empty(),
                             std::to_string(considered) + " points checked" + (bad.empty() ? "" : "; " + join(bad))});
  }
  for (int f = 0; f < 2; ++f) {
    double lo = INFINITY;
    double hi = 0.0;
    for (const auto& pt : points) {
      lo = std::min(lo, pt.rmse[f]);
      hi = std::max(hi, pt.rmse[f]);
    }
    const double ratio = hi / lo;
    const bool ok = f == 0 ? ratio < 3.0 : ratio > 10.0;
    report.checks.push_back({f == 0 ? "4.rmse_deadtime" : "4.rmse_poisson",
                             f == 0 ? "deadtime-fit RMSE varies by less than 3x across the sweep"
                                    : "Poisson-fit RMSE grows by more than 10x from best to worst point",
                             ok, "min " + num(lo) + ", max " + num(hi) + ", ratio " + num(ratio)});
  }
  {
    const auto it = std::find_if(p.peak_rates.begin(), p.peak_rates.end(), [&](double r) {
      return std::abs(r - p.anchor_peak_rate) <= 1e-9 * p.anchor_peak_rate;
    });
    Check c{"5.af_anchor", "AF at " + num(p.anchor_peak_rate) + " Hz peak equals 0.94 +/- 0.01", false, ""};
    if (it == p.peak_rates.end()) {
      c.detail = "anchor peak rate is not part of the sweep";
    } else {
      const double af = active_fraction(points[static_cast<std::size_t>(it - p.peak_rates.begin())].data.active);
      c.passed = std::abs(af - 0.94) <= 0.01;
      c.detail = "AF " + num(af);
    }
    report.checks.push_back(std::move(c));
  }
  {
    const auto top = static_cast<std::size_t>(
        std::max_element(p.peak_rates.begin(), p.peak_rates.end()) - p.peak_rates.begin());
    const Point& pt = points[top];
    const Eigen::Index truth_peak = argmax(pt.truth.rates());
    const Eigen::Index detected_peak = argmax(pt.data.counts.as_double());
    const Eigen::Index fit_peak = argmax(pt.flux[0].rates());
    report.checks.push_back({"6.first_photon", "detected histogram peaks before the true flux at the highest rate",
                             detected_peak < truth_peak,
                             "detected argmax " + std::to_string(detected_peak) + ", true argmax " +
                                 std::to_string(truth_peak)});
    report.checks.push_back({"6.deadtime_argmax", "deadtime-fit argmax within 2 bins of the true argmax",
                             std::abs(fit_peak - truth_peak) <= 2,
                             "fit argmax " + std::to_string(fit_peak) + ", true argmax " + std::to_string(truth_peak)});

    io::Table profile{{"bin_index", "left_edge_ps", "true_rate", "counts", "active_fraction", "deadtime_fit",
                       "poisson_fit"},
                      {}};
    for (Eigen::Index m = 0; m < pt.truth.size(); ++m)
      profile.add({std::to_string(m), std::to_string(cfg.window_start + static_cast<Picoseconds>(m) * cfg.bin_width),
                   num(pt.truth.rates()[m]), std::to_string(pt.data.counts.counts[m]),
                   num(pt.data.active.fractions[m]), num(pt.flux[0].rates()[m]), num(pt.flux[1].rates()[m])});
    report.tables.emplace_back("profile_highest.csv", std::move(profile));
  }
  {
    const double rho = spearman(all_rmse, all_loss);
    report.checks.push_back({"eval.spearman", "RMSE and evaluation loss are monotonically related (Spearman > 0.9)",
                             rho > 0.9, "rho " + num(rho)});
  }

  report.tables.emplace(report.tables.begin(), "sweep.csv", std::move(sweep));
  report.tables.emplace_back("evaluation.csv", io::evaluation_table(rows));
  return report;
}

// ---------------------------------------------------------------------------

Report shot_noise_study(const ShotNoiseParams& p, std::uint64_t seed) {
  if (p.peak_rates.empty() || p.subset_shots.empty()) throw ConfigError("subset_shots", "must not be empty");
  if (p.replicates < 2) throw ConfigError("replicates", "must be >= 2");
  std::vector<std::uint64_t> sizes = p.subset_shots;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.front() < 2) throw ConfigError("subset_shots", "every subset needs at least 2 shots");
  std::vector<std::size_t> checked;
  for (const auto s : p.checked_shots) {
    const auto it = std::find(sizes.begin(), sizes.end(), s);
    if (it == sizes.end()) throw ConfigError("checked_shots", std::to_string(s) + " is not one of subset_shots");
    checked.push_back(static_cast<std::size_t>(it - sizes.begin()));
  }
  std::sort(checked.begin(), checked.end());
  if (checked.empty()) throw ConfigError("checked_shots", "must not be empty");

  Report report{"shot-noise-study", {}, {}};
  const std::uint64_t superset = sizes.back();
  const DetectorConfig cfg = DetectorConfig::from_seconds(p.tau, p.bin_width, p.num_bins, superset);
  const double sigma = GaussianTargetSpec::sigma_from_fwhm(p.fwhm);
  auto spec_at = [&](double peak) { return GaussianTargetSpec{peak, p.center, sigma, peak * p.background_fraction}; };
  const DetectorConfig eval_cfg = cfg.with_shots(p.eval_shots);
  const Observation eval =
      simulate_observation(gaussian_flux(spec_at(p.eval_peak_rate), cfg), eval_cfg, shot_seed(seed, kEvalStream));

  const std::size_t levels = p.peak_rates.size();
  const std::size_t reps = p.replicates;
  // loss[level][rep][size][family]
  std::vector<std::vector<std::vector<std::array<double, 2>>>> loss(
      levels, std::vector<std::vector<std::array<double, 2>>>(reps, std::vector<std::array<double, 2>>(sizes.size())));
  std::vector<std::vector<std::vector<std::array<int, 2>>>> order(
      levels, std::vector<std::vector<std::array<int, 2>>>(reps, std::vector<std::array<int, 2>>(sizes.size())));
  std::vector<std::vector<double>> af(levels, std::vector<double>(reps));

  detail::parallel_for(levels * reps, [&](std::size_t item) {
    const std::size_t level = item / reps;
    const std::size_t rep = item % reps;
    const FluxCurve flux = gaussian_flux(spec_at(p.peak_rates[level]), cfg);
    const auto prefixes = simulate_split_prefixes(flux, cfg, shot_seed(seed, level + 1), rep * superset, sizes);
    af[level][rep] = active_fraction(pooled(prefixes.back()).active);
    for (std::size_t s = 0; s < sizes.size(); ++s)
      for (int f = 0; f < 2; ++f) {
        const FitResult r =
            cross_validate(prefixes[s].fit, prefixes[s].validation, family_kind(f), {p.min_order, p.max_order});
        order[level][rep][s][f] = r.selected_order;
        loss[level][rep][s][f] = evaluation_loss(forward_flux(r.model, cfg), eval.counts, eval.config).loss;
      }
  });

  io::Table losses{{"peak_rate", "active_fraction", "shots", "replicate", "family", "selected_order",
                    "evaluation_loss"},
                   {}};
  io::Table summary{{"peak_rate", "active_fraction", "shots", "family", "mean_loss", "sd_loss"}, {}};
  std::vector<double> level_af(levels);
  std::vector<std::string> violations;
  for (std::size_t l = 0; l < levels; ++l) {
    level_af[l] = mean(af[l]);
    for (std::size_t s = 0; s < sizes.size(); ++s)
      for (int f = 0; f < 2; ++f) {
        std::vector<double> v;
        for (std::size_t r = 0; r < reps; ++r) {
          v.push_back(loss[l][r][s][f]);
          losses.add({num(p.peak_rates[l]), num(level_af[l]), std::to_string(sizes[s]), std::to_string(r),
                      family_name(f), std::to_string(order[l][r][s][f]), exact(loss[l][r][s][f])});
        }
        summary.add({num(p.peak_rates[l]), num(level_af[l]), std::to_string(sizes[s]), family_name(f),
                     exact(mean(v)), num(sample_sd(v))});
      }
    for (int f = 0; f < 2; ++f) {
      double previous = INFINITY;
      for (const std::size_t s : checked) {
        std::vector<double> v;
        for (std::size_t r = 0; r < reps; ++r) v.push_back(loss[l][r][s][f]);
        const double sd = sample_sd(v);
        if (!(sd < previous))
          violations.push_back(std::string(family_name(f)) + " at AF " + num(level_af[l]) + ": sd " + num(sd) +
                               " at " + std::to_string(sizes[s]) + " shots vs " + num(previous) + " before");
        previous = sd;
      }
    }
  }
  report.checks.push_back({"7.sd_monotone",
                           "replicate SD of evaluation loss decreases with shot count at every flux level, both fits",
                           violations.empty(), violations.empty() ? "all levels monotone" : join(violations)});

  // Separation at the largest checked size: paired Poisson-minus-deadtime difference.
  {
    const std::size_t s = checked.back();
    std::vector<std::size_t> by_af(levels);
    for (std::size_t l = 0; l < levels; ++l) by_af[l] = l;
    std::sort(by_af.begin(), by_af.end(), [&](std::size_t a, std::size_t b) { return level_af[a] > level_af[b]; });
    std::vector<bool> separated(levels);
    std::ostringstream detail;
    for (const std::size_t l : by_af) {
      std::vector<double> d;
      for (std::size_t r = 0; r < reps; ++r) d.push_back(loss[l][r][s][1] - loss[l][r][s][0]);
      const double se = sample_sd(d) / std::sqrt(static_cast<double>(reps));
      separated[l] = mean(d) > 2.0 * se;
      detail << "AF " << num(level_af[l], 4) << ": diff " << num(mean(d), 5) << " se " << num(se, 3)
             << (separated[l] ? " sep; " : "; ");
    }
    double separation_af = std::nan("");
    for (std::size_t i = 0; i < by_af.size(); ++i) {
      bool rest = true;
      for (std::size_t j = i; j < by_af.size(); ++j) rest = rest && separated[by_af[j]];
      if (rest) {
        separation_af = level_af[by_af[i]];
        break;
      }
    }
    const bool ok = separation_af >= p.separation_low && separation_af <= p.separation_high;
    report.checks.push_back({"7.separation",
                             "mean Poisson and deadtime evaluation losses separate (difference > 2 SE) at an AF in [" +
                                 num(p.separation_low) + ", " + num(p.separation_high) + "] at " +
                                 std::to_string(sizes[s]) + " shots",
                             ok, "separation AF " + num(separation_af) + "; " + detail.str()});
  }

  report.tables.emplace_back("losses.csv", std::move(losses));
  report.tables.emplace_back("summary.csv", std::move(summary));
  return report;
}

// ---------------------------------------------------------------------------

Report extended_target(const ExtendedTargetParams& p, std::uint64_t seed) {
  if (p.optical_densities.empty()) throw ConfigError("optical_densities", "must not be empty");
  Report report{"extended-target", {}, {}};
  const DetectorConfig cfg = DetectorConfig::from_seconds(p.tau, p.bin_width, p.num_bins, p.shots);
  StructuredPulseSpec pulse;
  pulse.peak_rate = p.peak_rate;
  pulse.start = p.pulse_start;
  pulse.duration = p.pulse_duration;
  pulse.edge_time = p.edge_time;
  pulse.ripples = p.ripples;
  pulse.background_rate = p.peak_rate * p.background_fraction;
  const FluxCurve base = structured_pulse_flux(pulse, cfg);
  dyadic_knots(cfg, p.max_depth);  // rejects grids that do not split evenly

  const DetectorConfig eval_cfg = cfg.with_shots(p.eval_shots);
  const FluxCurve eval_truth = attenuate(base, AttenuationSpec::from_od(p.eval_optical_density));
  const Observation eval = simulate_observation(eval_truth, eval_cfg, shot_seed(seed, kEvalStream));

  struct Point {
    Observation data;
    double rate_tau = 0.0;
    FitResult deadtime;
    FluxCurve deadtime_flux;
    EvaluationScore deadtime_score;
    double deadtime_rmse = 0.0;
    bool muller_ok = false;
    std::string muller_error;
    FitResult muller;
    FluxCurve muller_flux;
    EvaluationScore muller_score;
    double muller_rmse = 0.0;
  };
  std::vector<Point> points(p.optical_densities.size());
  detail::parallel_for(points.size(), [&](std::size_t k) {
    Point& pt = points[k];
    const FluxCurve flux = attenuate(base, AttenuationSpec::from_od(p.optical_densities[k]));
    const SplitObservation split = simulate_split(flux, cfg, shot_seed(seed, k + 1));
    pt.data = pooled(split);
    pt.rate_tau = std::max(max_rate_tau(split.fit), max_rate_tau(split.validation));

    pt.deadtime = trim_spline_knots(split.fit, split.validation, LossKind::deadtime, p.max_depth);
    pt.deadtime_flux = forward_flux(pt.deadtime.model, cfg);
    pt.deadtime_score = evaluation_loss(pt.deadtime_flux, eval.counts, eval.config);
    pt.deadtime_rmse = rmse(pt.deadtime_flux, eval_truth);
    try {
      const BinnedTarget fit = muller_target(split.fit);
      const BinnedTarget validation = muller_target(split.validation);
      pt.muller = trim_spline_knots(fit, validation, split.fit.config, p.max_depth);
      pt.muller_flux = forward_flux(pt.muller.model, cfg);
      pt.muller_score = evaluation_loss(pt.muller_flux, eval.counts, eval.config);
      pt.muller_rmse = rmse(pt.muller_flux, eval_truth);
      pt.muller_ok = true;
    } catch (const NonPhysicalEstimate& e) {
      pt.muller_error = e.what();
    }
  });

  io::Table fits{{"optical_density", "active_fraction", "max_rate_tau", "family", "status", "intervals", "fit_loss",
                  "validation_loss", "evaluation_loss", "rmse", "scale"},
                 {}};
  std::vector<io::EvaluationRow> rows;
  std::vector<std::string> worse;
  std::vector<std::string> compared;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point& pt = points[k];
    const double od = p.optical_densities[k];
    const double af = active_fraction(pt.data.active);
    const std::string id = "extended-target/od=" + num(od);
    fits.add({num(od), num(af), num(pt.rate_tau), "deadtime", "ok",
              std::to_string(pt.deadtime.selected_knots.size() - 1), exact(pt.deadtime.fit_loss),
              exact(pt.deadtime.validation_loss), exact(pt.deadtime_score.loss), num(pt.deadtime_rmse),
              num(pt.deadtime_score.scale)});
    rows.push_back({id, af, "deadtime", pt.deadtime_score.loss, pt.deadtime_rmse, pt.deadtime_score.scale});
    if (pt.muller_ok) {
      fits.add({num(od), num(af), num(pt.rate_tau), "muller", "ok", std::to_string(pt.muller.selected_knots.size() - 1),
                exact(pt.muller.fit_loss), exact(pt.muller.validation_loss), exact(pt.muller_score.loss),
                num(pt.muller_rmse), num(pt.muller_score.scale)});
      rows.push_back({id, af, "muller", pt.muller_score.loss, pt.muller_rmse, pt.muller_score.scale});
      compared.push_back("OD " + num(od) + ": deadtime " + exact(pt.deadtime_score.loss) + " vs muller " +
                         exact(pt.muller_score.loss));
      if (!(pt.deadtime_score.loss < pt.muller_score.loss)) worse.push_back("OD " + num(od));
    } else {
      fits.add({num(od), num(af), num(pt.rate_tau), "muller", "nonphysical", "", "", "", "", "", ""});
    }
  }
  report.checks.push_back({"8.loss",
                           "spline deadtime fit has lower evaluation loss than the Müller-corrected fit wherever "
                           "Müller is computable",
                           !compared.empty() && worse.empty(),
                           join(compared) + (worse.empty() ? "" : "; deadtime not lower at " + join(worse, ", "))});
  {
    std::vector<std::string> detail;
    bool ok = true;
    for (const double od : p.expected_muller_failures) {
      const auto it = std::find(p.optical_densities.begin(), p.optical_densities.end(), od);
      if (it == p.optical_densities.end()) {
        ok = false;
        detail.push_back("OD " + num(od) + " not simulated");
        continue;
      }
      const Point& pt = points[static_cast<std::size_t>(it - p.optical_densities.begin())];
      ok = ok && !pt.muller_ok;
      detail.push_back("OD " + num(od) + ": max R tau " + num(pt.rate_tau) +
                       (pt.muller_ok ? " (Müller computable)" : " (non-physical)"));
    }
    report.checks.push_back({"8.muller_fails", "Müller correction is non-physical at the high-flux ODs", ok,
                             join(detail)});
  }

  {
    const Point& pt = points.front();
    io::Table profile{{"bin_index", "left_edge_ps", "true_rate", "counts", "active_fraction", "deadtime_fit"}, {}};
    for (Eigen::Index m = 0; m < base.size(); ++m)
      profile.add({std::to_string(m), std::to_string(cfg.window_start + static_cast<Picoseconds>(m) * cfg.bin_width),
                   num(base.rates()[m] * AttenuationSpec::from_od(p.optical_densities.front()).transmission),
                   std::to_string(pt.data.counts.counts[m]), num(pt.data.active.fractions[m]),
                   num(pt.deadtime_flux.rates()[m])});
    report.tables.emplace_back("profile_first_od.csv", std::move(profile));
  }
  report.tables.emplace(report.tables.begin(), "fits.csv", std::move(fits));
  report.tables.emplace_back("evaluation.csv", io::evaluation_table(rows));
  return report;
}

// ---------------------------------------------------------------------------

namespace {

/// Applies optional parameter overrides from a JSON object.
class Overrides {
 public:
  explicit Overrides(const io::Json& json) : json_(json) {
    if (!json_.is_null() && !json_.is_object()) throw ConfigError("scenario", "expected an object");
  }

  template <typename T>
  void apply(const char* key, T& target) {
    if (json_.is_null() || !json_.contains(key)) return;
    used_.insert(key);
    try {
      target = json_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("scenario.") + key, "has the wrong type");
    }
  }

  void finish() const {
    if (json_.is_null()) return;
    for (const auto& item : json_.items())
      if (!used_.count(item.key())) throw ConfigError("scenario." + item.key(), "unknown parameter");
  }

 private:
  const io::Json& json_;
  std::set<std::string> used_;
};

}  // namespace

const std::vector<std::string>& names() {
  static const std::vector<std::string> list{"muller-violation", "gaussian-sweep", "shot-noise-study",
                                             "extended-target"};
  return list;
}

Report run(const std::string& name, const io::Json& overrides, std::uint64_t seed) {
  Overrides o(overrides);
  if (name == "muller-violation") {
    MullerViolationParams p;
    o.apply("tau", p.tau);
    o.apply("sigma", p.sigma);
    o.apply("center", p.center);
    o.apply("fine_bin", p.fine_bin);
    o.apply("fine_bins", p.fine_bins);
    o.apply("coarse_factor", p.coarse_factor);
    o.apply("peak_rates", p.peak_rates);
    o.apply("background_rate", p.background_rate);
    o.apply("shots", p.shots);
    o.apply("rect_rate", p.rect_rate);
    o.apply("rect_start", p.rect_start);
    o.apply("rect_stop", p.rect_stop);
    o.apply("rect_bins", p.rect_bins);
    o.apply("rect_shots", p.rect_shots);
    o.finish();
    return muller_violation(p, seed);
  }
  if (name == "gaussian-sweep") {
    GaussianSweepParams p;
    o.apply("tau", p.tau);
    o.apply("bin_width", p.bin_width);
    o.apply("num_bins", p.num_bins);
    o.apply("shots", p.shots);
    o.apply("fwhm", p.fwhm);
    o.apply("center", p.center);
    o.apply("background_fraction", p.background_fraction);
    o.apply("peak_rates", p.peak_rates);
    o.apply("eval_peak_rate", p.eval_peak_rate);
    o.apply("eval_shots", p.eval_shots);
    o.apply("min_order", p.min_order);
    o.apply("max_order", p.max_order);
    o.apply("af_threshold", p.af_threshold);
    o.apply("anchor_peak_rate", p.anchor_peak_rate);
    o.finish();
    return gaussian_sweep(p, seed);
  }
  if (name == "shot-noise-study") {
    ShotNoiseParams p;
    o.apply("tau", p.tau);
    o.apply("bin_width", p.bin_width);
    o.apply("num_bins", p.num_bins);
    o.apply("fwhm", p.fwhm);
    o.apply("center", p.center);
    o.apply("background_fraction", p.background_fraction);
    o.apply("peak_rates", p.peak_rates);
    o.apply("replicates", p.replicates);
    o.apply("subset_shots", p.subset_shots);
    o.apply("checked_shots", p.checked_shots);
    o.apply("min_order", p.min_order);
    o.apply("max_order", p.max_order);
    o.apply("eval_peak_rate", p.eval_peak_rate);
    o.apply("eval_shots", p.eval_shots);
    o.apply("separation_low", p.separation_low);
    o.apply("separation_high", p.separation_high);
    o.finish();
    return shot_noise_study(p, seed);
  }
  if (name == "extended-target") {
    ExtendedTargetParams p;
    o.apply("tau", p.tau);
    o.apply("bin_width", p.bin_width);
    o.apply("num_bins", p.num_bins);
    o.apply("shots", p.shots);
    o.apply("peak_rate", p.peak_rate);
    o.apply("pulse_start", p.pulse_start);
    o.apply("pulse_duration", p.pulse_duration);
    o.apply("edge_time", p.edge_time);
    o.apply("background_fraction", p.background_fraction);
    o.apply("optical_densities", p.optical_densities);
    o.apply("expected_muller_failures", p.expected_muller_failures);
    o.apply("eval_optical_density", p.eval_optical_density);
    o.apply("eval_shots", p.eval_shots);
    o.apply("max_depth", p.max_depth);
    o.finish();
    return extended_target(p, seed);
  }
  throw ConfigError("scenario", "unknown scenario '" + name + "'");
}

}  // namespace deadtime::scenarios
