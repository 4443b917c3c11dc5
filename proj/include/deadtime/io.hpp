#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "deadtime/core.hpp"
#include "deadtime/estimator.hpp"
#include "deadtime/simulator.hpp"

namespace deadtime::io {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run configuration

struct ConstantFluxSpec {
  double rate = 0.0;
};

using FluxSpec = std::variant<ConstantFluxSpec, GaussianTargetSpec, RectangularTargetSpec, StructuredPulseSpec>;

struct RunConfig {
  DetectorConfig detector;
  FluxSpec flux;
  std::uint64_t seed = 1;
  std::vector<double> optical_densities;  // empty: no attenuation
};

/// Parses the run configuration. ConfigError carries the dotted path of the
/// offending field; unknown keys are rejected.
RunConfig parse_run_config(const Json& json);
RunConfig load_run_config(const std::string& path);
Json load_json(const std::string& path);

FluxCurve build_flux(const FluxSpec& spec, const DetectorConfig& config);

// ---------------------------------------------------------------------------
// Timestamps and histograms

enum class Format { csv, json };
Format parse_format(const std::string& name);

/// CSV columns shot_index,timestamp_ps. Shots without detections have no rows,
/// so the shot count comes from the caller.
void write_timestamps_csv(std::ostream& out, const ShotTimestamps& data);
ShotTimestamps read_timestamps_csv(std::istream& in, std::uint64_t num_shots);
Json timestamps_to_json(const ShotTimestamps& data);
ShotTimestamps timestamps_from_json(const Json& json);

/// Reads either format, picked by file extension (.json or anything else).
ShotTimestamps load_timestamps(const std::string& path, std::uint64_t num_shots);
void save_timestamps(const std::string& path, const ShotTimestamps& data, Format format);

/// CSV columns bin_index,left_edge_ps,value.
struct HistogramFile {
  std::vector<Picoseconds> left_edges;
  std::vector<double> values;
};

void write_histogram_csv(std::ostream& out, const DetectorConfig& config, const Eigen::VectorXd& values,
                         int precision);
HistogramFile read_histogram_csv(std::istream& in);
Json histogram_to_json(const DetectorConfig& config, const Eigen::VectorXd& values, int precision);
HistogramFile histogram_from_json(const Json& json);
HistogramFile load_histogram(const std::string& path);
void save_histogram(const std::string& path, const DetectorConfig& config, const Eigen::VectorXd& values,
                    int precision, Format format);

// ---------------------------------------------------------------------------
// Fits

struct FitRecord {
  FitResult result;
  LossKind loss = LossKind::deadtime;
  DetectorConfig grid;
  double active_fraction = 1.0;
};

Json fit_to_json(const FitRecord& record);
FitRecord fit_from_json(const Json& json);

// ---------------------------------------------------------------------------
// Tables

/// Fixed-precision decimal text, identical on every run.
std::string format_number(double value, int significant = 10);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
};

void write_csv(std::ostream& out, const Table& table);
void save_csv(const std::string& path, const Table& table);

struct EvaluationRow {
  std::string scenario;
  double active_fraction = 1.0;
  std::string family;
  double loss = 0.0;
  std::optional<double> rmse;
  double scale = 0.0;
};

Table evaluation_table(const std::vector<EvaluationRow>& rows);

}  // namespace deadtime::io
