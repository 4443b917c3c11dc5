#include "deadtime/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace deadtime::io {

namespace {

/// Field-by-field reader over one JSON object that remembers which keys were
/// consumed so leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const Json& json, std::string path) : json_(json), path_(std::move(path)) {
    if (!json_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return json_.contains(key); }

  const Json& raw(const std::string& key) {
    if (!json_.contains(key)) throw ConfigError(field(key), "missing");
    used_.insert(key);
    return json_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(field(key), "must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::uint64_t integer(const std::string& key) {
    const Json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) throw ConfigError(field(key), "must be non-negative");
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (x >= 0.0 && x == std::floor(x) && x < 1.8e19) return static_cast<std::uint64_t>(x);
    }
    throw ConfigError(field(key), "expected a non-negative integer");
  }

  std::string text(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& item : json_.items())
      if (!used_.count(item.key())) throw ConfigError(field(item.key()), "unknown key");
  }

 private:
  const Json& json_;
  std::string path_;
  std::set<std::string> used_;
};

DetectorConfig parse_detector(const Json& json) {
  ObjectReader r(json, "detector");
  const double tau = r.number("tau");
  const double bin_width = r.number("bin_width");
  const std::uint64_t bins = r.integer("num_bins");
  const std::uint64_t shots = r.integer("num_shots");
  const double start = r.number("window_start", 0.0);
  r.finish();
  return DetectorConfig::from_seconds(tau, bin_width, static_cast<std::size_t>(bins), shots, start);
}

FluxSpec parse_flux(const Json& json) {
  ObjectReader r(json, "flux");
  const std::string shape = r.text("shape");
  FluxSpec out;
  if (shape == "constant") {
    ConstantFluxSpec spec{r.number("rate")};
    if (spec.rate < 0.0) throw ConfigError("flux.rate", "must be >= 0");
    out = spec;
  } else if (shape == "gaussian") {
    GaussianTargetSpec spec;
    spec.peak_rate = r.number("peak_rate");
    spec.center = r.number("center");
    if (r.has("sigma") == r.has("fwhm")) throw ConfigError("flux.sigma", "give exactly one of sigma or fwhm");
    spec.sigma = r.has("sigma") ? r.number("sigma") : GaussianTargetSpec::sigma_from_fwhm(r.number("fwhm"));
    spec.background_rate = r.number("background_rate", 0.0);
    spec.validate();
    out = spec;
  } else if (shape == "rectangular") {
    RectangularTargetSpec spec;
    spec.rate = r.number("peak_rate");
    spec.start = r.number("start");
    spec.stop = r.number("stop");
    spec.background_rate = r.number("background_rate", 0.0);
    spec.validate();
    out = spec;
  } else if (shape == "structured") {
    StructuredPulseSpec spec;
    spec.peak_rate = r.number("peak_rate");
    spec.start = r.number("start");
    spec.duration = r.number("duration");
    spec.edge_time = r.number("edge_time");
    spec.background_rate = r.number("background_rate", 0.0);
    if (r.has("ripples")) {
      const Json& list = r.raw("ripples");
      if (!list.is_array()) throw ConfigError("flux.ripples", "expected an array");
      for (std::size_t k = 0; k < list.size(); ++k) {
        ObjectReader rr(list[k], "flux.ripples[" + std::to_string(k) + "]");
        spec.ripples.push_back({rr.number("amplitude"), rr.number("period"), rr.number("phase", 0.0)});
        rr.finish();
      }
    }
    spec.validate();
    out = spec;
  } else {
    throw ConfigError("flux.shape", "expected constant, gaussian, rectangular or structured; got '" + shape + "'");
  }
  r.finish();
  return out;
}

template <typename T>
T parse_number_text(const std::string& s, const std::string& what) {
  std::istringstream in(s);
  T value{};
  in >> value;
  if (in.fail() || !in.eof()) throw InputError("malformed " + what + " '" + s + "'");
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void expect_header(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty file, expected header '" + header + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw InputError("expected header '" + header + "', got '" + line + "'");
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

}  // namespace

RunConfig parse_run_config(const Json& json) {
  ObjectReader r(json, "");
  RunConfig config;
  config.detector = parse_detector(r.raw("detector"));
  config.flux = parse_flux(r.raw("flux"));
  if (r.has("seed")) config.seed = r.integer("seed");
  if (r.has("od")) {
    const Json& list = r.raw("od");
    if (!list.is_array()) throw ConfigError("od", "expected an array of optical densities");
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string field = "od[" + std::to_string(k) + "]";
      if (!list[k].is_number()) throw ConfigError(field, "expected a number");
      const double od = list[k].get<double>();
      if (!(od >= 0.0) || !std::isfinite(od)) throw ConfigError(field, "must be finite and >= 0");
      config.optical_densities.push_back(od);
    }
  }
  r.finish();
  return config;
}

Json load_json(const std::string& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(load_json(path)); }

FluxCurve build_flux(const FluxSpec& spec, const DetectorConfig& config) {
  struct Visitor {
    const DetectorConfig& config;
    FluxCurve operator()(const ConstantFluxSpec& s) const { return constant_flux(s.rate, config); }
    FluxCurve operator()(const GaussianTargetSpec& s) const { return gaussian_flux(s, config); }
    FluxCurve operator()(const RectangularTargetSpec& s) const { return rectangular_flux(s, config); }
    FluxCurve operator()(const StructuredPulseSpec& s) const { return structured_pulse_flux(s, config); }
  };
  return std::visit(Visitor{config}, spec);
}

Format parse_format(const std::string& name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  throw ConfigError("format", "expected 'csv' or 'json', got '" + name + "'");
}

// ---------------------------------------------------------------------------

void write_timestamps_csv(std::ostream& out, const ShotTimestamps& data) {
  out << "shot_index,timestamp_ps\n";
  for (std::size_t i = 0; i < data.num_shots(); ++i)
    for (const Picoseconds t : data.shot(i)) out << i << ',' << t << '\n';
}

ShotTimestamps read_timestamps_csv(std::istream& in, std::uint64_t num_shots) {
  expect_header(in, "shot_index,timestamp_ps");
  std::vector<std::vector<Picoseconds>> shots(num_shots);
  std::string line;
  std::size_t line_no = 1;
  std::uint64_t last_shot = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw InputError("line " + std::to_string(line_no) + ": expected two columns");
    const auto shot = parse_number_text<std::uint64_t>(cells[0], "shot_index");
    const auto t = parse_number_text<Picoseconds>(cells[1], "timestamp_ps");
    if (shot >= num_shots)
      throw InputError("line " + std::to_string(line_no) + ": shot_index " + std::to_string(shot) +
                       " >= num_shots " + std::to_string(num_shots));
    if (shot < last_shot) throw InputError("line " + std::to_string(line_no) + ": shots must be grouped in order");
    last_shot = shot;
    shots[shot].push_back(t);
  }
  return ShotTimestamps(shots);
}

Json timestamps_to_json(const ShotTimestamps& data) {
  Json json;
  json["num_shots"] = data.num_shots();
  Json shots = Json::array();
  Json times = Json::array();
  for (std::size_t i = 0; i < data.num_shots(); ++i)
    for (const Picoseconds t : data.shot(i)) {
      shots.push_back(i);
      times.push_back(t);
    }
  json["shot_index"] = std::move(shots);
  json["timestamp_ps"] = std::move(times);
  return json;
}

ShotTimestamps timestamps_from_json(const Json& json) {
  try {
    const auto n = json.at("num_shots").get<std::uint64_t>();
    const auto shots = json.at("shot_index").get<std::vector<std::uint64_t>>();
    const auto times = json.at("timestamp_ps").get<std::vector<Picoseconds>>();
    if (shots.size() != times.size()) throw InputError("shot_index and timestamp_ps differ in length");
    std::vector<std::vector<Picoseconds>> out(n);
    for (std::size_t k = 0; k < shots.size(); ++k) {
      if (shots[k] >= n) throw InputError("shot_index " + std::to_string(shots[k]) + " >= num_shots");
      if (k > 0 && shots[k] < shots[k - 1]) throw InputError("shots must be grouped in order");
      out[shots[k]].push_back(times[k]);
    }
    return ShotTimestamps(out);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed timestamp JSON: ") + e.what());
  }
}

ShotTimestamps load_timestamps(const std::string& path, std::uint64_t num_shots) {
  std::ifstream in = open_in(path);
  if (ends_with(path, ".json")) {
    try {
      return timestamps_from_json(Json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(path + ": invalid JSON: " + e.what());
    }
  }
  return read_timestamps_csv(in, num_shots);
}

void save_timestamps(const std::string& path, const ShotTimestamps& data, Format format) {
  std::ofstream out = open_out(path);
  if (format == Format::json)
    out << timestamps_to_json(data).dump() << '\n';
  else
    write_timestamps_csv(out, data);
}

// ---------------------------------------------------------------------------

void write_histogram_csv(std::ostream& out, const DetectorConfig& config, const Eigen::VectorXd& values,
                         int precision) {
  if (static_cast<std::size_t>(values.size()) != config.num_bins)
    throw InputError("histogram length does not match config");
  out << "bin_index,left_edge_ps,value\n";
  for (std::size_t m = 0; m < config.num_bins; ++m)
    out << m << ',' << config.window_start + m * config.bin_width << ','
        << format_fixed(values[static_cast<Eigen::Index>(m)], precision) << '\n';
}

HistogramFile read_histogram_csv(std::istream& in) {
  expect_header(in, "bin_index,left_edge_ps,value");
  HistogramFile out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw InputError("line " + std::to_string(line_no) + ": expected three columns");
    const auto index = parse_number_text<std::size_t>(cells[0], "bin_index");
    if (index != out.values.size()) throw InputError("line " + std::to_string(line_no) + ": bins out of order");
    out.left_edges.push_back(parse_number_text<Picoseconds>(cells[1], "left_edge_ps"));
    out.values.push_back(parse_number_text<double>(cells[2], "value"));
  }
  return out;
}

Json histogram_to_json(const DetectorConfig& config, const Eigen::VectorXd& values, int precision) {
  if (static_cast<std::size_t>(values.size()) != config.num_bins)
    throw InputError("histogram length does not match config");
  Json json;
  Json index = Json::array();
  Json edges = Json::array();
  Json value = Json::array();
  for (std::size_t m = 0; m < config.num_bins; ++m) {
    index.push_back(m);
    edges.push_back(config.window_start + m * config.bin_width);
    // Round through text so the JSON carries the same digits as the CSV.
    value.push_back(std::stod(format_fixed(values[static_cast<Eigen::Index>(m)], precision)));
  }
  json["bin_index"] = std::move(index);
  json["left_edge_ps"] = std::move(edges);
  json["value"] = std::move(value);
  return json;
}

HistogramFile histogram_from_json(const Json& json) {
  try {
    HistogramFile out;
    out.left_edges = json.at("left_edge_ps").get<std::vector<Picoseconds>>();
    out.values = json.at("value").get<std::vector<double>>();
    if (out.left_edges.size() != out.values.size()) throw InputError("left_edge_ps and value differ in length");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed histogram JSON: ") + e.what());
  }
}

HistogramFile load_histogram(const std::string& path) {
  std::ifstream in = open_in(path);
  if (ends_with(path, ".json")) return histogram_from_json(Json::parse(in));
  return read_histogram_csv(in);
}

void save_histogram(const std::string& path, const DetectorConfig& config, const Eigen::VectorXd& values,
                    int precision, Format format) {
  std::ofstream out = open_out(path);
  if (format == Format::json)
    out << histogram_to_json(config, values, precision).dump() << '\n';
  else
    write_histogram_csv(out, config, values, precision);
}

// ---------------------------------------------------------------------------

namespace {

Json vector_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from(const Json& json) {
  const auto v = json.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Json fit_to_json(const FitRecord& record) {
  const FitResult& r = record.result;
  const DetectorConfig& g = record.grid;
  Json json;
  if (const auto* cheb = std::get_if<ChebyshevModel>(&r.model)) {
    json["basis"] = "chebyshev";
    json["order"] = cheb->order();
    json["coefficients"] = vector_json(cheb->coefficients);
    json["background"] = cheb->background;
    json["normalization"] = {{"window_start_ps", g.window_start},
                             {"window_end_ps", g.window_end()},
                             {"maps_to", {-1.0, 1.0}},
                             {"sample", "bin_left_edge"}};
  } else {
    const auto& spline = std::get<SplineModel>(r.model);
    json["basis"] = "spline";
    json["knots_ps"] = spline.knots;
    json["coefficients"] = vector_json(spline.values);
    json["background"] = spline.background;
    json["normalization"] = {{"window_start_ps", g.window_start},
                             {"knots_relative_to", "window_start"},
                             {"control_points", "interval_midpoints"},
                             {"sample", "bin_left_edge"}};
  }
  json["loss"] = to_string(record.loss);
  json["fit_loss"] = r.fit_loss;
  json["validation_loss"] = r.validation_loss;
  json["grid"] = {{"bin_width_ps", g.bin_width},
                  {"num_bins", g.num_bins},
                  {"window_start_ps", g.window_start},
                  {"tau_ps", g.tau},
                  {"num_shots", g.num_shots}};
  json["active_fraction"] = record.active_fraction;
  json["diagnostics"] = {{"iterations", r.diagnostics.iterations},
                         {"evaluations", r.diagnostics.evaluations},
                         {"converged", r.diagnostics.converged},
                         {"status", r.diagnostics.status}};
  Json candidates = Json::array();
  for (const auto& c : r.candidates) {
    Json item;
    if (c.order >= 0)
      item["order"] = c.order;
    else
      item["intervals"] = c.intervals;
    item["fit_loss"] = c.fit_loss;
    item["validation_loss"] = c.validation_loss;
    item["converged"] = c.converged;
    item["accepted"] = c.accepted;
    candidates.push_back(std::move(item));
  }
  json["candidates"] = std::move(candidates);
  return json;
}

FitRecord fit_from_json(const Json& json) {
  try {
    FitRecord record;
    const Json& grid = json.at("grid");
    record.grid.bin_width = grid.at("bin_width_ps").get<Picoseconds>();
    record.grid.num_bins = grid.at("num_bins").get<std::size_t>();
    record.grid.window_start = grid.at("window_start_ps").get<Picoseconds>();
    record.grid.tau = grid.value("tau_ps", Picoseconds{0});
    record.grid.num_shots = grid.value("num_shots", std::uint64_t{1});
    record.grid.validate();
    record.loss = parse_loss_kind(json.at("loss").get<std::string>());
    record.active_fraction = json.value("active_fraction", 1.0);

    FitResult& r = record.result;
    const std::string basis = json.at("basis").get<std::string>();
    const double background = json.at("background").get<double>();
    if (basis == "chebyshev") {
      r.model = ChebyshevModel{vector_from(json.at("coefficients")), background};
      r.selected_order = json.at("order").get<int>();
      if (r.selected_order != std::get<ChebyshevModel>(r.model).order())
        throw InputError("order does not match the number of coefficients");
    } else if (basis == "spline") {
      SplineModel s{json.at("knots_ps").get<std::vector<Picoseconds>>(), vector_from(json.at("coefficients")),
                    background};
      if (s.values.size() + 1 != static_cast<Eigen::Index>(s.knots.size()))
        throw InputError("spline needs one coefficient per knot interval");
      r.selected_knots = s.knots;
      r.model = std::move(s);
    } else {
      throw InputError("unknown basis '" + basis + "'");
    }
    r.fit_loss = json.value("fit_loss", 0.0);
    r.validation_loss = json.value("validation_loss", 0.0);
    if (json.contains("diagnostics")) {
      const Json& d = json.at("diagnostics");
      r.diagnostics.iterations = d.value("iterations", 0);
      r.diagnostics.evaluations = d.value("evaluations", 0);
      r.diagnostics.converged = d.value("converged", false);
      r.diagnostics.status = d.value("status", std::string());
    }
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fit JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::string format_number(double value, int significant) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant, value);
  return buf;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw InputError("table row has the wrong number of cells");
  rows.push_back(std::move(row));
}

void write_csv(std::ostream& out, const Table& table) {
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void save_csv(const std::string& path, const Table& table) {
  std::ofstream out = open_out(path);
  write_csv(out, table);
}

Table evaluation_table(const std::vector<EvaluationRow>& rows) {
  Table table{{"scenario", "active_fraction", "family", "evaluation_loss", "rmse", "scale"}, {}};
  for (const auto& r : rows)
    table.add({r.scenario, format_number(r.active_fraction), r.family, format_number(r.loss, 15),
               r.rmse ? format_number(*r.rmse) : "", format_number(r.scale)});
  return table;
}

}  // namespace deadtime::io
