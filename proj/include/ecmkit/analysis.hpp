#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ecmkit/config.hpp"
#include "ecmkit/ecm.hpp"
#include "ecmkit/error.hpp"
#include "ecmkit/json_reader.hpp"
#include "ecmkit/probe/result.hpp"
#include "ecmkit/probe/sweep.hpp"

namespace ecmkit {

struct ScalingSeries {
  std::vector<std::pair<int, double>> points;  // (cores, bandwidth), ascending cores
};

inline void validate_series(const ScalingSeries& s) {
  if (s.points.empty()) throw precondition_error("scaling series is empty");
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto [n, b] = s.points[i];
    if (n < 1) throw precondition_error("core counts must be >= 1");
    if (!(b > 0)) throw precondition_error("bandwidth must be > 0 at " + std::to_string(n) + " cores");
    if (i > 0 && n <= s.points[i - 1].first) throw precondition_error("core counts must be strictly increasing");
  }
  if (s.points.front().first != 1) throw precondition_error("scaling series needs a point at 1 core");
}

inline double parallel_efficiency(const ScalingSeries& s) {
  validate_series(s);
  const auto [n, b] = s.points.back();
  return b / (n * s.points.front().second);
}

inline int saturation_point(const ScalingSeries& s, double epsilon = 0.02) {
  validate_series(s);
  if (!(epsilon > 0 && epsilon <= 0.2)) throw precondition_error("epsilon must lie in (0, 0.2]");
  double peak = 0.0;
  for (const auto& p : s.points) peak = std::max(peak, p.second);
  for (const auto& [n, b] : s.points) {
    if (b >= (1.0 - epsilon) * peak) return n;
  }
  return s.points.back().first;
}

struct EfficiencyPoint {
  int cores = 1;
  double bandwidth = 0.0;
  double efficiency = 0.0;
};

struct EfficiencyReport {
  double parallel_efficiency = 0.0;
  int saturation_core_count = 1;
  std::vector<EfficiencyPoint> points;
  bool superlinear = false;  // some point above 1.0, usually a measurement artifact
};

inline EfficiencyReport efficiency_report(const ScalingSeries& s, double epsilon = 0.02) {
  validate_series(s);
  EfficiencyReport r;
  r.parallel_efficiency = parallel_efficiency(s);
  r.saturation_core_count = saturation_point(s, epsilon);
  const double b1 = s.points.front().second;
  for (const auto& [n, b] : s.points) {
    const double e = b / (n * b1);
    if (e > 1.5) throw invariant_error("efficiency", "above 1.5 at " + std::to_string(n) + " cores");
    r.superlinear = r.superlinear || e > 1.0 + 1e-12;
    r.points.push_back({n, b, e});
  }
  return r;
}

struct OperatingPointTag {
  std::optional<double> core_hz;
  std::optional<double> uncore_hz;

  bool operator==(const OperatingPointTag&) const = default;
};

struct EnergyReport {
  double performance = 0.0;
  std::string unit;
  double energy_joules = 0.0;
  double duration_s = 0.0;
  double package_power_watts = 0.0;
  double efficiency = 0.0;  // performance per watt
  OperatingPointTag operating_point;

  bool operator==(const EnergyReport&) const = default;
};

inline EnergyReport energy_metrics(double performance, std::string unit, double energy_joules, double duration_s,
                                   OperatingPointTag op = {}) {
  if (!(duration_s > 0)) throw precondition_error("duration must be positive");
  if (!(energy_joules > 0)) throw precondition_error("energy must be positive");
  EnergyReport r;
  r.performance = performance;
  r.unit = std::move(unit);
  r.energy_joules = energy_joules;
  r.duration_s = duration_s;
  r.package_power_watts = energy_joules / duration_s;
  r.efficiency = performance / r.package_power_watts;
  r.operating_point = op;
  return r;
}

// ---------------------------------------------------------------------------
// Measurement versus prediction

struct Quantity {
  double value = 0.0;
  std::string unit;
  std::optional<double> frequency_hz;  // core clock that relates per-cycle and per-second units
};

// Converts between B/cy and GB/s when a clock is known; other units must match exactly.
inline double convert(const Quantity& q, const std::string& target, std::optional<double> other_frequency) {
  if (q.unit == target) return q.value;
  const auto f = q.frequency_hz ? q.frequency_hz : other_frequency;
  if (q.unit == "B/cy" && target == "GB/s" && f) return q.value * *f * 1e-9;
  if (q.unit == "GB/s" && target == "B/cy" && f) return q.value * 1e9 / *f;
  throw Error(ErrorKind::unit_mismatch, "cannot compare " + q.unit + " with " + target +
                                           (q.unit == "B/cy" || q.unit == "GB/s" ? " without a frequency" : ""));
}

struct Deviation {
  double measured = 0.0;
  double predicted = 0.0;
  std::string unit;
  double absolute = 0.0;  // measured - predicted
  double relative = 0.0;  // (measured - predicted) / predicted
  double tolerance = 0.0;
  bool pass = true;

  bool operator==(const Deviation&) const = default;
};

inline Deviation compare_quantities(const Quantity& measured, const Quantity& predicted, double tolerance) {
  if (tolerance < 0) throw precondition_error("tolerance must be >= 0");
  Deviation d;
  d.unit = measured.unit;
  d.measured = measured.value;
  d.predicted = convert(predicted, measured.unit, measured.frequency_hz);
  d.absolute = d.measured - d.predicted;
  if (d.predicted == 0) throw precondition_error("predicted value is zero");
  d.relative = d.absolute / d.predicted;
  d.tolerance = tolerance;
  d.pass = std::abs(d.relative) <= tolerance + 1e-12;
  return d;
}

inline Deviation compare_prediction(const probe::ProbeResult& probe, const EcmPrediction& prediction,
                                    double tolerance) {
  Quantity m{probe.value, probe.unit, probe.environment.core_freq_hz};
  Quantity p;
  if (probe.unit == "B/cy" || probe.unit == "GB/s") {
    p = Quantity{prediction.predicted_bandwidth_bytes_per_cycle, "B/cy", prediction.frequency_hz};
  } else if (probe.unit == "cy/it") {
    p = Quantity{prediction.composed_cycles_per_iteration, "cy/it", std::nullopt};
  } else {
    throw Error(ErrorKind::unit_mismatch, "a prediction has no quantity in " + probe.unit);
  }
  return compare_quantities(m, p, tolerance);
}

// Rebuilds the ECM prediction for a bandwidth or l2_bandwidth probe from its
// recorded parameters and environment, then compares. Multi-core bandwidth is
// compared against n times the single-core prediction, capped at memory bandwidth
// for in-memory working sets.
struct CompareOptions {
  OverlapPolicy policy = OverlapPolicy::none;
  bool apply_derate = true;
  double tolerance = 0.05;
};

inline ChipConfig config_from_environment(const MachineDescription& md, const probe::Environment& env) {
  std::optional<SnoopMode> mode;
  if (env.snoop_mode) mode = parse_snoop_mode(*env.snoop_mode);
  return resolve_config(md, mode, env.cod);
}

inline Deviation compare_probe(const probe::ProbeResult& r, const MachineDescription& md, const CompareOptions& o = {}) {
  if (r.probe_name != "bandwidth" && r.probe_name != "l2_bandwidth") {
    throw Error(ErrorKind::unit_mismatch, "no ECM quantity corresponds to a " + r.probe_name + " probe");
  }
  ObjectReader p(r.parameters, "probe parameters", true);
  const auto width_name = r.parameters.contains("isa_width") ? p.string("isa_width") : std::string("avx");
  const auto width = parse_width(width_name);
  if (!width) throw schema_error("unknown isa_width '" + width_name + "'");
  const auto k = builtin_kernel_for(md, p.string("kernel"), *width);
  const auto ws = static_cast<std::uint64_t>(p.number("working_set_bytes"));
  const int cores = r.parameters.contains("cores") ? static_cast<int>(p.number("cores")) : 1;
  PredictOptions po;
  po.policy = o.policy;
  po.apply_derate = o.apply_derate;
  po.config = config_from_environment(md, r.environment);
  po.frequency_hz = r.environment.core_freq_hz;
  po.cores = cores;
  auto e = predict(k, md, ws, po);
  if (r.probe_name == "l2_bandwidth") {
    const auto& l1l2 = e.transfers.links.front();
    return compare_quantities({r.value, r.unit, r.environment.core_freq_hz},
                              {l1l2.bandwidth_bytes_per_cycle, "B/cy", e.frequency_hz}, o.tolerance);
  }
  double bw = cores * e.predicted_bandwidth_bytes_per_cycle;
  if (is_memory_bound_prediction(e)) {
    const double to_data = e.data_bytes_per_iteration / e.transfers.links.back().bytes;
    bw = std::min(bw, e.transfers.memory_bandwidth_bytes_per_s * to_data / e.frequency_hz);
  }
  return compare_quantities({r.value, r.unit, r.environment.core_freq_hz}, {bw, "B/cy", e.frequency_hz}, o.tolerance);
}

// ---------------------------------------------------------------------------
// Report serialization

inline json efficiency_to_json(const EfficiencyReport& r) {
  json pts = json::array();
  for (const auto& p : r.points) pts.push_back({{"cores", p.cores}, {"bandwidth", p.bandwidth}, {"efficiency", p.efficiency}});
  return json{{"type", "efficiency"},
              {"parallel_efficiency", r.parallel_efficiency},
              {"saturation_core_count", r.saturation_core_count},
              {"superlinear", r.superlinear},
              {"points", std::move(pts)}};
}

inline json energy_to_json(const EnergyReport& r) {
  return json{{"type", "energy"},
              {"performance", r.performance},
              {"unit", r.unit},
              {"energy_joules", r.energy_joules},
              {"duration_s", r.duration_s},
              {"package_power_watts", r.package_power_watts},
              {"efficiency", r.efficiency},
              {"core_hz", probe::optional_hz(r.operating_point.core_hz)},
              {"uncore_hz", probe::optional_hz(r.operating_point.uncore_hz)}};
}

inline EnergyReport energy_from_json(const json& j) {
  ObjectReader r(j, "energy", true);
  EnergyReport e;
  e.performance = r.number("performance");
  e.unit = r.string("unit");
  e.energy_joules = r.number("energy_joules");
  e.duration_s = r.number("duration_s");
  e.package_power_watts = r.number("package_power_watts");
  e.efficiency = r.number("efficiency");
  e.operating_point.core_hz = r.optional_number("core_hz");
  e.operating_point.uncore_hz = r.optional_number("uncore_hz");
  return e;
}

inline json deviation_to_json(const Deviation& d) {
  return json{{"type", "compare"},     {"measured", d.measured},   {"predicted", d.predicted},
              {"unit", d.unit},        {"absolute", d.absolute},   {"relative", d.relative},
              {"tolerance", d.tolerance}, {"pass", d.pass}};
}

inline Deviation deviation_from_json(const json& j) {
  ObjectReader r(j, "compare", true);
  Deviation d;
  d.measured = r.number("measured");
  d.predicted = r.number("predicted");
  d.unit = r.string("unit");
  d.absolute = r.number("absolute");
  d.relative = r.number("relative");
  d.tolerance = r.number("tolerance");
  d.pass = r.boolean("pass");
  return d;
}

inline const char* energy_csv_header() {
  return "performance,unit,energy_joules,duration_s,package_power_watts,efficiency,core_hz,uncore_hz";
}

inline std::string energy_to_csv_row(const EnergyReport& r) {
  using probe::format_double;
  std::ostringstream os;
  os << format_double(r.performance) << ',' << probe::csv_escape(r.unit) << ',' << format_double(r.energy_joules) << ','
     << format_double(r.duration_s) << ',' << format_double(r.package_power_watts) << ','
     << format_double(r.efficiency) << ',' << probe::opt_cell(r.operating_point.core_hz) << ','
     << probe::opt_cell(r.operating_point.uncore_hz);
  return os.str();
}

inline EnergyReport energy_from_csv_row(const std::string& line) {
  const auto c = probe::csv_split(line);
  if (c.size() != 8) throw schema_error("energy CSV row needs 8 cells");
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  EnergyReport r;
  r.performance = std::stod(c[0]);
  r.unit = c[1];
  r.energy_joules = std::stod(c[2]);
  r.duration_s = std::stod(c[3]);
  r.package_power_watts = std::stod(c[4]);
  r.efficiency = std::stod(c[5]);
  r.operating_point = {opt(c[6]), opt(c[7])};
  return r;
}

inline const char* compare_csv_header() { return "measured,predicted,unit,absolute,relative,tolerance,pass"; }

inline std::string deviation_to_csv_row(const Deviation& d) {
  using probe::format_double;
  std::ostringstream os;
  os << format_double(d.measured) << ',' << format_double(d.predicted) << ',' << probe::csv_escape(d.unit) << ','
     << format_double(d.absolute) << ',' << format_double(d.relative) << ',' << format_double(d.tolerance) << ','
     << (d.pass ? "true" : "false");
  return os.str();
}

inline Deviation deviation_from_csv_row(const std::string& line) {
  const auto c = probe::csv_split(line);
  if (c.size() != 7) throw schema_error("compare CSV row needs 7 cells");
  return Deviation{std::stod(c[0]), std::stod(c[1]), c[2], std::stod(c[3]), std::stod(c[4]), std::stod(c[5]),
                   c[6] == "true"};
}

inline const char* efficiency_csv_header() { return "cores,bandwidth,efficiency"; }

inline std::string efficiency_to_csv(const EfficiencyReport& r) {
  std::ostringstream os;
  os << efficiency_csv_header() << '\n';
  for (const auto& p : r.points) {
    os << p.cores << ',' << probe::format_double(p.bandwidth) << ',' << probe::format_double(p.efficiency) << '\n';
  }
  return os.str();
}

}  // namespace ecmkit
