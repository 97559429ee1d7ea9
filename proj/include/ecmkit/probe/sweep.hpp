#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/json_reader.hpp"
#include "ecmkit/kernel.hpp"
#include "ecmkit/machine.hpp"
#include "ecmkit/probe/result.hpp"

namespace ecmkit::probe {

// Steady-state demands of a workload per loop iteration.
struct WorkloadProfile {
  std::string name;
  WorkloadClass workload_class = WorkloadClass::avx;
  double core_cycles_per_iteration = 1.0;
  double uncore_bytes_per_iteration = 0.0;  // traffic limited by the uncore clock
  double memory_bytes_per_iteration = 0.0;  // traffic limited by DRAM
  std::string memory_pattern = "load";
  double work_per_iteration = 1.0;
  std::string unit = "GFLOP/s";  // unit of work_per_iteration * 1e-9 per second
};

inline const std::vector<std::string>& builtin_profile_names() {
  static const std::vector<std::string> names{"linpack_like", "hpcg_like"};
  return names;
}

// Two stand-ins for the compute-bound and memory-bound codes of the frequency
// study. linpack_like keeps every core's FMA units busy and leans lightly on the
// uncore; hpcg_like streams 12 bytes from memory for every two flops.
inline WorkloadProfile builtin_profile(std::string_view name) {
  if (name == "linpack_like") {
    return WorkloadProfile{"linpack_like", WorkloadClass::avx, 1.0, 1.2548, 0.05, "load", 14.4, "GFLOP/s"};
  }
  if (name == "hpcg_like") {
    return WorkloadProfile{"hpcg_like", WorkloadClass::avx, 1.0, 12.0, 12.0, "load", 2.0, "GFLOP/s"};
  }
  throw Error(ErrorKind::not_found, "unknown workload profile '" + std::string(name) + "'");
}

struct Workload {
  enum class Kind { kernel, profile, command };
  Kind kind = Kind::kernel;
  KernelDescriptor kernel;
  std::uint64_t working_set_bytes = 0;
  WorkloadProfile profile;
  std::string command;

  std::string name() const {
    switch (kind) {
      case Kind::kernel: return kernel.name;
      case Kind::profile: return profile.name;
      case Kind::command: return command;
    }
    return {};
  }
};

// nullopt on a frequency axis means "let the platform decide": turbo for the core,
// automatic scaling for the uncore.
struct SweepGrid {
  std::vector<std::optional<double>> core_freqs_hz{std::nullopt};
  std::vector<std::optional<double>> uncore_freqs_hz{std::nullopt};
  std::vector<int> cores{1};

  std::size_t size() const { return core_freqs_hz.size() * uncore_freqs_hz.size() * cores.size(); }
  bool operator==(const SweepGrid&) const = default;
};

struct SweepPoint {
  std::optional<double> requested_core_hz;
  std::optional<double> requested_uncore_hz;
  int cores = 1;
  double performance = 0.0;
  std::string unit;
  std::optional<double> package_energy_joules;
  double duration_s = 0.0;
  double observed_core_freq_hz = 0.0;
  double observed_uncore_freq_hz = 0.0;

  bool operator==(const SweepPoint&) const = default;
};

struct SweepResult {
  std::string workload;
  SweepGrid grid;
  std::vector<SweepPoint> points;  // core freq outermost, then uncore, then cores
  Environment environment;

  bool operator==(const SweepResult&) const = default;
};

// ---------------------------------------------------------------------------
// Package power model

struct OperatingPoint {
  double core_hz = 0.0;
  double uncore_hz = 0.0;
  double package_watts = 0.0;
  bool power_limited = false;
};

inline bool has_uncore_domain(const MachineDescription& md) {
  return md.frequency.uncore_min_hz.has_value() && md.frequency.uncore_max_hz.has_value();
}

// Core clock attained under the package power budget. Earlier chips clock the
// uncore with the cores, so there both frequencies move together.
inline OperatingPoint operating_point(const MachineDescription& md, WorkloadClass cls, int cores,
                                      std::optional<double> core_request, std::optional<double> uncore_request) {
  if (cores < 1 || cores > md.cores) {
    throw precondition_error("cores must lie in [1, " + std::to_string(md.cores) + "] on " + md.name);
  }
  const auto& f = md.frequency;
  const bool separate_uncore = has_uncore_domain(md);
  if (uncore_request) {
    if (!separate_uncore) throw capability_error(md.name + " has no separate uncore clock to set");
    if (*uncore_request < *f.uncore_min_hz - 1.0 || *uncore_request > *f.uncore_max_hz + 1.0) {
      throw precondition_error("uncore frequency outside the platform range");
    }
  }
  const double target = core_request.value_or(effective_frequency(md, cls, FrequencyMode::max_all_core));
  const double floor = std::min(target, effective_frequency(md, cls, FrequencyMode::guaranteed));
  OperatingPoint op;
  op.uncore_hz = separate_uncore ? uncore_request.value_or(*f.uncore_max_hz) : target;
  op.core_hz = target;
  if (!f.power_model) {
    op.package_watts = f.tdp_watts;
    if (!separate_uncore) op.uncore_hz = op.core_hz;
    return op;
  }
  const auto& pm = *f.power_model;
  auto it = pm.core_watts_per_ghz.find(std::string(to_string(cls)));
  if (it == pm.core_watts_per_ghz.end()) {
    throw precondition_error(md.name + " power model has no coefficient for class " + std::string(to_string(cls)));
  }
  const double a = it->second;
  const double b = pm.uncore_watts_per_ghz;
  const double budget = f.tdp_watts - pm.static_watts;
  const double limit_ghz =
      separate_uncore ? (budget - b * op.uncore_hz * 1e-9) / (a * cores) : budget / (a * cores + b);
  const double limit_hz = limit_ghz * 1e9;
  if (limit_hz < target) {
    op.power_limited = true;
    op.core_hz = std::max(limit_hz, floor);
  }
  if (!separate_uncore) op.uncore_hz = op.core_hz;
  const double watts = pm.static_watts + a * op.core_hz * 1e-9 * cores + b * op.uncore_hz * 1e-9;
  op.package_watts = std::min(watts, f.tdp_watts);
  return op;
}

// ---------------------------------------------------------------------------
// Serialization

inline json optional_hz(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json sweep_to_json(const SweepResult& s) {
  json axes{{"cores", s.grid.cores}};
  axes["core_freq_hz"] = json::array();
  for (const auto& v : s.grid.core_freqs_hz) axes["core_freq_hz"].push_back(optional_hz(v));
  axes["uncore_freq_hz"] = json::array();
  for (const auto& v : s.grid.uncore_freqs_hz) axes["uncore_freq_hz"].push_back(optional_hz(v));
  json points = json::array();
  for (const auto& p : s.points) {
    json pj{{"requested_core_hz", optional_hz(p.requested_core_hz)},
            {"requested_uncore_hz", optional_hz(p.requested_uncore_hz)},
            {"cores", p.cores},
            {"performance", p.performance},
            {"unit", p.unit},
            {"package_energy_joules", optional_hz(p.package_energy_joules)},
            {"duration_s", p.duration_s},
            {"observed_core_freq_hz", p.observed_core_freq_hz},
            {"observed_uncore_freq_hz", p.observed_uncore_freq_hz}};
    points.push_back(std::move(pj));
  }
  return json{{"type", "sweep"},
              {"workload", s.workload},
              {"axes", std::move(axes)},
              {"points", std::move(points)},
              {"environment", environment_to_json(s.environment)}};
}

inline std::optional<double> optional_number_value(const json& v, const std::string& path) {
  if (v.is_null()) return std::nullopt;
  return ObjectReader::as_number(v, path);
}

inline SweepResult sweep_from_json(const json& j) {
  ObjectReader r(j, "sweep", true);
  SweepResult s;
  s.workload = r.optional_string("workload");
  if (auto axes = r.optional_child("axes")) {
    s.grid.core_freqs_hz.clear();
    s.grid.uncore_freqs_hz.clear();
    s.grid.cores.clear();
    for (const auto& v : axes->raw("core_freq_hz")) s.grid.core_freqs_hz.push_back(optional_number_value(v, "axes"));
    for (const auto& v : axes->raw("uncore_freq_hz")) {
      s.grid.uncore_freqs_hz.push_back(optional_number_value(v, "axes"));
    }
    for (const auto& v : axes->raw("cores")) s.grid.cores.push_back(static_cast<int>(ObjectReader::as_integer(v, "axes")));
  }
  for (const auto& pj : r.raw("points")) {
    ObjectReader p(pj, "sweep.points[]", true);
    SweepPoint pt;
    pt.requested_core_hz = p.optional_number("requested_core_hz");
    pt.requested_uncore_hz = p.optional_number("requested_uncore_hz");
    pt.cores = static_cast<int>(p.integer("cores"));
    pt.performance = p.number("performance");
    pt.unit = p.string("unit");
    pt.package_energy_joules = p.optional_number("package_energy_joules");
    pt.duration_s = p.number("duration_s");
    pt.observed_core_freq_hz = p.number("observed_core_freq_hz");
    pt.observed_uncore_freq_hz = p.number("observed_uncore_freq_hz");
    s.points.push_back(pt);
  }
  if (const json* env = r.optional_raw("environment")) s.environment = environment_from_json(*env);
  return s;
}

inline const char* sweep_csv_header() {
  return "workload,requested_core_hz,requested_uncore_hz,cores,performance,unit,package_energy_joules,duration_s,"
         "observed_core_freq_hz,observed_uncore_freq_hz";
}

inline std::string sweep_to_csv(const SweepResult& s) {
  std::ostringstream os;
  os << sweep_csv_header() << '\n';
  for (const auto& p : s.points) {
    os << csv_escape(s.workload) << ',' << opt_cell(p.requested_core_hz) << ',' << opt_cell(p.requested_uncore_hz)
       << ',' << p.cores << ',' << format_double(p.performance) << ',' << csv_escape(p.unit) << ','
       << opt_cell(p.package_energy_joules) << ',' << format_double(p.duration_s) << ','
       << format_double(p.observed_core_freq_hz) << ',' << format_double(p.observed_uncore_freq_hz) << '\n';
  }
  return os.str();
}

}  // namespace ecmkit::probe
