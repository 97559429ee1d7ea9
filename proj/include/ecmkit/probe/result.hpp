#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/json_reader.hpp"

namespace ecmkit::probe {

inline constexpr int min_repetitions = 9;

enum class Statistic { min, median };

inline constexpr std::string_view to_string(Statistic s) { return s == Statistic::min ? "min" : "median"; }

inline std::optional<Statistic> parse_statistic(std::string_view s) {
  if (s == "min") return Statistic::min;
  if (s == "median") return Statistic::median;
  return std::nullopt;
}

inline double apply_statistic(Statistic s, std::vector<double> v) {
  if (v.empty()) throw precondition_error("statistic over zero repetitions");
  std::sort(v.begin(), v.end());
  if (s == Statistic::min) return v.front();
  const auto m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Environment {
  std::string executor;  // real | synthetic
  std::string machine;
  std::optional<double> core_freq_hz;
  std::optional<double> uncore_freq_hz;
  std::optional<bool> prefetchers_on;
  std::vector<int> pinned_cores;
  std::optional<std::string> snoop_mode;  // tag such as "DIR" or "default"
  std::optional<bool> cod;

  bool complete() const {
    return core_freq_hz && uncore_freq_hz && prefetchers_on && !pinned_cores.empty() && snoop_mode && cod;
  }
  std::vector<std::string> missing() const {
    std::vector<std::string> m;
    if (!core_freq_hz) m.emplace_back("core_freq_hz");
    if (!uncore_freq_hz) m.emplace_back("uncore_freq_hz");
    if (!prefetchers_on) m.emplace_back("prefetchers_on");
    if (pinned_cores.empty()) m.emplace_back("pinned_cores");
    if (!snoop_mode) m.emplace_back("snoop_mode");
    if (!cod) m.emplace_back("cod");
    return m;
  }
  bool operator==(const Environment&) const = default;
};

struct ProbeResult {
  std::string probe_name;
  json parameters = json::object();
  std::vector<double> repetitions;
  Statistic statistic = Statistic::min;
  double value = 0.0;
  std::string unit;
  std::map<std::string, double> derived;  // same measurement in other units, e.g. "GB/s"
  Environment environment;

  bool operator==(const ProbeResult&) const = default;
};

inline ProbeResult make_result(std::string name, json parameters, std::vector<double> reps, Statistic s,
                               std::string unit, Environment env) {
  if (static_cast<int>(reps.size()) < min_repetitions) {
    throw precondition_error("a probe needs at least " + std::to_string(min_repetitions) + " repetitions");
  }
  ProbeResult r;
  r.probe_name = std::move(name);
  r.parameters = std::move(parameters);
  r.value = apply_statistic(s, reps);
  r.repetitions = std::move(reps);
  r.statistic = s;
  r.unit = std::move(unit);
  r.environment = std::move(env);
  return r;
}

// ---------------------------------------------------------------------------
// JSON

template <class T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

inline json environment_to_json(const Environment& e) {
  json j{{"executor", e.executor}, {"machine", e.machine}, {"pinned_cores", e.pinned_cores}};
  put_optional(j, "core_freq_hz", e.core_freq_hz);
  put_optional(j, "uncore_freq_hz", e.uncore_freq_hz);
  put_optional(j, "prefetchers_on", e.prefetchers_on);
  put_optional(j, "snoop_mode", e.snoop_mode);
  put_optional(j, "cod", e.cod);
  return j;
}

inline Environment environment_from_json(const json& j) {
  ObjectReader r(j, "environment", true);
  Environment e;
  e.executor = r.optional_string("executor");
  e.machine = r.optional_string("machine");
  e.core_freq_hz = r.optional_number("core_freq_hz");
  e.uncore_freq_hz = r.optional_number("uncore_freq_hz");
  e.prefetchers_on = r.optional_boolean("prefetchers_on");
  if (const json* p = r.optional_raw("pinned_cores")) {
    for (const auto& c : *p) e.pinned_cores.push_back(static_cast<int>(ObjectReader::as_integer(c, "pinned_cores")));
  }
  if (const json* s = r.optional_raw("snoop_mode")) e.snoop_mode = s->get<std::string>();
  e.cod = r.optional_boolean("cod");
  return e;
}

inline json result_to_json(const ProbeResult& r) {
  json j{{"type", "probe"},
         {"probe", r.probe_name},
         {"parameters", r.parameters},
         {"repetitions", r.repetitions},
         {"statistic", std::string(to_string(r.statistic))},
         {"value", r.value},
         {"unit", r.unit},
         {"environment", environment_to_json(r.environment)}};
  if (!r.derived.empty()) j["derived"] = r.derived;
  return j;
}

inline ProbeResult result_from_json(const json& j) {
  ObjectReader r(j, "probe result", true);
  ProbeResult p;
  p.probe_name = r.string("probe");
  if (const json* params = r.optional_raw("parameters")) p.parameters = *params;
  for (const auto& v : r.raw("repetitions")) p.repetitions.push_back(ObjectReader::as_number(v, "repetitions"));
  auto s = parse_statistic(r.string("statistic"));
  if (!s) throw schema_error("probe result statistic must be min|median");
  p.statistic = *s;
  p.value = r.number("value");
  p.unit = r.string("unit");
  p.derived = r.number_map("derived");
  if (const json* env = r.optional_raw("environment")) p.environment = environment_from_json(*env);
  return p;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline const char* probe_csv_header() {
  return "probe,parameters,statistic,value,unit,repetitions,core_freq_hz,uncore_freq_hz,prefetchers_on,"
         "pinned_cores,snoop_mode,cod,executor,machine";
}

inline std::string result_to_csv_row(const ProbeResult& r) {
  std::string reps;
  for (std::size_t i = 0; i < r.repetitions.size(); ++i) reps += (i ? ";" : "") + format_double(r.repetitions[i]);
  std::string pinned;
  for (std::size_t i = 0; i < r.environment.pinned_cores.size(); ++i) {
    pinned += (i ? ";" : "") + std::to_string(r.environment.pinned_cores[i]);
  }
  const auto& e = r.environment;
  auto b = [](const std::optional<bool>& v) -> std::string { return v ? (*v ? "true" : "false") : ""; };
  std::ostringstream os;
  os << csv_escape(r.probe_name) << ',' << csv_escape(r.parameters.dump()) << ',' << to_string(r.statistic) << ','
     << format_double(r.value) << ',' << csv_escape(r.unit) << ',' << reps << ',' << opt_cell(e.core_freq_hz) << ','
     << opt_cell(e.uncore_freq_hz) << ',' << b(e.prefetchers_on) << ',' << pinned << ','
     << csv_escape(e.snoop_mode.value_or("")) << ',' << b(e.cod) << ',' << csv_escape(e.executor) << ','
     << csv_escape(e.machine);
  return os.str();
}

}  // namespace ecmkit::probe
