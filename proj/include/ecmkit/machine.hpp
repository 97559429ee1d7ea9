#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/units.hpp"

namespace ecmkit {

enum class SnoopMode { ES, HS, HS_OSB, DIR };

inline constexpr std::string_view to_string(SnoopMode m) {
  switch (m) {
    case SnoopMode::ES: return "ES";
    case SnoopMode::HS: return "HS";
    case SnoopMode::HS_OSB: return "HS_OSB";
    case SnoopMode::DIR: return "DIR";
  }
  return "?";
}

inline std::optional<SnoopMode> parse_snoop_mode(std::string_view s) {
  if (s == "ES") return SnoopMode::ES;
  if (s == "HS") return SnoopMode::HS;
  if (s == "HS_OSB" || s == "HS+OSB") return SnoopMode::HS_OSB;
  if (s == "DIR") return SnoopMode::DIR;
  return std::nullopt;
}

// Workload classes that select a frequency domain and a power coefficient.
enum class WorkloadClass { idle, scalar, sse, avx };

inline constexpr std::string_view to_string(WorkloadClass c) {
  switch (c) {
    case WorkloadClass::idle: return "idle";
    case WorkloadClass::scalar: return "scalar";
    case WorkloadClass::sse: return "sse";
    case WorkloadClass::avx: return "avx";
  }
  return "?";
}

inline std::optional<WorkloadClass> parse_workload_class(std::string_view s) {
  if (s == "idle") return WorkloadClass::idle;
  if (s == "scalar") return WorkloadClass::scalar;
  if (s == "sse") return WorkloadClass::sse;
  if (s == "avx") return WorkloadClass::avx;
  return std::nullopt;
}

inline constexpr WorkloadClass workload_class_of(Width w) {
  switch (w) {
    case Width::scalar: return WorkloadClass::scalar;
    case Width::sse: return WorkloadClass::sse;
    case Width::avx: return WorkloadClass::avx;
  }
  return WorkloadClass::scalar;
}

enum class FrequencyMode { guaranteed, max_all_core };

// Package power = static + core_coeff[class] * f_core[GHz] * active_cores + uncore_coeff * f_uncore[GHz],
// clipped at the TDP.
struct PowerModel {
  double static_watts = 0.0;
  double uncore_watts_per_ghz = 0.0;
  std::map<std::string, double> core_watts_per_ghz;  // keyed by workload class

  bool operator==(const PowerModel&) const = default;
};

struct FrequencyDomainSpec {
  double base_hz = 0.0;
  std::optional<double> max_all_core_turbo_hz;
  std::optional<double> avx_base_hz;
  std::optional<double> avx_all_core_turbo_hz;
  std::optional<double> uncore_min_hz;
  std::optional<double> uncore_max_hz;
  double tdp_watts = 0.0;
  std::optional<PowerModel> power_model;

  bool operator==(const FrequencyDomainSpec&) const = default;
};

// Latency and efficiency maps are keyed by configuration tag: "default", "cod_on", "cod_off".
// Derate maps are keyed by access pattern, with "default" as the fallback entry.
struct CacheLevelSpec {
  std::string level_name;
  std::uint64_t capacity_bytes = 0;
  bool per_core = true;
  std::optional<double> load_path_bytes_per_cycle;
  std::optional<double> store_path_bytes_per_cycle;
  std::optional<double> inter_level_bytes_per_cycle;
  std::map<std::string, double> derate;
  std::map<std::string, double> latency_cycles;
  std::map<std::string, double> parallel_efficiency;
  std::string comment;

  bool operator==(const CacheLevelSpec&) const = default;
};

struct MemorySpec {
  int channels = 0;
  std::string technology;
  double theoretical_bw_bytes_per_s = 0.0;
  std::map<std::string, double> sustained_bw_bytes_per_s;  // keyed by access pattern
  std::map<std::string, double> latency_cycles;            // keyed by snoop mode or "default"
  std::optional<SnoopMode> default_snoop_mode;
  std::optional<double> uncore_bytes_per_cycle;
  std::string comment;

  bool operator==(const MemorySpec&) const = default;
};

struct UnitGroup {
  int count = 0;
  double width_bytes = 0.0;

  bool operator==(const UnitGroup&) const = default;
};

struct PortModel {
  UnitGroup load_units;
  UnitGroup store_units;
  bool simple_store_agu_present = false;
  int general_agus = 0;
  int fast_lea_units = 0;
  int retire_slots_per_cycle = 0;
  bool avx_load_blocks_both_load_units = false;
  double avx_store_cycles = 1.0;

  bool operator==(const PortModel&) const = default;
};

struct InstSpec {
  std::string mnemonic;
  Width width = Width::scalar;
  Precision precision = Precision::dp;
  double latency_cycles = 0.0;
  double inverse_throughput_cycles = 0.0;
  std::string port_class;

  bool operator==(const InstSpec&) const = default;
};

// Cycles per gather instruction keyed by source level ("L1", ..., "Mem") and
// number of distinct cache lines touched.
struct GatherProfile {
  std::map<std::string, std::map<int, double>> cycles;

  bool operator==(const GatherProfile&) const = default;
};

struct SnoopProfile {
  SnoopMode mode = SnoopMode::ES;
  double memory_latency_cycles = 0.0;
  double l3_latency_cycles = 0.0;
  std::map<std::string, double> bandwidth_scale;

  bool operator==(const SnoopProfile&) const = default;
};

struct ChipInfo {
  std::string microarchitecture;
  std::string model;
  std::string release;
  std::string simd;

  bool operator==(const ChipInfo&) const = default;
};

struct MachineDescription {
  std::string name;
  ChipInfo chip;
  int cores = 0;
  int smt_threads_per_core = 1;
  FrequencyDomainSpec frequency;
  std::vector<CacheLevelSpec> cache_levels;
  MemorySpec memory;
  PortModel ports;
  std::vector<InstSpec> instruction_table;
  std::optional<GatherProfile> gather_table;
  std::map<SnoopMode, SnoopProfile> snoop_profiles;
  int numa_domains_per_chip = 1;
  std::string comment;

  bool operator==(const MachineDescription&) const = default;

  const CacheLevelSpec* find_level(std::string_view level) const {
    for (const auto& c : cache_levels) {
      if (c.level_name == level) return &c;
    }
    return nullptr;
  }
};

inline constexpr std::string_view memory_level_name = "Mem";
inline constexpr std::array<int, 4> gather_spreads{1, 2, 4, 8};

// ---------------------------------------------------------------------------
// Queries

inline double effective_frequency(const MachineDescription& md, WorkloadClass cls, FrequencyMode mode) {
  const auto& f = md.frequency;
  const bool avx = cls == WorkloadClass::avx;
  const double guaranteed = avx ? f.avx_base_hz.value_or(f.base_hz) : f.base_hz;
  if (mode == FrequencyMode::guaranteed) return guaranteed;
  const auto turbo = avx ? f.avx_all_core_turbo_hz : f.max_all_core_turbo_hz;
  return turbo.value_or(guaranteed);
}

inline double effective_frequency(const MachineDescription& md, Width w, FrequencyMode mode) {
  return effective_frequency(md, workload_class_of(w), mode);
}

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace detail

inline const InstSpec& lookup_instruction(const MachineDescription& md, std::string_view mnemonic, Width width,
                                          Precision precision) {
  for (const auto& inst : md.instruction_table) {
    if (inst.mnemonic == mnemonic && inst.width == width && inst.precision == precision) return inst;
  }
  // Nearest candidates: same mnemonic with other shapes first, then lexically close mnemonics.
  std::vector<std::pair<std::size_t, std::string>> ranked;
  std::set<std::string> seen;
  for (const auto& inst : md.instruction_table) {
    std::string key = inst.mnemonic + "/" + std::string(to_string(inst.width)) + "/" +
                      std::string(to_string(inst.precision));
    if (!seen.insert(key).second) continue;
    std::size_t d = detail::edit_distance(inst.mnemonic, mnemonic) * 4;
    if (inst.width != width) d += 1;
    if (inst.precision != precision) d += 1;
    ranked.emplace_back(d, std::move(key));
  }
  std::sort(ranked.begin(), ranked.end());
  std::string msg = "instruction " + std::string(mnemonic) + "/" + std::string(to_string(width)) + "/" +
                    std::string(to_string(precision)) + " not in " + md.name + " table";
  if (!ranked.empty()) {
    msg += "; nearest:";
    for (std::size_t i = 0; i < std::min<std::size_t>(ranked.size(), 4); ++i) msg += " " + ranked[i].second;
  }
  throw Error(ErrorKind::not_found, msg);
}

inline bool has_instruction(const MachineDescription& md, std::string_view mnemonic, Width width,
                            Precision precision) {
  return std::any_of(md.instruction_table.begin(), md.instruction_table.end(), [&](const InstSpec& i) {
    return i.mnemonic == mnemonic && i.width == width && i.precision == precision;
  });
}

// Selects the value for a configuration tag, falling back to "default" and then
// to whichever single entry exists.
inline std::optional<double> tagged_value(const std::map<std::string, double>& values, std::string_view tag) {
  if (auto it = values.find(std::string(tag)); it != values.end()) return it->second;
  if (auto it = values.find("default"); it != values.end()) return it->second;
  if (values.size() == 1) return values.begin()->second;
  return std::nullopt;
}

inline double derate_for(const CacheLevelSpec& level, std::string_view pattern) {
  if (auto it = level.derate.find(std::string(pattern)); it != level.derate.end()) return it->second;
  if (auto it = level.derate.find("default"); it != level.derate.end()) return it->second;
  return 1.0;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw invariant_error(field, "must be > 0");
}

inline bool is_cache_level_name(std::string_view name) {
  if (name.size() < 2 || name[0] != 'L') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

inline bool is_config_tag(std::string_view tag) { return tag == "default" || tag == "cod_on" || tag == "cod_off"; }

inline bool is_workload_class_key(std::string_view key) { return parse_workload_class(key).has_value(); }

}  // namespace detail

inline void validate_machine(const MachineDescription& md) {
  using detail::require_positive;
  if (md.name.empty()) throw invariant_error("name", "must not be empty");
  if (md.cores < 1) throw invariant_error("cores", "must be a positive integer");
  if (md.smt_threads_per_core < 1) throw invariant_error("smt", "must be a positive integer");
  if (md.numa_domains_per_chip != 1 && md.numa_domains_per_chip != 2) {
    throw invariant_error("numa_domains_per_chip", "must be 1 or 2");
  }

  const auto& f = md.frequency;
  require_positive(f.base_hz, "frequency.base_hz");
  require_positive(f.tdp_watts, "frequency.tdp_watts");
  for (auto [v, n] : {std::pair{f.max_all_core_turbo_hz, "max_all_core_turbo_hz"},
                      std::pair{f.avx_base_hz, "avx_base_hz"},
                      std::pair{f.avx_all_core_turbo_hz, "avx_all_core_turbo_hz"},
                      std::pair{f.uncore_min_hz, "uncore_min_hz"}, std::pair{f.uncore_max_hz, "uncore_max_hz"}}) {
    if (v) require_positive(*v, std::string("frequency.") + n);
  }
  if (f.avx_base_hz && *f.avx_base_hz > f.base_hz) {
    throw invariant_error("frequency.avx_base_hz", "must not exceed base_hz");
  }
  if (f.max_all_core_turbo_hz && f.base_hz > *f.max_all_core_turbo_hz) {
    throw invariant_error("frequency.max_all_core_turbo_hz", "must be >= base_hz");
  }
  if (f.avx_all_core_turbo_hz && *f.avx_all_core_turbo_hz < f.avx_base_hz.value_or(f.base_hz)) {
    throw invariant_error("frequency.avx_all_core_turbo_hz", "must be >= avx_base_hz");
  }
  if (f.uncore_min_hz && f.uncore_max_hz && *f.uncore_min_hz > *f.uncore_max_hz) {
    throw invariant_error("frequency.uncore_min_hz", "must not exceed uncore_max_hz");
  }
  if (f.power_model) {
    const auto& p = *f.power_model;
    if (p.static_watts < 0) throw invariant_error("frequency.power_model.static_watts", "must be >= 0");
    if (p.uncore_watts_per_ghz < 0) throw invariant_error("frequency.power_model.uncore_watts_per_ghz", "must be >= 0");
    for (const auto& [cls, w] : p.core_watts_per_ghz) {
      if (!detail::is_workload_class_key(cls)) {
        throw invariant_error("frequency.power_model.core_watts_per_ghz", "unknown workload class '" + cls + "'");
      }
      require_positive(w, "frequency.power_model.core_watts_per_ghz." + cls);
    }
  }

  if (md.cache_levels.empty()) throw invariant_error("caches", "must contain at least one level");
  for (std::size_t i = 0; i < md.cache_levels.size(); ++i) {
    const auto& c = md.cache_levels[i];
    const std::string field = "caches[" + std::to_string(i) + "]";
    if (!detail::is_cache_level_name(c.level_name) || c.level_name != "L" + std::to_string(i + 1)) {
      throw invariant_error(field + ".level", "unknown level name '" + c.level_name + "' (expected L" +
                                                  std::to_string(i + 1) + ")");
    }
    if (c.capacity_bytes == 0) throw invariant_error(field + ".capacity_bytes", "must be > 0");
    if (c.capacity_bytes % line_size_bytes != 0) {
      throw invariant_error(field + ".capacity_bytes", "must be a multiple of the 64-byte line size");
    }
    if (i > 0 && c.capacity_bytes <= md.cache_levels[i - 1].capacity_bytes) {
      throw invariant_error(field + ".capacity_bytes", "capacities must strictly increase outward");
    }
    if (c.load_path_bytes_per_cycle) require_positive(*c.load_path_bytes_per_cycle, field + ".load_path_bytes_per_cycle");
    if (c.store_path_bytes_per_cycle) {
      require_positive(*c.store_path_bytes_per_cycle, field + ".store_path_bytes_per_cycle");
    }
    if (c.inter_level_bytes_per_cycle) {
      require_positive(*c.inter_level_bytes_per_cycle, field + ".inter_level_bytes_per_cycle");
    } else if (i + 1 < md.cache_levels.size()) {
      throw invariant_error(field + ".inter_level_bytes_per_cycle", "required for every level except the last");
    }
    if (c.latency_cycles.empty()) throw invariant_error(field + ".latency_cycles", "must not be empty");
    for (const auto& [tag, v] : c.latency_cycles) {
      if (!detail::is_config_tag(tag)) throw invariant_error(field + ".latency_cycles", "unknown tag '" + tag + "'");
      require_positive(v, field + ".latency_cycles." + tag);
    }
    for (const auto& [tag, v] : c.parallel_efficiency) {
      if (!detail::is_config_tag(tag)) {
        throw invariant_error(field + ".parallel_efficiency", "unknown tag '" + tag + "'");
      }
      if (!(v > 0.0 && v <= 1.0)) throw invariant_error(field + ".parallel_efficiency." + tag, "must be in (0, 1]");
    }
    for (const auto& [pattern, v] : c.derate) {
      if (!(v > 0.0 && v <= 1.0)) throw invariant_error(field + ".derate." + pattern, "must be in (0, 1]");
    }
    if (!c.derate.empty() && !c.inter_level_bytes_per_cycle) {
      throw invariant_error(field + ".derate", "requires inter_level_bytes_per_cycle");
    }
  }
  {
    const auto& l1 = md.cache_levels.front();
    if (!l1.load_path_bytes_per_cycle || !l1.store_path_bytes_per_cycle) {
      throw invariant_error("caches[0]", "L1 requires load_path_bytes_per_cycle and store_path_bytes_per_cycle");
    }
  }

  const auto& m = md.memory;
  if (m.channels < 1) throw invariant_error("memory.channels", "must be >= 1");
  require_positive(m.theoretical_bw_bytes_per_s, "memory.theoretical_bw_bytes_per_s");
  for (const auto& [pattern, v] : m.sustained_bw_bytes_per_s) {
    require_positive(v, "memory.sustained_bw_bytes_per_s." + pattern);
    if (v > m.theoretical_bw_bytes_per_s) {
      throw invariant_error("memory.sustained_bw_bytes_per_s." + pattern, "must not exceed the theoretical value");
    }
  }
  if (m.latency_cycles.empty()) throw invariant_error("memory.latency_cycles", "must not be empty");
  for (const auto& [mode, v] : m.latency_cycles) {
    if (mode != "default" && !parse_snoop_mode(mode)) {
      throw invariant_error("memory.latency_cycles", "unknown snoop mode '" + mode + "'");
    }
    require_positive(v, "memory.latency_cycles." + mode);
  }
  if (m.default_snoop_mode && !md.snoop_profiles.contains(*m.default_snoop_mode)) {
    throw invariant_error("memory.default_snoop_mode", "has no matching snoop profile");
  }
  if (m.uncore_bytes_per_cycle) require_positive(*m.uncore_bytes_per_cycle, "memory.uncore_bytes_per_cycle");

  const auto& p = md.ports;
  if (p.load_units.count < 1) throw invariant_error("ports.load_units.count", "must be >= 1");
  if (p.store_units.count < 1) throw invariant_error("ports.store_units.count", "must be >= 1");
  require_positive(p.load_units.width_bytes, "ports.load_units.width_bytes");
  require_positive(p.store_units.width_bytes, "ports.store_units.width_bytes");
  if (p.general_agus < 1) throw invariant_error("ports.general_agus", "must be >= 1");
  if (p.retire_slots_per_cycle < 1) throw invariant_error("ports.retire_slots_per_cycle", "must be >= 1");
  if (p.fast_lea_units < 0) throw invariant_error("ports.fast_lea_units", "must be >= 0");
  require_positive(p.avx_store_cycles, "ports.avx_store_cycles");
  // The blocking flag and the per-unit widths describe the same hardware; they must agree.
  {
    const double avx_bytes = 32.0;
    const bool narrow = p.load_units.width_bytes < avx_bytes;
    if (p.avx_load_blocks_both_load_units &&
        std::ceil(avx_bytes / p.load_units.width_bytes) != static_cast<double>(p.load_units.count)) {
      throw invariant_error("ports.avx_load_blocks_both_load_units", "disagrees with load unit widths");
    }
    if (!p.avx_load_blocks_both_load_units && narrow && p.load_units.count > 1) {
      throw invariant_error("ports.avx_load_blocks_both_load_units", "narrow load units imply blocking");
    }
    if (p.avx_store_cycles != std::ceil(avx_bytes / p.store_units.width_bytes)) {
      throw invariant_error("ports.avx_store_cycles", "disagrees with store unit width");
    }
    const auto& l1 = md.cache_levels.front();
    if (*l1.load_path_bytes_per_cycle != p.load_units.count * p.load_units.width_bytes) {
      throw invariant_error("caches[0].load_path_bytes_per_cycle", "disagrees with ports.load_units");
    }
    if (*l1.store_path_bytes_per_cycle != p.store_units.count * p.store_units.width_bytes) {
      throw invariant_error("caches[0].store_path_bytes_per_cycle", "disagrees with ports.store_units");
    }
  }

  std::set<std::tuple<std::string, Width, Precision>> seen;
  for (std::size_t i = 0; i < md.instruction_table.size(); ++i) {
    const auto& inst = md.instruction_table[i];
    const std::string field = "instructions[" + std::to_string(i) + "]";
    if (inst.mnemonic.empty()) throw invariant_error(field + ".mnemonic", "must not be empty");
    if (inst.port_class.empty()) throw invariant_error(field + ".port_class", "must not be empty");
    require_positive(inst.latency_cycles, field + ".latency_cycles");
    require_positive(inst.inverse_throughput_cycles, field + ".inverse_throughput_cycles");
    if (inst.latency_cycles < inst.inverse_throughput_cycles) {
      throw invariant_error(field + ".latency_cycles", "must be >= inverse_throughput_cycles");
    }
    if (!seen.emplace(inst.mnemonic, inst.width, inst.precision).second) {
      throw invariant_error(field, "duplicate (mnemonic, width, precision) " + inst.mnemonic + "/" +
                                       std::string(to_string(inst.width)) + "/" +
                                       std::string(to_string(inst.precision)));
    }
  }

  if (md.gather_table) {
    // Levels ordered from L1 outward, memory last.
    std::vector<std::string> order;
    for (const auto& c : md.cache_levels) order.push_back(c.level_name);
    order.emplace_back(memory_level_name);
    for (const auto& [level, row] : md.gather_table->cycles) {
      if (std::find(order.begin(), order.end(), level) == order.end()) {
        throw invariant_error("gather", "unknown level name '" + level + "'");
      }
      for (const auto& [spread, v] : row) {
        if (std::find(gather_spreads.begin(), gather_spreads.end(), spread) == gather_spreads.end()) {
          throw invariant_error("gather." + level, "cl_spread must be one of 1, 2, 4, 8");
        }
        require_positive(v, "gather." + level + "." + std::to_string(spread));
      }
    }
    // Non-decreasing in spread from L2 outward.
    for (std::size_t li = 1; li < order.size(); ++li) {
      auto it = md.gather_table->cycles.find(order[li]);
      if (it == md.gather_table->cycles.end()) continue;
      double prev = 0.0;
      for (const auto& [spread, v] : it->second) {
        if (v < prev) throw invariant_error("gather." + order[li], "cycles must not decrease with cl_spread");
        prev = v;
      }
    }
    // Non-decreasing in level distance for a fixed spread.
    for (int spread : gather_spreads) {
      double prev = 0.0;
      for (const auto& level : order) {
        auto it = md.gather_table->cycles.find(level);
        if (it == md.gather_table->cycles.end()) continue;
        auto cell = it->second.find(spread);
        if (cell == it->second.end()) continue;
        if (cell->second < prev) {
          throw invariant_error("gather." + level, "cycles must not decrease with level distance");
        }
        prev = cell->second;
      }
    }
  }

  for (const auto& [mode, prof] : md.snoop_profiles) {
    const std::string field = "snoop_profiles." + std::string(to_string(mode));
    if (prof.mode != mode) throw invariant_error(field, "mode_name does not match its key");
    require_positive(prof.memory_latency_cycles, field + ".memory_latency_cycles");
    require_positive(prof.l3_latency_cycles, field + ".l3_latency_cycles");
    for (const auto& [pattern, s] : prof.bandwidth_scale) require_positive(s, field + ".bandwidth_scale." + pattern);
    if (mode == SnoopMode::DIR && md.numa_domains_per_chip != 2) {
      throw invariant_error(field, "DIR requires numa_domains_per_chip = 2");
    }
  }
}

}  // namespace ecmkit
