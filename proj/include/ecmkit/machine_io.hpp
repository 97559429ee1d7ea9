#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ecmkit/json_reader.hpp"
#include "ecmkit/machine.hpp"

#ifndef ECMKIT_MACHINE_DIR
#define ECMKIT_MACHINE_DIR "machines"
#endif

namespace ecmkit {

struct LoadOptions {
  bool lenient = false;  // accept unknown keys
};

namespace detail {

inline Width width_field(const ObjectReader& r, const std::string& key) {
  auto w = parse_width(r.string(key));
  if (!w) throw schema_error(r.path() + "." + key + " must be scalar|sse|avx");
  return *w;
}

inline Precision precision_field(const ObjectReader& r, const std::string& key) {
  auto p = parse_precision(r.string(key));
  if (!p) throw schema_error(r.path() + "." + key + " must be sp|dp|none");
  return *p;
}

inline int count_field(const ObjectReader& r, const std::string& key) {
  return static_cast<int>(r.integer(key));
}

inline UnitGroup unit_group(const ObjectReader& r) {
  UnitGroup g;
  g.count = count_field(r, "count");
  g.width_bytes = r.number("width_bytes");
  r.finish();
  return g;
}

}  // namespace detail

inline MachineDescription machine_from_json(const json& doc, const LoadOptions& opts = {}) {
  using detail::count_field;
  ObjectReader root(doc, "machine", opts.lenient);
  MachineDescription md;
  md.name = root.string("name");
  md.comment = root.optional_string("comment");
  if (auto chip = root.optional_child("chip")) {
    md.chip.microarchitecture = chip->optional_string("microarchitecture");
    md.chip.model = chip->optional_string("model");
    md.chip.release = chip->optional_string("release");
    md.chip.simd = chip->optional_string("simd");
    chip->finish();
  }
  md.cores = count_field(root, "cores");
  md.smt_threads_per_core = count_field(root, "smt");
  md.numa_domains_per_chip = static_cast<int>(root.optional_integer("numa_domains_per_chip").value_or(1));

  {
    auto f = root.child("frequency");
    md.frequency.base_hz = f.number("base_hz");
    md.frequency.max_all_core_turbo_hz = f.optional_number("max_all_core_turbo_hz");
    md.frequency.avx_base_hz = f.optional_number("avx_base_hz");
    md.frequency.avx_all_core_turbo_hz = f.optional_number("avx_all_core_turbo_hz");
    md.frequency.uncore_min_hz = f.optional_number("uncore_min_hz");
    md.frequency.uncore_max_hz = f.optional_number("uncore_max_hz");
    md.frequency.tdp_watts = f.number("tdp_watts");
    if (auto p = f.optional_child("power_model")) {
      PowerModel pm;
      pm.static_watts = p->number("static_watts");
      pm.uncore_watts_per_ghz = p->number("uncore_watts_per_ghz");
      pm.core_watts_per_ghz = p->number_map("core_watts_per_ghz");
      p->finish();
      md.frequency.power_model = pm;
    }
    f.finish();
  }

  {
    const auto& caches = root.raw("caches");
    if (!caches.is_array()) throw schema_error("machine.caches must be an array");
    for (std::size_t i = 0; i < caches.size(); ++i) {
      ObjectReader c(caches[i], "machine.caches[" + std::to_string(i) + "]", opts.lenient);
      CacheLevelSpec lvl;
      lvl.level_name = c.string("level");
      const auto cap = c.integer("capacity_bytes");
      if (cap < 0) throw invariant_error(c.path() + ".capacity_bytes", "must be > 0");
      lvl.capacity_bytes = static_cast<std::uint64_t>(cap);
      lvl.per_core = c.boolean("per_core");
      lvl.load_path_bytes_per_cycle = c.optional_number("load_path_bytes_per_cycle");
      lvl.store_path_bytes_per_cycle = c.optional_number("store_path_bytes_per_cycle");
      lvl.inter_level_bytes_per_cycle = c.optional_number("inter_level_bytes_per_cycle");
      lvl.derate = c.number_map("derate");
      lvl.latency_cycles = c.number_map("latency_cycles");
      lvl.parallel_efficiency = c.number_map("parallel_efficiency");
      lvl.comment = c.optional_string("comment");
      c.finish();
      md.cache_levels.push_back(std::move(lvl));
    }
  }

  {
    auto m = root.child("memory");
    md.memory.channels = count_field(m, "channels");
    md.memory.technology = m.optional_string("technology");
    md.memory.theoretical_bw_bytes_per_s = m.number("theoretical_bw_bytes_per_s");
    md.memory.sustained_bw_bytes_per_s = m.number_map("sustained_bw_bytes_per_s");
    md.memory.latency_cycles = m.number_map("latency_cycles");
    if (const json* mode = m.optional_raw("default_snoop_mode")) {
      if (!mode->is_string()) throw schema_error("machine.memory.default_snoop_mode must be a string");
      auto parsed = parse_snoop_mode(mode->get<std::string>());
      if (!parsed) throw schema_error("machine.memory.default_snoop_mode: unknown snoop mode '" +
                                      mode->get<std::string>() + "'");
      md.memory.default_snoop_mode = parsed;
    }
    md.memory.uncore_bytes_per_cycle = m.optional_number("uncore_bytes_per_cycle");
    md.memory.comment = m.optional_string("comment");
    m.finish();
  }

  {
    auto p = root.child("ports");
    md.ports.load_units = detail::unit_group(p.child("load_units"));
    md.ports.store_units = detail::unit_group(p.child("store_units"));
    md.ports.simple_store_agu_present = p.boolean("simple_store_agu_present");
    md.ports.general_agus = count_field(p, "general_agus");
    md.ports.fast_lea_units = count_field(p, "fast_lea_units");
    md.ports.retire_slots_per_cycle = count_field(p, "retire_slots_per_cycle");
    md.ports.avx_load_blocks_both_load_units = p.boolean("avx_load_blocks_both_load_units");
    md.ports.avx_store_cycles = p.number("avx_store_cycles");
    p.finish();
  }

  {
    const auto& insts = root.raw("instructions");
    if (!insts.is_array()) throw schema_error("machine.instructions must be an array");
    for (std::size_t i = 0; i < insts.size(); ++i) {
      ObjectReader r(insts[i], "machine.instructions[" + std::to_string(i) + "]", opts.lenient);
      InstSpec s;
      s.mnemonic = r.string("mnemonic");
      s.width = detail::width_field(r, "width");
      s.precision = detail::precision_field(r, "precision");
      s.latency_cycles = r.number("latency_cycles");
      s.inverse_throughput_cycles = r.number("inverse_throughput_cycles");
      s.port_class = r.string("port_class");
      r.finish();
      md.instruction_table.push_back(std::move(s));
    }
  }

  if (const json* g = root.optional_raw("gather")) {
    if (!g->is_object()) throw schema_error("machine.gather must be an object");
    GatherProfile prof;
    for (const auto& [level, row] : g->items()) {
      if (!row.is_object()) throw schema_error("machine.gather." + level + " must be an object");
      for (const auto& [spread, v] : row.items()) {
        int s = 0;
        try {
          std::size_t used = 0;
          s = std::stoi(spread, &used);
          if (used != spread.size()) throw std::invalid_argument(spread);
        } catch (const std::exception&) {
          throw schema_error("machine.gather." + level + " key '" + spread + "' must be an integer cl_spread");
        }
        prof.cycles[level][s] = ObjectReader::as_number(v, "machine.gather." + level + "." + spread);
      }
    }
    md.gather_table = std::move(prof);
  }

  if (const json* sp = root.optional_raw("snoop_profiles")) {
    if (!sp->is_object()) throw schema_error("machine.snoop_profiles must be an object");
    for (const auto& [name, body] : sp->items()) {
      auto mode = parse_snoop_mode(name);
      if (!mode) throw schema_error("machine.snoop_profiles: unknown snoop mode '" + name + "'");
      ObjectReader r(body, "machine.snoop_profiles." + name, opts.lenient);
      SnoopProfile prof;
      prof.mode = *mode;
      prof.memory_latency_cycles = r.number("memory_latency_cycles");
      prof.l3_latency_cycles = r.number("l3_latency_cycles");
      prof.bandwidth_scale = r.number_map("bandwidth_scale");
      r.finish();
      md.snoop_profiles[*mode] = std::move(prof);
    }
  }

  root.finish();
  validate_machine(md);
  return md;
}

inline MachineDescription load_machine(const std::string& text, const LoadOptions& opts = {}) {
  return machine_from_json(parse_json_text(text, "machine document"), opts);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline MachineDescription load_machine_file(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  try {
    return load_machine(read_text_file(path), opts);
  } catch (const Error& e) {
    throw Error(e.kind(), path.filename().string() + ": " + e.what());
  }
}

// Directory holding the shipped machine files; ECMKIT_MACHINES overrides the build-time default.
inline std::filesystem::path machine_directory() {
  if (const char* env = std::getenv("ECMKIT_MACHINES"); env && *env) return env;
  return ECMKIT_MACHINE_DIR;
}

// Accepts a shipped short name ("bdw") or a path to a machine file.
inline MachineDescription resolve_machine(const std::string& name_or_path, const LoadOptions& opts = {}) {
  std::filesystem::path p(name_or_path);
  if (p.has_extension() || p.has_parent_path()) return load_machine_file(p, opts);
  std::string lowered = name_or_path;
  for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return load_machine_file(machine_directory() / (lowered + ".json"), opts);
}

inline json machine_to_json(const MachineDescription& md) {
  json j;
  j["name"] = md.name;
  if (!md.comment.empty()) j["comment"] = md.comment;
  if (md.chip != ChipInfo{}) {
    json c = json::object();
    if (!md.chip.microarchitecture.empty()) c["microarchitecture"] = md.chip.microarchitecture;
    if (!md.chip.model.empty()) c["model"] = md.chip.model;
    if (!md.chip.release.empty()) c["release"] = md.chip.release;
    if (!md.chip.simd.empty()) c["simd"] = md.chip.simd;
    j["chip"] = c;
  }
  j["cores"] = md.cores;
  j["smt"] = md.smt_threads_per_core;
  j["numa_domains_per_chip"] = md.numa_domains_per_chip;

  json f;
  const auto& fr = md.frequency;
  f["base_hz"] = fr.base_hz;
  if (fr.max_all_core_turbo_hz) f["max_all_core_turbo_hz"] = *fr.max_all_core_turbo_hz;
  if (fr.avx_base_hz) f["avx_base_hz"] = *fr.avx_base_hz;
  if (fr.avx_all_core_turbo_hz) f["avx_all_core_turbo_hz"] = *fr.avx_all_core_turbo_hz;
  if (fr.uncore_min_hz) f["uncore_min_hz"] = *fr.uncore_min_hz;
  if (fr.uncore_max_hz) f["uncore_max_hz"] = *fr.uncore_max_hz;
  f["tdp_watts"] = fr.tdp_watts;
  if (fr.power_model) {
    f["power_model"] = {{"static_watts", fr.power_model->static_watts},
                        {"uncore_watts_per_ghz", fr.power_model->uncore_watts_per_ghz},
                        {"core_watts_per_ghz", fr.power_model->core_watts_per_ghz}};
  }
  j["frequency"] = f;

  json caches = json::array();
  for (const auto& c : md.cache_levels) {
    json cj;
    cj["level"] = c.level_name;
    cj["capacity_bytes"] = c.capacity_bytes;
    cj["per_core"] = c.per_core;
    if (c.load_path_bytes_per_cycle) cj["load_path_bytes_per_cycle"] = *c.load_path_bytes_per_cycle;
    if (c.store_path_bytes_per_cycle) cj["store_path_bytes_per_cycle"] = *c.store_path_bytes_per_cycle;
    if (c.inter_level_bytes_per_cycle) cj["inter_level_bytes_per_cycle"] = *c.inter_level_bytes_per_cycle;
    if (!c.derate.empty()) cj["derate"] = c.derate;
    cj["latency_cycles"] = c.latency_cycles;
    if (!c.parallel_efficiency.empty()) cj["parallel_efficiency"] = c.parallel_efficiency;
    if (!c.comment.empty()) cj["comment"] = c.comment;
    caches.push_back(std::move(cj));
  }
  j["caches"] = std::move(caches);

  json m;
  m["channels"] = md.memory.channels;
  if (!md.memory.technology.empty()) m["technology"] = md.memory.technology;
  m["theoretical_bw_bytes_per_s"] = md.memory.theoretical_bw_bytes_per_s;
  if (!md.memory.sustained_bw_bytes_per_s.empty()) m["sustained_bw_bytes_per_s"] = md.memory.sustained_bw_bytes_per_s;
  m["latency_cycles"] = md.memory.latency_cycles;
  if (md.memory.default_snoop_mode) m["default_snoop_mode"] = std::string(to_string(*md.memory.default_snoop_mode));
  if (md.memory.uncore_bytes_per_cycle) m["uncore_bytes_per_cycle"] = *md.memory.uncore_bytes_per_cycle;
  if (!md.memory.comment.empty()) m["comment"] = md.memory.comment;
  j["memory"] = std::move(m);

  const auto& p = md.ports;
  j["ports"] = {
      {"load_units", {{"count", p.load_units.count}, {"width_bytes", p.load_units.width_bytes}}},
      {"store_units", {{"count", p.store_units.count}, {"width_bytes", p.store_units.width_bytes}}},
      {"simple_store_agu_present", p.simple_store_agu_present},
      {"general_agus", p.general_agus},
      {"fast_lea_units", p.fast_lea_units},
      {"retire_slots_per_cycle", p.retire_slots_per_cycle},
      {"avx_load_blocks_both_load_units", p.avx_load_blocks_both_load_units},
      {"avx_store_cycles", p.avx_store_cycles},
  };

  json insts = json::array();
  for (const auto& i : md.instruction_table) {
    insts.push_back({{"mnemonic", i.mnemonic},
                     {"width", std::string(to_string(i.width))},
                     {"precision", std::string(to_string(i.precision))},
                     {"latency_cycles", i.latency_cycles},
                     {"inverse_throughput_cycles", i.inverse_throughput_cycles},
                     {"port_class", i.port_class}});
  }
  j["instructions"] = std::move(insts);

  if (md.gather_table) {
    json g = json::object();
    for (const auto& [level, row] : md.gather_table->cycles) {
      for (const auto& [spread, v] : row) g[level][std::to_string(spread)] = v;
    }
    j["gather"] = std::move(g);
  }

  json sp = json::object();
  for (const auto& [mode, prof] : md.snoop_profiles) {
    json pj;
    pj["memory_latency_cycles"] = prof.memory_latency_cycles;
    pj["l3_latency_cycles"] = prof.l3_latency_cycles;
    pj["bandwidth_scale"] = prof.bandwidth_scale;
    sp[std::string(to_string(mode))] = std::move(pj);
  }
  j["snoop_profiles"] = std::move(sp);
  return j;
}

inline std::string serialize_machine(const MachineDescription& md) { return machine_to_json(md).dump(2); }

}  // namespace ecmkit
