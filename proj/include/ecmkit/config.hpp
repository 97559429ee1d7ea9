#pragma once

#include <optional>
#include <string>

#include "ecmkit/error.hpp"
#include "ecmkit/machine.hpp"

namespace ecmkit {

// BIOS-level configuration a measurement or prediction refers to.
struct ChipConfig {
  std::optional<SnoopMode> snoop_mode;
  bool cod = false;

  std::string cod_tag() const { return cod ? "cod_on" : "cod_off"; }
  bool operator==(const ChipConfig&) const = default;
};

// DIR implies CoD; without an explicit mode the machine's default applies when it
// is compatible with the requested CoD setting.
inline ChipConfig resolve_config(const MachineDescription& md, std::optional<SnoopMode> snoop,
                                 std::optional<bool> cod) {
  ChipConfig c;
  if (snoop) {
    c.snoop_mode = snoop;
    c.cod = cod.value_or(*snoop == SnoopMode::DIR);
    if (*snoop == SnoopMode::DIR && !c.cod) throw precondition_error("snoop mode DIR requires CoD");
  } else {
    const auto def = md.memory.default_snoop_mode;
    if (cod) {
      c.cod = *cod;
      if (def && (*def == SnoopMode::DIR) == c.cod) c.snoop_mode = def;
    } else {
      c.snoop_mode = def;
      c.cod = def == SnoopMode::DIR;
    }
  }
  if (c.cod && md.numa_domains_per_chip < 2) {
    throw precondition_error(md.name + " has no cluster-on-die mode");
  }
  return c;
}

inline const SnoopProfile* snoop_profile(const MachineDescription& md, const ChipConfig& c) {
  if (!c.snoop_mode) return nullptr;
  auto it = md.snoop_profiles.find(*c.snoop_mode);
  return it == md.snoop_profiles.end() ? nullptr : &it->second;
}

inline double level_latency(const MachineDescription& md, std::size_t level, const ChipConfig& c) {
  const auto& spec = md.cache_levels.at(level);
  if (auto v = tagged_value(spec.latency_cycles, c.cod_tag())) return *v;
  if (level + 1 == md.cache_levels.size()) {
    if (const auto* p = snoop_profile(md, c)) return p->l3_latency_cycles;
  }
  throw Error(ErrorKind::not_found, md.name + " has no " + spec.level_name + " latency for " + c.cod_tag());
}

inline double memory_latency(const MachineDescription& md, const ChipConfig& c) {
  if (const auto* p = snoop_profile(md, c)) return p->memory_latency_cycles;
  const auto& lat = md.memory.latency_cycles;
  if (c.snoop_mode) {
    if (auto it = lat.find(std::string(to_string(*c.snoop_mode))); it != lat.end()) return it->second;
  }
  if (auto it = lat.find("default"); it != lat.end()) return it->second;
  throw Error(ErrorKind::not_found, md.name + " memory latency needs a snoop mode (configure one of its profiles)");
}

// Bandwidth multiplier of the configured snoop mode for an access pattern.
inline double snoop_bandwidth_scale(const MachineDescription& md, const ChipConfig& c, const std::string& pattern) {
  const auto* p = snoop_profile(md, c);
  if (!p) return 1.0;
  if (auto it = p->bandwidth_scale.find(pattern); it != p->bandwidth_scale.end()) return it->second;
  if (auto it = p->bandwidth_scale.find("default"); it != p->bandwidth_scale.end()) return it->second;
  return 1.0;
}

}  // namespace ecmkit
