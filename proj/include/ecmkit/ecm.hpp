#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecmkit/config.hpp"
#include "ecmkit/error.hpp"
#include "ecmkit/json_reader.hpp"
#include "ecmkit/kernel.hpp"
#include "ecmkit/machine.hpp"

namespace ecmkit {

enum class OverlapPolicy { none, full };

inline constexpr std::string_view to_string(OverlapPolicy p) { return p == OverlapPolicy::none ? "none" : "full"; }

inline std::optional<OverlapPolicy> parse_overlap_policy(std::string_view s) {
  if (s == "none") return OverlapPolicy::none;
  if (s == "full") return OverlapPolicy::full;
  return std::nullopt;
}

struct InCoreTime {
  double t_throughput = 0.0;
  double t_critical_path = 0.0;
  double t_overlap = 0.0;     // arithmetic, LEA and retirement
  double t_nonoverlap = 0.0;  // load/store ports and address generation
  double t_agu = 0.0;
  double t_retire = 0.0;
  double fused_uops = 0.0;
  std::map<std::string, double> per_port_cycles;

  bool operator==(const InCoreTime&) const = default;
};

struct IncoreOptions {
  int unroll_depth = 2;  // iterations unrolled when following loop-carried edges
};

namespace detail {

inline double load_unit_cycles(const KernelInstruction& i, const PortModel& p) {
  if (i.width == Width::avx && p.avx_load_blocks_both_load_units) return p.load_units.count;
  const auto bytes = static_cast<double>(register_bytes(i.width, i.precision));
  return std::ceil(bytes / p.load_units.width_bytes);
}

inline double store_unit_cycles(const KernelInstruction& i, const PortModel& p) {
  if (i.width == Width::avx) return p.avx_store_cycles;
  const auto bytes = static_cast<double>(register_bytes(i.width, i.precision));
  return std::ceil(bytes / p.store_units.width_bytes);
}

inline double gather_cycles(const MachineDescription& md) {
  if (!md.gather_table) throw Error(ErrorKind::not_found, md.name + " has no gather table");
  const auto& l1 = md.gather_table->cycles.at(md.cache_levels.front().level_name);
  return l1.at(1);
}

inline double l1_latency(const MachineDescription& md) {
  return tagged_value(md.cache_levels.front().latency_cycles, "default").value_or(1.0);
}

}  // namespace detail

struct AddressCounts {
  double general = 0.0;  // addresses that need a general AGU
  double simple = 0.0;   // store addresses routed to the simple store AGU
};

inline AddressCounts address_counts(const KernelDescriptor& k, const MachineDescription& md) {
  AddressCounts a;
  const bool route_stores = k.uses_lea_trick && md.ports.simple_store_agu_present;
  for (const auto& i : k.instructions) {
    const double n = i.count_per_iteration;
    if (i.mnemonic == mnemonic::load) {
      a.general += n;
    } else if (i.mnemonic == mnemonic::store || i.mnemonic == mnemonic::nt_store) {
      (route_stores ? a.simple : a.general) += n;
    }
  }
  return a;
}

inline double agu_bound(const KernelDescriptor& k, const MachineDescription& md) {
  const auto a = address_counts(k, md);
  const double simple_units = md.ports.simple_store_agu_present ? 1.0 : 0.0;
  double t = a.general / md.ports.general_agus;
  if (a.simple > 0) t = std::max(t, a.simple / simple_units);
  return t;
}

// Longest latency chain over `iterations` unrolled copies of the body.
inline double dependency_chain_length(const KernelDescriptor& k, const MachineDescription& md, int iterations) {
  const auto n = k.instructions.size();
  std::vector<double> lat(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = k.instructions[i];
    if (inst.mnemonic == mnemonic::load) {
      lat[i] = detail::l1_latency(md);
    } else if (inst.mnemonic == mnemonic::gather) {
      lat[i] = detail::gather_cycles(md);
    } else if (is_port_model_mnemonic(inst.mnemonic)) {
      lat[i] = 1.0;
    } else {
      lat[i] = lookup_instruction(md, inst.mnemonic, inst.width, inst.precision).latency_cycles;
    }
  }
  // Topological order of the intra-iteration DAG.
  std::vector<std::size_t> order;
  std::vector<int> state(n, 0);
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    state[v] = 1;
    for (int d : k.instructions[v].depends_on) {
      if (state[static_cast<std::size_t>(d)] == 0) visit(static_cast<std::size_t>(d));
    }
    state[v] = 2;
    order.push_back(v);
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (state[i] == 0) visit(i);
  }
  std::vector<double> prev(n, 0.0), cur(n, 0.0);
  double longest = 0.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t v : order) {
      if (k.instructions[v].count_per_iteration == 0) {
        cur[v] = 0.0;
        continue;
      }
      double start = 0.0;
      for (int d : k.instructions[v].depends_on) start = std::max(start, cur[static_cast<std::size_t>(d)]);
      if (it > 0) {
        for (int d : k.instructions[v].carried_from) start = std::max(start, prev[static_cast<std::size_t>(d)]);
      }
      cur[v] = start + lat[v];
      longest = std::max(longest, cur[v]);
    }
    prev = cur;
  }
  return longest;
}

inline InCoreTime incore_time(const KernelDescriptor& k, const MachineDescription& md, const IncoreOptions& opts = {}) {
  const auto& p = md.ports;
  InCoreTime t;
  double load_unit = 0.0;
  double store_unit = 0.0;
  double lea = 0.0;
  double uops = 0.0;
  for (const auto& i : k.instructions) {
    const double n = i.count_per_iteration;
    uops += n;
    if (i.mnemonic == mnemonic::load) {
      load_unit += n * detail::load_unit_cycles(i, p);
    } else if (i.mnemonic == mnemonic::store || i.mnemonic == mnemonic::nt_store) {
      store_unit += n * detail::store_unit_cycles(i, p);
    } else if (i.mnemonic == mnemonic::lea) {
      lea += n;
    } else if (i.mnemonic == mnemonic::gather) {
      t.per_port_cycles["gather"] += n * detail::gather_cycles(md);
    } else {
      const auto& spec = lookup_instruction(md, i.mnemonic, i.width, i.precision);
      t.per_port_cycles[spec.port_class] += n * spec.inverse_throughput_cycles;
    }
  }
  uops += 2.0 / k.unroll;  // loop counter increment and fused compare-and-branch
  t.fused_uops = uops;

  const double t_load = load_unit / p.load_units.count;
  const double t_store = store_unit / p.store_units.count;
  t.t_agu = agu_bound(k, md);
  t.t_retire = uops / p.retire_slots_per_cycle;
  const double t_lea = lea / std::max(1, p.fast_lea_units);
  t.per_port_cycles["load"] = t_load;
  t.per_port_cycles["store"] = t_store;
  t.per_port_cycles["agu"] = t.t_agu;
  t.per_port_cycles["retire"] = t.t_retire;
  if (lea > 0) t.per_port_cycles["lea"] = t_lea;

  t.t_nonoverlap = std::max({t_load, t_store, t.t_agu});
  t.t_overlap = std::max(t.t_retire, t_lea);
  for (const auto& [cls, cy] : t.per_port_cycles) {
    if (cls != "load" && cls != "store" && cls != "agu") t.t_overlap = std::max(t.t_overlap, cy);
  }
  t.t_throughput = std::max(t.t_overlap, t.t_nonoverlap);

  const int depth = std::max(1, opts.unroll_depth);
  const double l1 = dependency_chain_length(k, md, 1);
  const double lu = dependency_chain_length(k, md, depth) / depth;
  t.t_critical_path = std::max({l1, lu, t.t_throughput});
  return t;
}

// ---------------------------------------------------------------------------
// Transfers

struct LinkTime {
  std::string name;
  double bytes = 0.0;
  double bandwidth_bytes_per_cycle = 0.0;
  double cycles = 0.0;

  bool operator==(const LinkTime&) const = default;
};

struct TransferTimes {
  std::vector<LinkTime> links;  // L1-L2 outward; Reg-L1 is part of the in-core time
  bool memory_bandwidth_fallback = false;
  double memory_bandwidth_bytes_per_s = 0.0;

  double total() const {
    double s = 0.0;
    for (const auto& l : links) s += l.cycles;
    return s;
  }
  double cycles(std::string_view link) const {
    for (const auto& l : links) {
      if (l.name == link) return l.cycles;
    }
    return 0.0;
  }
};

struct TransferOptions {
  std::optional<double> frequency_hz;  // core clock for converting memory bandwidth; base_hz when absent
  std::string pattern = "default";
  ChipConfig config;
  bool apply_derate = true;
};

// Sustained memory bandwidth for a pattern under the configured snoop mode.
inline std::pair<double, bool> memory_bandwidth(const MachineDescription& md, const std::string& pattern,
                                                const ChipConfig& config) {
  const auto& s = md.memory.sustained_bw_bytes_per_s;
  if (auto it = s.find(pattern); it != s.end()) {
    return {it->second * snoop_bandwidth_scale(md, config, pattern), false};
  }
  return {md.memory.theoretical_bw_bytes_per_s, true};
}

inline TransferTimes transfer_times(const TrafficProfile& traffic, const MachineDescription& md,
                                    const TransferOptions& opts = {}) {
  const auto names = link_names(md);
  if (traffic.links.size() != names.size()) {
    throw precondition_error("traffic profile has " + std::to_string(traffic.links.size()) + " links, " + md.name +
                             " has " + std::to_string(names.size()));
  }
  const double f = opts.frequency_hz.value_or(md.frequency.base_hz);
  TransferTimes out;
  const std::size_t levels = md.cache_levels.size();
  for (std::size_t k = 1; k <= levels; ++k) {
    if (traffic.links[k].name != names[k]) throw precondition_error("unknown link " + traffic.links[k].name);
    LinkTime lt;
    lt.name = names[k];
    lt.bytes = traffic.links[k].total();
    if (k < levels) {
      const auto& inner = md.cache_levels[k - 1];
      lt.bandwidth_bytes_per_cycle =
          *inner.inter_level_bytes_per_cycle * (opts.apply_derate ? derate_for(inner, opts.pattern) : 1.0);
    } else {
      auto [bw, fallback] = memory_bandwidth(md, opts.pattern, opts.config);
      out.memory_bandwidth_fallback = fallback;
      out.memory_bandwidth_bytes_per_s = bw;
      lt.bandwidth_bytes_per_cycle = bw / f;
    }
    lt.cycles = lt.bytes / lt.bandwidth_bytes_per_cycle;
    out.links.push_back(std::move(lt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composition

struct EcmPrediction {
  std::string kernel;
  std::string machine;
  std::uint64_t working_set_bytes = 0;
  OverlapPolicy overlap_policy = OverlapPolicy::none;
  InCoreTime in_core;
  TransferTimes transfers;
  double composed_cycles_per_iteration = 0.0;
  std::string data_link;  // outermost link carrying traffic; bandwidth is reported there
  double data_bytes_per_iteration = 0.0;
  double predicted_bandwidth_bytes_per_cycle = 0.0;
  double frequency_hz = 0.0;
  double predicted_bandwidth_bytes_per_s = 0.0;
  int n_saturation = 1;
  std::string access_pattern;
  ChipConfig config;
};

// Without a memory term the loop never saturates within `cores_available`.
inline EcmPrediction compose(const InCoreTime& in_core, const TransferTimes& transfers, OverlapPolicy policy,
                             int cores_available = 1) {
  EcmPrediction e;
  e.in_core = in_core;
  e.transfers = transfers;
  e.overlap_policy = policy;
  if (policy == OverlapPolicy::none) {
    e.composed_cycles_per_iteration = std::max(in_core.t_overlap, in_core.t_nonoverlap + transfers.total());
  } else {
    double t = in_core.t_throughput;
    for (const auto& l : transfers.links) t = std::max(t, l.cycles);
    e.composed_cycles_per_iteration = t;
  }
  const double t_mem = transfers.links.empty() ? 0.0 : transfers.links.back().cycles;
  if (t_mem > 0) {
    e.n_saturation = std::max(1, static_cast<int>(std::ceil(e.composed_cycles_per_iteration / t_mem - 1e-9)));
  } else {
    e.n_saturation = std::max(1, cores_available);
  }
  return e;
}

struct PredictOptions {
  OverlapPolicy policy = OverlapPolicy::none;
  ChipConfig config;
  std::optional<double> frequency_hz;
  bool apply_derate = true;
  int unroll_depth = 2;
  int cores = 1;
};

inline EcmPrediction predict(const KernelDescriptor& k, const MachineDescription& md, std::uint64_t working_set_bytes,
                             const PredictOptions& opts = {}) {
  const auto ic = incore_time(k, md, IncoreOptions{opts.unroll_depth});
  const auto tp = traffic_profile(k, working_set_bytes, md, TrafficOptions{opts.cores, opts.config.cod});
  TransferOptions to;
  to.frequency_hz = opts.frequency_hz;
  to.pattern = k.access_pattern;
  to.config = opts.config;
  to.apply_derate = opts.apply_derate;
  auto e = compose(ic, transfer_times(tp, md, to), opts.policy, md.cores);
  e.kernel = k.name;
  e.machine = md.name;
  e.working_set_bytes = working_set_bytes;
  e.access_pattern = k.access_pattern;
  e.config = opts.config;
  for (const auto& l : tp.links) {
    if (l.total() > 0) {
      e.data_link = l.name;
      e.data_bytes_per_iteration = l.total();
    }
  }
  e.frequency_hz = opts.frequency_hz.value_or(md.frequency.base_hz);
  if (e.composed_cycles_per_iteration > 0) {
    e.predicted_bandwidth_bytes_per_cycle = e.data_bytes_per_iteration / e.composed_cycles_per_iteration;
  }
  e.predicted_bandwidth_bytes_per_s = e.predicted_bandwidth_bytes_per_cycle * e.frequency_hz;
  return e;
}

inline bool is_memory_bound_prediction(const EcmPrediction& e) {
  return !e.transfers.links.empty() && e.transfers.links.back().bytes > 0;
}

struct ScalingPoint {
  int cores = 1;
  double bandwidth_bytes_per_s = 0.0;
  int n_saturation = 1;
};

inline ScalingPoint scaling_prediction(const EcmPrediction& e, int cores, bool cap = true) {
  if (cores < 1) throw precondition_error("cores must be >= 1");
  if (!is_memory_bound_prediction(e)) throw precondition_error("scaling needs a prediction for an in-memory working set");
  ScalingPoint s;
  s.cores = cores;
  s.n_saturation = e.n_saturation;
  s.bandwidth_bytes_per_s = cores * e.predicted_bandwidth_bytes_per_s;
  if (cap) s.bandwidth_bytes_per_s = std::min(s.bandwidth_bytes_per_s, e.transfers.memory_bandwidth_bytes_per_s);
  return s;
}

// {T_OL || T_nOL | T_L1L2 | T_L2L3 | T_L3Mem} cy/it
inline std::string ecm_notation(const EcmPrediction& e) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "{%.2f || %.2f", e.in_core.t_overlap, e.in_core.t_nonoverlap);
  std::string s = buf;
  for (const auto& l : e.transfers.links) {
    std::snprintf(buf, sizeof buf, " | %.2f", l.cycles);
    s += buf;
  }
  return s + "} cy/it";
}

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline json prediction_to_json(const EcmPrediction& e, bool rounded = false) {
  auto r = [rounded](double v) { return rounded ? round2(v) : v; };
  json ic{{"t_throughput_cycles_per_iteration", r(e.in_core.t_throughput)},
          {"t_critical_path_cycles_per_iteration", r(e.in_core.t_critical_path)},
          {"t_overlap_cycles", r(e.in_core.t_overlap)},
          {"t_nonoverlap_cycles", r(e.in_core.t_nonoverlap)},
          {"t_agu_cycles", r(e.in_core.t_agu)},
          {"t_retire_cycles", r(e.in_core.t_retire)},
          {"fused_uops", r(e.in_core.fused_uops)}};
  json ports = json::object();
  for (const auto& [k, v] : e.in_core.per_port_cycles) ports[k] = r(v);
  ic["per_port_cycles"] = std::move(ports);
  json tr = json::object();
  for (const auto& l : e.transfers.links) tr[l.name] = r(l.cycles);
  json j{{"kernel", e.kernel},
         {"machine", e.machine},
         {"working_set_bytes", e.working_set_bytes},
         {"access_pattern", e.access_pattern},
         {"overlap_policy", std::string(to_string(e.overlap_policy))},
         {"in_core", std::move(ic)},
         {"transfer_cycles", std::move(tr)},
         {"composed_cycles_per_iteration", r(e.composed_cycles_per_iteration)},
         {"data_link", e.data_link},
         {"data_bytes_per_iteration", e.data_bytes_per_iteration},
         {"predicted_bandwidth_bytes_per_cycle", r(e.predicted_bandwidth_bytes_per_cycle)},
         {"predicted_bandwidth_bytes_per_s", r(e.predicted_bandwidth_bytes_per_s)},
         {"frequency_hz", e.frequency_hz},
         {"n_saturation", e.n_saturation},
         {"cod", e.config.cod},
         {"ecm_notation", ecm_notation(e)}};
  if (e.config.snoop_mode) j["snoop_mode"] = std::string(to_string(*e.config.snoop_mode));
  if (e.transfers.memory_bandwidth_fallback) j["warnings"] = json::array({"memory bandwidth for pattern '" + e.access_pattern + "' missing; theoretical value used"});
  return j;
}

// ---------------------------------------------------------------------------
// Gather

inline double predict_gather(const MachineDescription& md, std::string_view source_level, int cl_spread) {
  if (!md.gather_table) throw Error(ErrorKind::not_found, md.name + " has no gather table");
  if (std::find(gather_spreads.begin(), gather_spreads.end(), cl_spread) == gather_spreads.end()) {
    throw precondition_error("cl_spread must be 1, 2, 4 or 8");
  }
  const bool is_mem = source_level == memory_level_name;
  std::size_t level = 0;
  if (!is_mem) {
    const auto* spec = md.find_level(source_level);
    if (!spec) throw precondition_error("unknown level '" + std::string(source_level) + "'");
    level = static_cast<std::size_t>(spec - md.cache_levels.data());
  }
  const auto& table = md.gather_table->cycles;
  if (auto it = table.find(std::string(source_level)); it != table.end()) {
    if (auto cell = it->second.find(cl_spread); cell != it->second.end()) return cell->second;
  }
  // Off-table: each touched line pays the inbound link time; latency is hidden
  // behind the ten line fill buffers.
  const double intrinsic = detail::gather_cycles(md);
  if (!is_mem && level == 0) return intrinsic;
  const ChipConfig config = resolve_config(md, std::nullopt, std::nullopt);
  double line_time = 0.0;
  double latency = 0.0;
  if (is_mem) {
    line_time = static_cast<double>(line_size_bytes) /
                (md.memory.theoretical_bw_bytes_per_s / md.frequency.base_hz);
    latency = memory_latency(md, config);
  } else {
    line_time = static_cast<double>(line_size_bytes) / *md.cache_levels[level - 1].inter_level_bytes_per_cycle;
    latency = level_latency(md, level, config);
  }
  return std::max(intrinsic, cl_spread * line_time + latency / 10.0);
}

}  // namespace ecmkit
