#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/kernel.hpp"
#include "ecmkit/machine.hpp"
#include "ecmkit/probe/chain.hpp"
#include "ecmkit/probe/executor.hpp"
#include "ecmkit/probe/result.hpp"
#include "ecmkit/probe/sweep.hpp"

namespace ecmkit::probe {

struct ProbeSettings {
  int repetitions = 21;
};

inline constexpr int default_throughput_chains = 16;

namespace detail {

inline void check_repetitions(const ProbeSettings& s) {
  if (s.repetitions < min_repetitions) {
    throw precondition_error("at least " + std::to_string(min_repetitions) + " repetitions are required");
  }
}

// A real executor must account for the conditions of every value it reports.
inline void check_fingerprint(const Executor& exec, const Environment& env) {
  if (exec.kind() != "real" || env.complete()) return;
  std::string fields;
  for (const auto& m : env.missing()) fields += (fields.empty() ? "" : ", ") + m;
  throw capability_error("environment fingerprint incomplete (" + fields + ")");
}

inline ProbeResult finish(const Executor& exec, std::string name, json params, Measurement m, Statistic s,
                          std::string unit) {
  check_fingerprint(exec, m.environment);
  return make_result(std::move(name), std::move(params), std::move(m.repetitions), s, std::move(unit),
                     std::move(m.environment));
}

}  // namespace detail

inline ProbeResult run_latency_probe(Executor& exec, std::uint64_t working_set_bytes, const ProbeSettings& s = {}) {
  detail::check_repetitions(s);
  const std::uint64_t buffer = working_set_bytes / line_size_bytes * line_size_bytes;
  check_chain_size(buffer, line_size_bytes);
  exec.require({Capability::cycle_counter, Capability::prefetcher_toggle, Capability::core_pinning}, "latency");
  auto m = exec.latency(buffer, s.repetitions);
  return detail::finish(exec, "latency", json{{"working_set_bytes", working_set_bytes}}, std::move(m), Statistic::min,
                        "cy/access");
}

inline ProbeResult run_instruction_probe(Executor& exec, const InstRequest& inst, InstMode mode,
                                         int chains = default_throughput_chains, const ProbeSettings& s = {}) {
  detail::check_repetitions(s);
  if (chains < 1) throw precondition_error("chains must be >= 1");
  if (mode == InstMode::latency) chains = 1;
  exec.require({Capability::cycle_counter, Capability::core_pinning}, "instruction");
  auto m = exec.instruction(inst, mode, chains, s.repetitions);
  json params{{"mnemonic", inst.mnemonic},
              {"width", std::string(to_string(inst.width))},
              {"precision", std::string(to_string(inst.precision))},
              {"mode", mode == InstMode::latency ? "latency" : "throughput"},
              {"chains", chains}};
  return detail::finish(exec, "instruction", std::move(params), std::move(m), Statistic::min, "cy/instruction");
}

inline ProbeResult run_bandwidth_probe(Executor& exec, const KernelDescriptor& k, std::uint64_t working_set_bytes,
                                       int cores, const ProbeSettings& s = {}) {
  detail::check_repetitions(s);
  if (working_set_bytes == 0) throw precondition_error("working_set_bytes must be > 0");
  if (cores < 1) throw precondition_error("cores must be >= 1");
  if (const auto* md = exec.machine(); md && cores > md->cores) {
    throw precondition_error(std::to_string(cores) + " cores oversubscribe " + md->name + " (" +
                             std::to_string(md->cores) + " cores)");
  }
  exec.require({Capability::cycle_counter, Capability::core_pinning}, "bandwidth");
  auto m = exec.bandwidth(k, working_set_bytes, cores, s.repetitions);
  json params{{"kernel", k.name},
              {"isa_width", std::string(to_string(k.isa_width))},
              {"working_set_bytes", working_set_bytes},
              {"cores", cores}};
  auto r = detail::finish(exec, "bandwidth", std::move(params), std::move(m), Statistic::median, "B/cy");
  r.derived["GB/s"] = r.value * *r.environment.core_freq_hz * 1e-9;
  return r;
}

inline double derive_l2_bandwidth(double total_cycles, double load_retire_cycles, double bytes_transferred) {
  if (bytes_transferred <= 0) throw precondition_error("bytes transferred must be > 0");
  const double denominator = total_cycles - load_retire_cycles;
  if (!(denominator > 0)) {
    throw precondition_error("total cycles must exceed load retirement cycles (inputs look mismeasured)");
  }
  return bytes_transferred / denominator;
}

// Measures the raw inputs of the L2 derivation and applies it per repetition.
inline ProbeResult run_l2_bandwidth_probe(Executor& exec, const KernelDescriptor& k, std::uint64_t working_set_bytes,
                                          const ProbeSettings& s = {}) {
  detail::check_repetitions(s);
  exec.require({Capability::cycle_counter, Capability::fixed_counters, Capability::core_pinning}, "l2_raw");
  auto raw = exec.l2_raw(k, working_set_bytes, s.repetitions);
  Measurement m;
  m.environment = raw.environment;
  json samples = json::array();
  for (const auto& r : raw.repetitions) {
    m.repetitions.push_back(derive_l2_bandwidth(r.total_cycles, r.load_retire_cycles, r.bytes));
    samples.push_back({r.total_cycles, r.load_retire_cycles, r.bytes});
  }
  json params{{"kernel", k.name}, {"working_set_bytes", working_set_bytes}, {"raw", std::move(samples)}};
  return detail::finish(exec, "l2_bandwidth", std::move(params), std::move(m), Statistic::median, "B/cy");
}

inline ProbeResult run_gather_probe(Executor& exec, const std::string& source_level, int cl_spread,
                                    const ProbeSettings& s = {}) {
  detail::check_repetitions(s);
  if (std::find(gather_spreads.begin(), gather_spreads.end(), cl_spread) == gather_spreads.end()) {
    throw precondition_error("cl_spread must be 1, 2, 4 or 8");
  }
  exec.require({Capability::cycle_counter, Capability::prefetcher_toggle, Capability::core_pinning}, "gather");
  auto m = exec.gather(source_level, cl_spread, s.repetitions);
  return detail::finish(exec, "gather", json{{"source_level", source_level}, {"cl_spread", cl_spread}}, std::move(m),
                        Statistic::min, "cy/instruction");
}

inline SweepResult run_sweep(Executor& exec, const SweepGrid& grid, const Workload& workload, double dwell_s) {
  if (dwell_s <= 0) throw precondition_error("dwell time must be positive");
  if (grid.size() == 0) throw precondition_error("sweep grid is empty");
  const bool freq_axes = std::any_of(grid.core_freqs_hz.begin(), grid.core_freqs_hz.end(), [](auto v) { return v.has_value(); }) ||
                         std::any_of(grid.uncore_freqs_hz.begin(), grid.uncore_freqs_hz.end(), [](auto v) { return v.has_value(); });
  exec.require({Capability::fixed_counters}, "sweep");
  if (freq_axes) exec.require({Capability::uncore_clamp}, "sweep with frequency axes");
  SweepResult out;
  out.workload = workload.name();
  out.grid = grid;
  out.environment = exec.sweep_environment();
  for (const auto& core : grid.core_freqs_hz) {
    for (const auto& uncore : grid.uncore_freqs_hz) {
      for (int n : grid.cores) out.points.push_back(exec.sweep_point(workload, core, uncore, n, dwell_s));
    }
  }
  return out;
}

inline FrequencyReading observe_effective_frequency(Executor& exec, double duration_s,
                                                    WorkloadClass cls = WorkloadClass::avx,
                                                    std::optional<double> core_hz = std::nullopt) {
  exec.require({Capability::fixed_counters}, "frequency");
  return exec.observe_frequency(duration_s, cls, core_hz);
}

}  // namespace ecmkit::probe
