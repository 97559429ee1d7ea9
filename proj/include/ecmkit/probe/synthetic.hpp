#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ecmkit/config.hpp"
#include "ecmkit/ecm.hpp"
#include "ecmkit/kernel.hpp"
#include "ecmkit/machine.hpp"
#include "ecmkit/probe/executor.hpp"
#include "ecmkit/probe/noise.hpp"

namespace ecmkit::probe {

struct SyntheticConfig {
  ChipConfig chip;
  NoiseModel noise;
  std::optional<double> core_hz;  // requested core clock for probes; base_hz when absent
  int warmup = 2;
};

// Parallel efficiency of the shared last level at n cores: linear from 1 at one
// core down to the machine's figure at all cores.
inline double shared_level_efficiency(const MachineDescription& md, const ChipConfig& chip, int cores) {
  const auto& last = md.cache_levels.back();
  const double full = tagged_value(last.parallel_efficiency, chip.cod_tag()).value_or(1.0);
  if (md.cores <= 1) return 1.0;
  return 1.0 - (1.0 - full) * (cores - 1) / static_cast<double>(md.cores - 1);
}

// Aggregate data bandwidth (bytes/s at the kernel's data link) of n cores.
inline double kernel_bandwidth(const MachineDescription& md, const ChipConfig& chip, const KernelDescriptor& k,
                               std::uint64_t working_set_bytes, int cores, double core_hz, double uncore_hz) {
  PredictOptions po;
  po.config = chip;
  po.frequency_hz = core_hz;
  po.cores = cores;
  const auto e = predict(k, md, working_set_bytes, po);
  const int level = residence_level(working_set_bytes, md, TrafficOptions{cores, chip.cod});
  const int levels = static_cast<int>(md.cache_levels.size());
  double bw = cores * e.data_bytes_per_iteration * core_hz / e.composed_cycles_per_iteration;
  if (level == levels - 1 && !md.cache_levels.back().per_core) bw *= shared_level_efficiency(md, chip, cores);
  const double mem_bytes = e.transfers.links.back().bytes;
  if (mem_bytes > 0) {
    const double to_data = e.data_bytes_per_iteration / mem_bytes;
    bw = std::min(bw, e.transfers.memory_bandwidth_bytes_per_s * to_data);
    if (md.memory.uncore_bytes_per_cycle) bw = std::min(bw, *md.memory.uncore_bytes_per_cycle * uncore_hz * to_data);
  }
  return bw;
}

// Iterations per second of a profile at an operating point.
inline double profile_rate(const MachineDescription& md, const ChipConfig& chip, const WorkloadProfile& p, int cores,
                           const OperatingPoint& op) {
  double rate = cores * op.core_hz / p.core_cycles_per_iteration;
  if (p.uncore_bytes_per_iteration > 0 && md.memory.uncore_bytes_per_cycle) {
    rate = std::min(rate, *md.memory.uncore_bytes_per_cycle * op.uncore_hz / p.uncore_bytes_per_iteration);
  }
  if (p.memory_bytes_per_iteration > 0) {
    const double mem = memory_bandwidth(md, p.memory_pattern, chip).first;
    rate = std::min(rate, mem / p.memory_bytes_per_iteration);
  }
  return rate;
}

// Simulates every probe from a machine description: the values are what the
// description and the ECM model predict, perturbed by seeded noise.
class SyntheticExecutor final : public Executor {
 public:
  SyntheticExecutor(MachineDescription md, SyntheticConfig config) : md_(std::move(md)), config_(config) {
    validate_noise(config_.noise);
    if (config_.warmup < 0) throw precondition_error("warm-up count must be >= 0");
  }

  std::string_view kind() const override { return "synthetic"; }
  CapabilitySet capabilities() const override { return all_capabilities(); }
  const MachineDescription* machine() const override { return &md_; }
  const SyntheticConfig& config() const { return config_; }

  Measurement latency(std::uint64_t buffer_bytes, int repetitions) override {
    const int level = residence_level(buffer_bytes, md_, TrafficOptions{1, config_.chip.cod});
    const double cy = level < static_cast<int>(md_.cache_levels.size())
                          ? level_latency(md_, static_cast<std::size_t>(level), config_.chip)
                          : memory_latency(md_, config_.chip);
    auto env = environment(1, WorkloadClass::scalar);
    env.prefetchers_on = false;
    return {noisy("latency", cy, repetitions, false), env};
  }

  Measurement instruction(const InstRequest& inst, InstMode mode, int chains, int repetitions) override {
    const auto& spec = lookup_instruction(md_, inst.mnemonic, inst.width, inst.precision);
    const double cy = mode == InstMode::latency
                          ? spec.latency_cycles
                          : std::max(spec.inverse_throughput_cycles, spec.latency_cycles / chains);
    return {noisy("instruction", cy, repetitions, false), environment(1, workload_class_of(inst.width))};
  }

  Measurement bandwidth(const KernelDescriptor& k, std::uint64_t working_set_bytes, int cores,
                        int repetitions) override {
    const auto op = probe_point(workload_class_of(k.isa_width), cores);
    const double bytes_per_s = kernel_bandwidth(md_, config_.chip, k, working_set_bytes, cores, op.core_hz, op.uncore_hz);
    auto env = environment(cores, workload_class_of(k.isa_width));
    return {noisy("bandwidth", bytes_per_s / op.core_hz, repetitions, true), env};
  }

  L2RawMeasurement l2_raw(const KernelDescriptor& k, std::uint64_t working_set_bytes, int repetitions) override {
    const int level = residence_level(working_set_bytes, md_, TrafficOptions{1, config_.chip.cod});
    if (level != 1) throw precondition_error("working set of " + std::to_string(working_set_bytes) + " B does not reside in L2");
    PredictOptions po;
    po.config = config_.chip;
    const auto e = predict(k, md_, working_set_bytes, po);
    const double iterations = std::max<double>(1.0, std::floor(static_cast<double>(working_set_bytes) /
                                                               static_cast<double>(k.elements_per_iteration * 8)));
    const auto totals = noisy("l2_raw", e.composed_cycles_per_iteration * iterations, repetitions, false);
    L2RawMeasurement m;
    m.environment = environment(1, workload_class_of(k.isa_width));
    for (double t : totals) {
      m.repetitions.push_back(L2RawSample{t, e.in_core.t_nonoverlap * iterations,
                                          e.transfers.links.front().bytes * iterations});
    }
    return m;
  }

  Measurement gather(const std::string& source_level, int cl_spread, int repetitions) override {
    if (source_level != memory_level_name && !md_.find_level(source_level)) {
      throw precondition_error("unsupported level '" + source_level + "'");
    }
    const double cy = predict_gather(md_, source_level, cl_spread);
    auto env = environment(1, WorkloadClass::avx);
    env.prefetchers_on = false;
    return {noisy("gather", cy, repetitions, false), env};
  }

  SweepPoint sweep_point(const Workload& w, std::optional<double> core_hz, std::optional<double> uncore_hz, int cores,
                         double dwell_s) override {
    if (w.kind == Workload::Kind::command) {
      throw capability_error("the synthetic executor cannot run external commands");
    }
    const WorkloadClass cls =
        w.kind == Workload::Kind::kernel ? workload_class_of(w.kernel.isa_width) : w.profile.workload_class;
    const auto op = operating_point(md_, cls, cores, core_hz, uncore_hz);
    SweepPoint p;
    p.requested_core_hz = core_hz;
    p.requested_uncore_hz = uncore_hz;
    p.cores = cores;
    if (w.kind == Workload::Kind::kernel) {
      p.performance =
          kernel_bandwidth(md_, config_.chip, w.kernel, w.working_set_bytes, cores, op.core_hz, op.uncore_hz) * 1e-9;
      p.unit = "GB/s";
    } else {
      p.performance = profile_rate(md_, config_.chip, w.profile, cores, op) * w.profile.work_per_iteration * 1e-9;
      p.unit = w.profile.unit;
    }
    NoiseStream noise(config_.noise, "sweep");
    p.performance = noise.symmetric(p.performance);
    p.package_energy_joules = op.package_watts * dwell_s;
    p.duration_s = dwell_s;
    p.observed_core_freq_hz = op.core_hz;
    p.observed_uncore_freq_hz = op.uncore_hz;
    return p;
  }

  Environment sweep_environment() const override {
    auto env = base_environment();
    env.prefetchers_on = true;
    return env;
  }

  FrequencyReading observe_frequency(double duration_s, WorkloadClass cls, std::optional<double> core_hz) override {
    if (duration_s <= 0) throw precondition_error("duration must be positive");
    const auto op = operating_point(md_, cls, md_.cores, core_hz, std::nullopt);
    return FrequencyReading{std::vector<double>(static_cast<std::size_t>(md_.cores), op.core_hz), op.uncore_hz};
  }

 private:
  OperatingPoint probe_point(WorkloadClass cls, int cores) const {
    if (cores < 1 || cores > md_.cores) {
      throw precondition_error(std::to_string(cores) + " cores requested, " + md_.name + " has " +
                               std::to_string(md_.cores));
    }
    return operating_point(md_, cls, cores, config_.core_hz.value_or(md_.frequency.base_hz), std::nullopt);
  }

  Environment base_environment() const {
    Environment env;
    env.executor = "synthetic";
    env.machine = md_.name;
    env.snoop_mode = config_.chip.snoop_mode ? std::string(to_string(*config_.chip.snoop_mode)) : "default";
    env.cod = config_.chip.cod;
    return env;
  }

  Environment environment(int cores, WorkloadClass cls) const {
    auto env = base_environment();
    const auto op = probe_point(cls, cores);
    env.core_freq_hz = op.core_hz;
    env.uncore_freq_hz = op.uncore_hz;
    env.prefetchers_on = true;
    for (int c = 0; c < cores; ++c) env.pinned_cores.push_back(c);
    return env;
  }

  std::vector<double> noisy(std::string_view kind, double value, int repetitions, bool symmetric) const {
    if (repetitions < 1) throw precondition_error("repetitions must be positive");
    NoiseStream noise(config_.noise, kind);
    std::vector<double> out;
    for (int i = 0; i < config_.warmup + repetitions; ++i) {
      const double v = symmetric ? noise.symmetric(value) : noise.slowdown(value);
      if (i >= config_.warmup) out.push_back(v);
    }
    return out;
  }

  MachineDescription md_;
  SyntheticConfig config_;
};

}  // namespace ecmkit::probe
