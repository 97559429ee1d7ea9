#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/kernel.hpp"
#include "ecmkit/machine.hpp"
#include "ecmkit/probe/result.hpp"
#include "ecmkit/probe/sweep.hpp"

namespace ecmkit::probe {

enum class Capability { cycle_counter, fixed_counters, energy_counter, uncore_clamp, prefetcher_toggle, core_pinning };

inline constexpr std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::cycle_counter: return "cycle_counter";
    case Capability::fixed_counters: return "fixed_counters";
    case Capability::energy_counter: return "energy_counter";
    case Capability::uncore_clamp: return "uncore_clamp";
    case Capability::prefetcher_toggle: return "prefetcher_toggle";
    case Capability::core_pinning: return "core_pinning";
  }
  return "?";
}

using CapabilitySet = std::set<Capability>;

inline const CapabilitySet& all_capabilities() {
  static const CapabilitySet all{Capability::cycle_counter,  Capability::fixed_counters,   Capability::energy_counter,
                                 Capability::uncore_clamp,   Capability::prefetcher_toggle, Capability::core_pinning};
  return all;
}

struct InstRequest {
  std::string mnemonic;
  Width width = Width::avx;
  Precision precision = Precision::dp;
};

enum class InstMode { latency, throughput };

// Raw repetitions of one measurement and the conditions they were taken under.
struct Measurement {
  std::vector<double> repetitions;
  Environment environment;
};

struct L2RawSample {
  double total_cycles = 0.0;
  double load_retire_cycles = 0.0;
  double bytes = 0.0;
};

struct L2RawMeasurement {
  std::vector<L2RawSample> repetitions;
  Environment environment;
};

struct FrequencyReading {
  std::vector<double> core_hz;  // one entry per active core
  double uncore_hz = 0.0;
};

// Runs measurement procedures. Implementations produce raw repetitions (warm-up
// runs already discarded); statistics and packaging live in the harness.
class Executor {
 public:
  virtual ~Executor() = default;

  virtual std::string_view kind() const = 0;
  virtual CapabilitySet capabilities() const = 0;
  // Backing description, if the executor has one.
  virtual const MachineDescription* machine() const = 0;

  virtual Measurement latency(std::uint64_t buffer_bytes, int repetitions) = 0;
  virtual Measurement instruction(const InstRequest& inst, InstMode mode, int chains, int repetitions) = 0;
  // Repetitions in bytes per core cycle, summed over cores.
  virtual Measurement bandwidth(const KernelDescriptor& kernel, std::uint64_t working_set_bytes, int cores,
                                int repetitions) = 0;
  virtual L2RawMeasurement l2_raw(const KernelDescriptor& kernel, std::uint64_t working_set_bytes,
                                  int repetitions) = 0;
  virtual Measurement gather(const std::string& source_level, int cl_spread, int repetitions) = 0;
  virtual SweepPoint sweep_point(const Workload& workload, std::optional<double> core_hz,
                                 std::optional<double> uncore_hz, int cores, double dwell_s) = 0;
  virtual Environment sweep_environment() const = 0;
  virtual FrequencyReading observe_frequency(double duration_s, WorkloadClass cls, std::optional<double> core_hz) = 0;

  bool has(Capability c) const { return capabilities().contains(c); }

  void require(std::initializer_list<Capability> needed, std::string_view probe) const {
    std::string missing;
    const auto caps = capabilities();
    for (auto c : needed) {
      if (!caps.contains(c)) missing += (missing.empty() ? "" : ", ") + std::string(to_string(c));
    }
    if (!missing.empty()) {
      throw capability_error(std::string(probe) + " probe on the " + std::string(kind()) + " executor needs " + missing);
    }
  }
};

}  // namespace ecmkit::probe
