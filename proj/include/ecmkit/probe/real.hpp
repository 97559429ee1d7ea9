#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ecmkit/probe/chain.hpp"
#include "ecmkit/probe/executor.hpp"

#if defined(__linux__)
#include <fcntl.h>
#include <linux/perf_event.h>
#include <sched.h>
#include <sys/ioctl.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

#if defined(__x86_64__)
#include <immintrin.h>
#include <x86intrin.h>
#endif

namespace ecmkit::probe {

// ---------------------------------------------------------------------------
// Platform pieces that are useful without hardware access

struct PerfFigure {
  double value = 0.0;
  std::string unit;
};

// External workloads report their result as `PERF <float> <unit>` on the last
// non-empty output line.
inline std::optional<PerfFigure> parse_perf_line(const std::string& output) {
  std::istringstream in(output);
  std::string line, last;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
  }
  std::istringstream ls(last);
  std::string tag, number, unit, extra;
  if (!(ls >> tag >> number >> unit) || tag != "PERF" || (ls >> extra)) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(number, &used);
    if (used != number.size() || !std::isfinite(v)) return std::nullopt;
    return PerfFigure{v, unit};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Package energy counters wrap at max_range; a single wrap between reads is assumed.
inline std::uint64_t energy_delta_uj(std::uint64_t before, std::uint64_t after, std::uint64_t max_range) {
  if (after >= before) return after - before;
  return max_range - before + after + 1;
}

class PowercapEnergy {
 public:
  explicit PowercapEnergy(std::filesystem::path zone = "/sys/class/powercap/intel-rapl:0") : zone_(std::move(zone)) {}

  bool available() const { return read_value("energy_uj").has_value() && read_value("max_energy_range_uj").has_value(); }

  std::uint64_t read_uj() const {
    auto v = read_value("energy_uj");
    if (!v) throw capability_error("energy_counter (cannot read " + (zone_ / "energy_uj").string() + ")");
    return *v;
  }

  double joules_between(std::uint64_t before, std::uint64_t after) const {
    return static_cast<double>(energy_delta_uj(before, after, read_value("max_energy_range_uj").value_or(UINT64_MAX))) *
           1e-6;
  }

 private:
  std::optional<std::uint64_t> read_value(const char* file) const {
    std::ifstream in(zone_ / file);
    std::uint64_t v = 0;
    if (!(in >> v)) return std::nullopt;
    return v;
  }

  std::filesystem::path zone_;
};

inline std::string run_command(const std::string& command, int& status) {
  std::string out;
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) throw Error(ErrorKind::runtime, "cannot start '" + command + "'");
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  status = ::pclose(pipe);
  return out;
}

namespace real_detail {

#if defined(__x86_64__)
inline std::uint64_t tsc() { return __rdtsc(); }
inline constexpr bool has_tsc = true;
#else
inline std::uint64_t tsc() { return 0; }
inline constexpr bool has_tsc = false;
#endif

inline std::vector<int> allowed_cpus() {
  std::vector<int> cpus;
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof set, &set) == 0) {
    for (int c = 0; c < CPU_SETSIZE; ++c) {
      if (CPU_ISSET(c, &set)) cpus.push_back(c);
    }
  }
#endif
  return cpus;
}

inline bool pin_current_thread(int cpu) {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return sched_setaffinity(0, sizeof set, &set) == 0;
#else
  (void)cpu;
  return false;
#endif
}

// Core-cycle counter of the calling thread.
class CycleCounter {
 public:
  CycleCounter() {
#if defined(__linux__)
    perf_event_attr attr{};
    attr.type = PERF_TYPE_HARDWARE;
    attr.size = sizeof attr;
    attr.config = PERF_COUNT_HW_CPU_CYCLES;
    attr.exclude_kernel = 1;
    attr.exclude_hv = 1;
    fd_ = static_cast<int>(syscall(SYS_perf_event_open, &attr, 0, -1, -1, 0));
#endif
  }
  ~CycleCounter() {
#if defined(__linux__)
    if (fd_ >= 0) ::close(fd_);
#endif
  }
  CycleCounter(const CycleCounter&) = delete;
  CycleCounter& operator=(const CycleCounter&) = delete;

  bool ok() const { return fd_ >= 0; }

  std::uint64_t read() const {
    std::uint64_t v = 0;
#if defined(__linux__)
    if (fd_ < 0 || ::read(fd_, &v, sizeof v) != sizeof v) return 0;
#endif
    return v;
  }

 private:
  int fd_ = -1;
};

class Msr {
 public:
  explicit Msr(int cpu) {
#if defined(__linux__)
    fd_ = ::open(("/dev/cpu/" + std::to_string(cpu) + "/msr").c_str(), O_RDWR);
#else
    (void)cpu;
#endif
  }
  ~Msr() {
#if defined(__linux__)
    if (fd_ >= 0) ::close(fd_);
#endif
  }
  Msr(const Msr&) = delete;
  Msr& operator=(const Msr&) = delete;

  bool ok() const { return fd_ >= 0; }

  std::optional<std::uint64_t> read(std::uint32_t reg) const {
    std::uint64_t v = 0;
#if defined(__linux__)
    if (fd_ >= 0 && ::pread(fd_, &v, sizeof v, reg) == sizeof v) return v;
#else
    (void)reg;
#endif
    return std::nullopt;
  }

  bool write(std::uint32_t reg, std::uint64_t v) const {
#if defined(__linux__)
    return fd_ >= 0 && ::pwrite(fd_, &v, sizeof v, reg) == sizeof v;
#else
    (void)reg;
    (void)v;
    return false;
#endif
  }

 private:
  int fd_ = -1;
};

inline constexpr std::uint32_t msr_perf_ctl = 0x199;
inline constexpr std::uint32_t msr_prefetch_control = 0x1a4;
inline constexpr std::uint32_t msr_uncore_ratio_limit = 0x620;
inline constexpr std::uint32_t msr_uncore_perf_status = 0x621;
inline constexpr double bus_clock_hz = 100e6;

inline double tsc_hz() {
  static const double hz = [] {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const auto c0 = tsc();
    while (clock::now() - t0 < std::chrono::milliseconds(50)) {
    }
    const auto c1 = tsc();
    const std::chrono::duration<double> dt = clock::now() - t0;
    return static_cast<double>(c1 - c0) / dt.count();
  }();
  return hz;
}

inline int numa_nodes() {
  int n = 0;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator("/sys/devices/system/node", ec)) {
    const auto name = e.path().filename().string();
    if (name.rfind("node", 0) == 0 && name.size() > 4 && std::isdigit(static_cast<unsigned char>(name[4]))) ++n;
  }
  return std::max(n, 1);
}

inline int sockets() {
  std::ifstream in("/proc/cpuinfo");
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("physical id", 0) == 0) ids.insert(line);
  }
  return std::max<int>(1, static_cast<int>(ids.size()));
}

template <class T>
struct AlignedBuffer {
  explicit AlignedBuffer(std::size_t n) : size(n), data(static_cast<T*>(std::aligned_alloc(64, round_up(n * sizeof(T))))) {
    if (!data) throw Error(ErrorKind::runtime, "allocation of " + std::to_string(n * sizeof(T)) + " B failed");
  }
  ~AlignedBuffer() { std::free(data); }
  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;
  static std::size_t round_up(std::size_t b) { return (b + 63) / 64 * 64; }
  std::size_t size;
  T* data;
};

// Streaming kernel bodies over n doubles; returns a value so the work cannot be elided.
inline double stream_kernel(std::string_view name, double* a, const double* b, const double* c, std::size_t n) {
  const double s = 1.000001;
  double acc = 0.0;
  if (name == "triad" || name == "triad_lea") {
    for (std::size_t i = 0; i < n; ++i) a[i] = b[i] + s * c[i];
  } else if (name == "triad_noarith") {
    for (std::size_t i = 0; i < n; ++i) a[i] = b[i] + c[i];
  } else if (name == "dot") {
    for (std::size_t i = 0; i < n; ++i) acc += a[i] + b[i];
  } else if (name == "load_only") {
    for (std::size_t i = 0; i < n; ++i) acc += a[i] + b[i];
  } else if (name == "copy") {
    for (std::size_t i = 0; i < n; ++i) a[i] = b[i];
  } else if (name == "store_only") {
    for (std::size_t i = 0; i < n; ++i) a[i] = s;
  } else if (name == "update") {
    for (std::size_t i = 0; i < n; ++i) a[i] = s * a[i];
  } else if (name == "daxpy") {
    for (std::size_t i = 0; i < n; ++i) a[i] = a[i] + s * b[i];
  } else if (name == "nt_store") {
#if defined(__x86_64__)
    for (std::size_t i = 0; i + 2 <= n; i += 2) _mm_stream_pd(a + i, _mm_set1_pd(s));
    _mm_sfence();
#else
    for (std::size_t i = 0; i < n; ++i) a[i] = s;
#endif
  } else {
    throw capability_error("kernel '" + std::string(name) + "' has no real-hardware body");
  }
  return acc + a[0];
}

inline int stream_arrays(std::string_view name) {
  if (name == "store_only" || name == "update" || name == "nt_store") return 1;
  if (name == "dot" || name == "load_only" || name == "copy" || name == "daxpy") return 2;
  return 3;
}

}  // namespace real_detail

// Runs probes on the host. Every probe checks the capabilities it needs; values
// are only returned together with a fully populated environment fingerprint.
class RealExecutor final : public Executor {
 public:
  RealExecutor() { detect(); }

  std::string_view kind() const override { return "real"; }
  CapabilitySet capabilities() const override { return caps_; }
  const MachineDescription* machine() const override { return nullptr; }

  Environment fingerprint(const std::vector<int>& pinned) const {
    Environment env;
    env.executor = "real";
    env.machine = host_name();
    env.pinned_cores = pinned;
    if (caps_.contains(Capability::fixed_counters)) env.core_freq_hz = measure_core_hz();
    real_detail::Msr msr(pinned.empty() ? 0 : pinned.front());
    if (auto v = msr.read(real_detail::msr_uncore_perf_status)) {
      env.uncore_freq_hz = static_cast<double>(*v & 0x7f) * real_detail::bus_clock_hz;
    }
    if (auto v = msr.read(real_detail::msr_prefetch_control)) env.prefetchers_on = (*v & 0xf) == 0;
    env.snoop_mode = "unreported";
    env.cod = real_detail::numa_nodes() > real_detail::sockets();
    return env;
  }

  Measurement latency(std::uint64_t buffer_bytes, int repetitions) override {
    require({Capability::cycle_counter, Capability::prefetcher_toggle, Capability::core_pinning}, "latency");
    const int cpu = first_cpu();
    real_detail::pin_current_thread(cpu);
    PrefetcherGuard off(cpu);
    const auto chain = build_pointer_chain(buffer_bytes, ChainLayout::consecutive_cl);
    const std::size_t stride = chain.line_size / sizeof(std::uintptr_t);
    std::vector<std::uintptr_t> buf(chain.lines() * stride);
    for (std::size_t i = 0; i < chain.lines(); ++i) {
      buf[i * stride] = reinterpret_cast<std::uintptr_t>(&buf[chain.next[i] * stride]);
    }
    const std::size_t steps = std::max<std::size_t>(chain.lines() * 4, 1u << 20);
    const double base_per_tsc = 1.0;  // TSC ticks at the nominal clock, i.e. base-frequency cycles
    std::vector<double> reps;
    for (int r = 0; r < repetitions + 2; ++r) {
      auto* p = reinterpret_cast<std::uintptr_t*>(buf[0]);
      const auto t0 = real_detail::tsc();
      for (std::size_t s = 0; s < steps; ++s) p = reinterpret_cast<std::uintptr_t*>(*p);
      const auto t1 = real_detail::tsc();
      sink_ += reinterpret_cast<std::uintptr_t>(p);
      if (r >= 2) reps.push_back(static_cast<double>(t1 - t0) * base_per_tsc / static_cast<double>(steps));
    }
    auto env = fingerprint({cpu});
    env.prefetchers_on = false;
    return {std::move(reps), env};
  }

  Measurement instruction(const InstRequest& inst, InstMode, int, int) override {
    require({Capability::cycle_counter, Capability::fixed_counters, Capability::core_pinning}, "instruction");
    throw capability_error("no real-hardware instruction kernel for " + inst.mnemonic + "/" +
                           std::string(to_string(inst.width)) + "/" + std::string(to_string(inst.precision)));
  }

  Measurement bandwidth(const KernelDescriptor& k, std::uint64_t working_set_bytes, int cores,
                        int repetitions) override {
    require({Capability::cycle_counter, Capability::fixed_counters, Capability::core_pinning}, "bandwidth");
    const auto cpus = real_detail::allowed_cpus();
    if (cores < 1 || cores > static_cast<int>(cpus.size())) {
      throw precondition_error(std::to_string(cores) + " cores requested, " + std::to_string(cpus.size()) +
                               " available");
    }
    const int arrays = real_detail::stream_arrays(k.name);
    const std::size_t per_core = std::max<std::size_t>(working_set_bytes / cores / arrays / sizeof(double), 64);
    double bytes_per_element = 0.0;
    for (const auto& st : k.streams) bytes_per_element += static_cast<double>(st.bytes_per_element);
    const double core_hz = measure_core_hz();
    std::vector<double> reps;
    for (int r = 0; r < repetitions + 2; ++r) {
      std::vector<double> seconds(static_cast<std::size_t>(cores));
      std::vector<std::thread> workers;
      for (int t = 0; t < cores; ++t) {
        workers.emplace_back([&, t] {
          real_detail::pin_current_thread(cpus[static_cast<std::size_t>(t)]);
          real_detail::AlignedBuffer<double> a(per_core), b(per_core), c(per_core);
          std::fill_n(a.data, per_core, 1.0);
          std::fill_n(b.data, per_core, 2.0);
          std::fill_n(c.data, per_core, 3.0);
          const std::size_t sweeps = std::max<std::size_t>(1, (std::size_t{1} << 26) / per_core);
          real_detail::stream_kernel(k.name, a.data, b.data, c.data, per_core);
          const auto t0 = std::chrono::steady_clock::now();
          double sink = 0.0;
          for (std::size_t s = 0; s < sweeps; ++s) sink += real_detail::stream_kernel(k.name, a.data, b.data, c.data, per_core);
          const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
          seconds[static_cast<std::size_t>(t)] = dt.count() / static_cast<double>(sweeps);
          if (sink == 42.0) std::fputs("", stderr);
        });
      }
      for (auto& w : workers) w.join();
      const double slowest = *std::max_element(seconds.begin(), seconds.end());
      const double bytes = bytes_per_element * static_cast<double>(per_core) * cores;
      if (r >= 2) reps.push_back(bytes / slowest / core_hz);
    }
    std::vector<int> pinned(cpus.begin(), cpus.begin() + cores);
    return {std::move(reps), fingerprint(pinned)};
  }

  L2RawMeasurement l2_raw(const KernelDescriptor&, std::uint64_t, int) override {
    require({Capability::cycle_counter, Capability::fixed_counters, Capability::core_pinning}, "l2_raw");
    throw capability_error("load-retirement cycle counting is not available on this host");
  }

  Measurement gather(const std::string&, int, int) override {
    require({Capability::cycle_counter, Capability::prefetcher_toggle, Capability::core_pinning}, "gather");
    throw capability_error("no real-hardware gather kernel on this host");
  }

  SweepPoint sweep_point(const Workload& w, std::optional<double> core_hz, std::optional<double> uncore_hz, int cores,
                         double dwell_s) override {
    require({Capability::fixed_counters}, "sweep");
    if (core_hz || uncore_hz) require({Capability::uncore_clamp}, "sweep with frequency axes");
    const int cpu = first_cpu();
    real_detail::Msr msr(cpu);
    if (uncore_hz) {
      const auto ratio = static_cast<std::uint64_t>(std::lround(*uncore_hz / real_detail::bus_clock_hz)) & 0x7f;
      if (!msr.write(real_detail::msr_uncore_ratio_limit, ratio | (ratio << 8))) {
        throw Error(ErrorKind::runtime, "uncore clamp rejected by the platform");
      }
    }
    if (core_hz) {
      const auto ratio = static_cast<std::uint64_t>(std::lround(*core_hz / real_detail::bus_clock_hz)) & 0xff;
      if (!msr.write(real_detail::msr_perf_ctl, ratio << 8)) throw Error(ErrorKind::runtime, "core clock request rejected");
    }
    PowercapEnergy energy;
    const bool have_energy = caps_.contains(Capability::energy_counter);
    const auto e0 = have_energy ? energy.read_uj() : 0;
    const auto t0 = std::chrono::steady_clock::now();
    SweepPoint p;
    p.requested_core_hz = core_hz;
    p.requested_uncore_hz = uncore_hz;
    p.cores = cores;
    if (w.kind == Workload::Kind::command) {
      int status = 0;
      const auto out = run_command(w.command, status);
      auto fig = parse_perf_line(out);
      if (status != 0 || !fig) throw Error(ErrorKind::runtime, "workload '" + w.command + "' did not report a PERF figure");
      p.performance = fig->value;
      p.unit = fig->unit;
    } else if (w.kind == Workload::Kind::kernel) {
      const auto m = bandwidth(w.kernel, w.working_set_bytes, cores, min_repetitions);
      p.performance = apply_statistic(Statistic::median, m.repetitions) * *m.environment.core_freq_hz * 1e-9;
      p.unit = "GB/s";
    } else {
      throw capability_error("synthetic workload profiles only run on the synthetic executor");
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    if (dt.count() < dwell_s) std::this_thread::sleep_for(std::chrono::duration<double>(dwell_s - dt.count()));
    const std::chrono::duration<double> total = std::chrono::steady_clock::now() - t0;
    p.duration_s = total.count();
    if (have_energy) p.package_energy_joules = energy.joules_between(e0, energy.read_uj());
    const auto env = fingerprint({cpu});
    p.observed_core_freq_hz = env.core_freq_hz.value_or(0.0);
    p.observed_uncore_freq_hz = env.uncore_freq_hz.value_or(0.0);
    return p;
  }

  Environment sweep_environment() const override { return fingerprint({first_cpu()}); }

  FrequencyReading observe_frequency(double duration_s, WorkloadClass, std::optional<double>) override {
    require({Capability::fixed_counters}, "frequency");
    if (duration_s <= 0) throw precondition_error("duration must be positive");
    FrequencyReading f;
    f.core_hz.push_back(measure_core_hz(duration_s));
    const auto env = fingerprint({first_cpu()});
    if (!env.uncore_freq_hz) throw capability_error("uncore frequency readout needs model-specific register access");
    f.uncore_hz = *env.uncore_freq_hz;
    return f;
  }

 private:
  void detect() {
    if (real_detail::has_tsc) caps_.insert(Capability::cycle_counter);
    const auto cpus = real_detail::allowed_cpus();
    if (!cpus.empty() && real_detail::pin_current_thread(cpus.front())) caps_.insert(Capability::core_pinning);
    if (real_detail::CycleCounter().ok()) caps_.insert(Capability::fixed_counters);
    if (PowercapEnergy().available()) caps_.insert(Capability::energy_counter);
    real_detail::Msr msr(cpus.empty() ? 0 : cpus.front());
    if (msr.ok() && msr.read(real_detail::msr_prefetch_control)) {
      caps_.insert(Capability::prefetcher_toggle);
      if (msr.read(real_detail::msr_uncore_ratio_limit)) caps_.insert(Capability::uncore_clamp);
    }
  }

  int first_cpu() const {
    const auto cpus = real_detail::allowed_cpus();
    return cpus.empty() ? 0 : cpus.front();
  }

  static std::string host_name() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("model name", 0) == 0) {
        auto pos = line.find(':');
        if (pos != std::string::npos) return line.substr(line.find_first_not_of(' ', pos + 1));
      }
    }
    return "host";
  }

  // Core cycles per second over a busy interval, from the per-thread cycle counter.
  static double measure_core_hz(double seconds = 0.05) {
    real_detail::CycleCounter cc;
    if (!cc.ok()) throw capability_error("fixed_counters");
    const auto t0 = std::chrono::steady_clock::now();
    const auto c0 = cc.read();
    volatile double x = 1.0;
    while (std::chrono::steady_clock::now() - t0 < std::chrono::duration<double>(seconds)) x = x * 1.0000001;
    const auto c1 = cc.read();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    return static_cast<double>(c1 - c0) / dt.count();
  }

  class PrefetcherGuard {
   public:
    explicit PrefetcherGuard(int cpu) : msr_(cpu) {
      saved_ = msr_.read(real_detail::msr_prefetch_control);
      if (!saved_ || !msr_.write(real_detail::msr_prefetch_control, *saved_ | 0xf)) {
        throw capability_error("prefetcher_toggle (write rejected)");
      }
    }
    ~PrefetcherGuard() {
      if (saved_) msr_.write(real_detail::msr_prefetch_control, *saved_);
    }
    PrefetcherGuard(const PrefetcherGuard&) = delete;
    PrefetcherGuard& operator=(const PrefetcherGuard&) = delete;

   private:
    real_detail::Msr msr_;
    std::optional<std::uint64_t> saved_;
  };

  CapabilitySet caps_;
  std::uintptr_t sink_ = 0;
};

}  // namespace ecmkit::probe
