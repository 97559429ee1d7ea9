#include <gtest/gtest.h>

#include <sstream>

#include "ecmkit/ecmkit.hpp"

using namespace ecmkit;
using namespace ecmkit::probe;

namespace {

SyntheticExecutor synthetic(const std::string& machine, std::optional<SnoopMode> snoop = std::nullopt,
                            std::optional<bool> cod = std::nullopt, double jitter = 0.0, std::uint64_t seed = 1) {
  const auto md = resolve_machine(machine);
  SyntheticConfig c;
  c.chip = resolve_config(md, snoop, cod);
  c.noise = NoiseModel{jitter, seed};
  return SyntheticExecutor(md, c);
}

std::vector<std::uint32_t> walk(const PointerChain& c, std::size_t steps) {
  std::vector<std::uint32_t> out{0};
  std::uint32_t at = 0;
  for (std::size_t i = 0; i < steps; ++i) out.push_back(at = c.next[at]);
  return out;
}

}  // namespace

TEST(PointerChain, ConsecutiveWalk) {
  const auto c = build_pointer_chain(256, ChainLayout::consecutive_cl);
  EXPECT_EQ(walk(c, 4), (std::vector<std::uint32_t>{0, 1, 2, 3, 0}));
  EXPECT_TRUE(is_single_cycle(c));
}

TEST(PointerChain, RandomWalkIsSingleCycle) {
  const auto c = build_pointer_chain(64 * 1024, ChainLayout::random_cl, 64, 7);
  EXPECT_TRUE(is_single_cycle(c));
  EXPECT_EQ(c.lines(), 1024u);
  EXPECT_NE(c.next, build_pointer_chain(64 * 1024, ChainLayout::consecutive_cl).next);
  EXPECT_EQ(c.next, build_pointer_chain(64 * 1024, ChainLayout::random_cl, 64, 7).next);
}

TEST(PointerChain, RejectsBadSizes) {
  EXPECT_THROW(build_pointer_chain(100, ChainLayout::consecutive_cl), Error);
  EXPECT_THROW(build_pointer_chain(64, ChainLayout::consecutive_cl), Error);
  EXPECT_THROW(build_pointer_chain(128, ChainLayout::consecutive_cl, 0), Error);
  PointerChain broken = build_pointer_chain(256, ChainLayout::consecutive_cl);
  broken.next[1] = 0;
  EXPECT_FALSE(is_single_cycle(broken));
}

TEST(LatencyProbe, LevelsOfBroadwell) {
  auto bdw = synthetic("bdw", std::nullopt, false);
  const auto l1 = run_latency_probe(bdw, 10 << 10);
  EXPECT_DOUBLE_EQ(l1.value, 4.0);
  EXPECT_EQ(l1.statistic, Statistic::min);
  EXPECT_EQ(l1.repetitions.size(), 21u);
  EXPECT_EQ(l1.unit, "cy/access");
  EXPECT_FALSE(*l1.environment.prefetchers_on);
  EXPECT_DOUBLE_EQ(run_latency_probe(bdw, 20 << 20).value, 47.0);

  auto dir = synthetic("bdw", SnoopMode::DIR);
  EXPECT_DOUBLE_EQ(run_latency_probe(dir, 1ull << 30).value, 178.0);
  EXPECT_EQ(*dir.sweep_environment().snoop_mode, "DIR");
}

TEST(LatencyProbe, MinimumOfNoisyRepetitions) {
  auto bdw = synthetic("bdw", std::nullopt, false, 0.05, 3);
  const auto r = run_latency_probe(bdw, 10 << 10);
  EXPECT_GE(r.value, 4.0);
  EXPECT_LE(r.value, 4.2);
  for (double v : r.repetitions) EXPECT_GE(v, r.value);
  EXPECT_THROW(run_latency_probe(bdw, 10 << 10, ProbeSettings{8}), Error);
  EXPECT_NO_THROW(run_latency_probe(bdw, 10 << 10, ProbeSettings{9}));
}

TEST(InstructionProbe, Examples) {
  auto bdw = synthetic("bdw");
  const InstRequest vdivpd{"div", Width::avx, Precision::dp};
  EXPECT_DOUBLE_EQ(run_instruction_probe(bdw, vdivpd, InstMode::latency).value, 24.0);
  const InstRequest divsd{"div", Width::scalar, Precision::dp};
  EXPECT_DOUBLE_EQ(run_instruction_probe(bdw, divsd, InstMode::throughput).value, 4.5);
  // a single chain cannot hide latency
  const auto one = run_instruction_probe(bdw, vdivpd, InstMode::throughput, 1);
  EXPECT_DOUBLE_EQ(one.value, 24.0);
  EXPECT_EQ(run_instruction_probe(bdw, vdivpd, InstMode::latency, 16).parameters.at("chains"), 1);

  auto snb = synthetic("snb");
  try {
    run_instruction_probe(snb, {"fma", Width::avx, Precision::dp}, InstMode::latency);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
  }
  EXPECT_THROW(run_instruction_probe(bdw, vdivpd, InstMode::throughput, 0), Error);
}

TEST(BandwidthProbe, InL1) {
  auto bdw = synthetic("bdw");
  const auto t = builtin_kernel_for(resolve_machine("bdw"), "triad", Width::avx);
  const auto r = run_bandwidth_probe(bdw, t, 10 << 10, 1);
  EXPECT_DOUBLE_EQ(r.value, 64.0);
  EXPECT_EQ(r.statistic, Statistic::median);
  EXPECT_DOUBLE_EQ(*r.environment.core_freq_hz, 2.3e9);
  EXPECT_NEAR(r.derived.at("GB/s"), 64.0 * 2.3, 1e-9);

  auto snb = synthetic("snb");
  const auto ts = builtin_kernel_for(resolve_machine("snb"), "triad", Width::avx);
  EXPECT_DOUBLE_EQ(run_bandwidth_probe(snb, ts, 10 << 10, 1).value, 48.0);
}

TEST(BandwidthProbe, SharedL3EfficiencyWithCod) {
  const auto hsw_md = resolve_machine("hsw");
  auto hsw = synthetic("hsw", std::nullopt, true);
  const auto k = builtin_kernel_for(hsw_md, "dot", Width::avx);
  const double one = run_bandwidth_probe(hsw, k, 8 << 20, 1).value;
  const double all = run_bandwidth_probe(hsw, k, 8 << 20, 14).value;
  EXPECT_NEAR(all / (14 * one), 0.98, 1e-9);

  auto off = synthetic("hsw", std::nullopt, false);
  EXPECT_NEAR(run_bandwidth_probe(off, k, 8 << 20, 14).value / (14 * run_bandwidth_probe(off, k, 8 << 20, 1).value),
              0.92, 1e-9);
}

TEST(BandwidthProbe, MemoryBoundSaturates) {
  const auto md = resolve_machine("bdw");
  auto bdw = synthetic("bdw");
  const auto k = builtin_kernel_for(md, "load_only", Width::avx);
  double prev = 0;
  for (int n = 1; n <= md.cores; ++n) {
    const double v = run_bandwidth_probe(bdw, k, 1ull << 30, n).value;
    EXPECT_GE(v, prev - 1e-9);
    prev = v;
  }
  EXPECT_NEAR(prev * 2.3e9, md.memory.sustained_bw_bytes_per_s.at("load"), 1e6);
  EXPECT_THROW(run_bandwidth_probe(bdw, k, 1ull << 30, md.cores + 1), Error);
  EXPECT_THROW(run_bandwidth_probe(bdw, k, 0, 1), Error);
}

TEST(L2Bandwidth, Derivation) {
  EXPECT_DOUBLE_EQ(derive_l2_bandwidth(100, 60, 1600), 40.0);
  EXPECT_THROW(derive_l2_bandwidth(50, 50, 1600), Error);
  EXPECT_THROW(derive_l2_bandwidth(100, 60, 0), Error);
}

TEST(L2Bandwidth, ProbeMatchesDeratedLink) {
  for (const auto* m : {"snb", "ivb", "hsw", "bdw"}) {
    const auto md = resolve_machine(m);
    auto ex = synthetic(m);
    for (const auto* kn : {"dot", "triad"}) {
      const auto r = run_l2_bandwidth_probe(ex, builtin_kernel_for(md, kn, Width::avx), 128 << 10);
      const auto& l1 = md.cache_levels.front();
      EXPECT_NEAR(r.value, *l1.inter_level_bytes_per_cycle * l1.derate.at(kn), 1e-9) << m << " " << kn;
      EXPECT_EQ(r.parameters.at("raw").size(), r.repetitions.size());
    }
  }
}

TEST(GatherProbe, Examples) {
  auto bdw = synthetic("bdw");
  EXPECT_DOUBLE_EQ(run_gather_probe(bdw, "L1", 1).value, 7.3);
  EXPECT_DOUBLE_EQ(run_gather_probe(bdw, "L2", 8).value, 18.1);
  EXPECT_THROW(run_gather_probe(bdw, "L1", 3), Error);
  EXPECT_THROW(run_gather_probe(bdw, "L7", 1), Error);
  auto snb = synthetic("snb");
  EXPECT_THROW(run_gather_probe(snb, "L1", 1), Error);
}

TEST(Sweep, SingleCellEqualsProbe) {
  const auto md = resolve_machine("bdw");
  auto bdw = synthetic("bdw");
  Workload w;
  w.kernel = builtin_kernel_for(md, "triad", Width::avx);
  w.working_set_bytes = 10 << 10;
  SweepGrid g;
  g.core_freqs_hz = {2.3e9};
  g.uncore_freqs_hz = {std::nullopt};
  const auto s = run_sweep(bdw, g, w, 1.0);
  ASSERT_EQ(s.points.size(), 1u);
  const auto r = run_bandwidth_probe(bdw, w.kernel, w.working_set_bytes, 1);
  EXPECT_NEAR(s.points[0].performance, r.derived.at("GB/s"), 1e-9);
  EXPECT_EQ(s.points[0].unit, "GB/s");
}

TEST(Sweep, GridOrderAndKnee) {
  auto hsw = synthetic("hsw");
  Workload w;
  w.kind = Workload::Kind::profile;
  w.profile = builtin_profile("hpcg_like");
  SweepGrid g;
  g.core_freqs_hz = {1.2e9, 2.3e9};
  g.uncore_freqs_hz = {std::nullopt};
  g.cores = {1, 2, 4, 8, 14};
  const auto s = run_sweep(hsw, g, w, 0.5);
  ASSERT_EQ(s.points.size(), 10u);
  EXPECT_EQ(s.points[0].cores, 1);
  EXPECT_EQ(*s.points[5].requested_core_hz, 2.3e9);
  // memory-bound: the last core counts deliver the same performance at both clocks
  EXPECT_NEAR(s.points[4].performance, s.points[9].performance, 1e-9);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GE(s.points[i].performance, s.points[i - 1].performance - 1e-12);
  for (const auto& p : s.points) EXPECT_DOUBLE_EQ(p.duration_s, 0.5);
  EXPECT_THROW(run_sweep(hsw, g, w, 0.0), Error);
}

TEST(Sweep, CommandNeedsRealExecutor) {
  auto bdw = synthetic("bdw");
  Workload w;
  w.kind = Workload::Kind::command;
  w.command = "true";
  try {
    run_sweep(bdw, SweepGrid{}, w, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
  }
}

TEST(Sweep, JsonAndCsv) {
  auto bdw = synthetic("bdw", std::nullopt, std::nullopt, 0.02, 9);
  Workload w;
  w.kind = Workload::Kind::profile;
  w.profile = builtin_profile("linpack_like");
  SweepGrid g;
  g.core_freqs_hz = {std::nullopt, 1.8e9};
  g.uncore_freqs_hz = {1.2e9, std::nullopt};
  g.cores = {1, 18};
  const auto s = run_sweep(bdw, g, w, 1.0);
  EXPECT_EQ(sweep_from_json(sweep_to_json(s)), s);
  const auto csv = sweep_to_csv(s);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), sweep_csv_header());
}

TEST(Frequency, ObservedClocks) {
  auto bdw = synthetic("bdw");
  for (double f : observe_effective_frequency(bdw, 1.0).core_hz) EXPECT_GE(f, 2.0e9);
  auto hsw = synthetic("hsw");
  for (double f : observe_effective_frequency(hsw, 1.0).core_hz) {
    EXPECT_GE(f, 1.9e9);
    EXPECT_LE(f, 2.3e9);
  }
  for (double f : observe_effective_frequency(hsw, 1.0, WorkloadClass::idle).core_hz) EXPECT_GE(f, 2.3e9);
  EXPECT_THROW(observe_effective_frequency(hsw, 0.0), Error);
}

TEST(RealExecutor, RefusesWhatTheHostCannotDo) {
  RealExecutor real;
  EXPECT_EQ(real.kind(), "real");
  EXPECT_EQ(real.machine(), nullptr);
  if (!real.has(Capability::prefetcher_toggle)) {
    try {
      run_latency_probe(real, 1 << 20);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::capability);
    }
  }
  if (!real.has(Capability::fixed_counters)) {
    try {
      run_l2_bandwidth_probe(real, builtin_kernel("dot", Width::avx), 128 << 10);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::capability);
    }
  }
  if (!real.has(Capability::uncore_clamp)) {
    Workload w;
    w.kind = Workload::Kind::command;
    w.command = "true";
    SweepGrid g;
    g.core_freqs_hz = {2.0e9};
    EXPECT_THROW(run_sweep(real, g, w, 0.1), Error);
  }
}

TEST(Executor, RequireNamesMissingCapabilities) {
  class CounterOnly final : public Executor {
   public:
    std::string_view kind() const override { return "real"; }
    CapabilitySet capabilities() const override { return {Capability::cycle_counter}; }
    const MachineDescription* machine() const override { return nullptr; }
    Measurement latency(std::uint64_t, int) override { return {}; }
    Measurement instruction(const InstRequest&, InstMode, int, int) override { return {}; }
    Measurement bandwidth(const KernelDescriptor&, std::uint64_t, int, int) override { return {}; }
    L2RawMeasurement l2_raw(const KernelDescriptor&, std::uint64_t, int) override { return {}; }
    Measurement gather(const std::string&, int, int) override { return {}; }
    SweepPoint sweep_point(const Workload&, std::optional<double>, std::optional<double>, int, double) override {
      return {};
    }
    Environment sweep_environment() const override { return {}; }
    FrequencyReading observe_frequency(double, WorkloadClass, std::optional<double>) override { return {}; }
  } ex;
  try {
    run_latency_probe(ex, 1 << 20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("prefetcher_toggle"), std::string::npos);
    EXPECT_NE(msg.find("core_pinning"), std::string::npos);
    EXPECT_EQ(msg.find("cycle_counter"), std::string::npos);
  }
  auto bdw = synthetic("bdw");
  EXPECT_NO_THROW(bdw.require({Capability::energy_counter, Capability::uncore_clamp}, "x"));
}

TEST(ProbeResult, JsonAndCsvRoundTrip) {
  auto bdw = synthetic("bdw", SnoopMode::DIR, std::nullopt, 0.05, 11);
  const auto r = run_bandwidth_probe(bdw, builtin_kernel("triad", Width::avx), 1ull << 30, 4);
  EXPECT_EQ(result_from_json(result_to_json(r)), r);
  EXPECT_EQ(result_from_json(json::parse(result_to_json(r).dump())), r);
  const auto row = result_to_csv_row(r);
  const auto cells = csv_split(row);
  EXPECT_EQ(cells.size(), csv_split(probe_csv_header()).size());
  EXPECT_EQ(json::parse(cells[1]), r.parameters);
  EXPECT_EQ(std::stod(cells[3]), r.value);
  EXPECT_EQ(cells[10], "DIR");
}

TEST(Statistic, MinAndMedian) {
  EXPECT_DOUBLE_EQ(apply_statistic(Statistic::min, {3, 1, 2}), 1);
  EXPECT_DOUBLE_EQ(apply_statistic(Statistic::median, {3, 1, 2}), 2);
  EXPECT_DOUBLE_EQ(apply_statistic(Statistic::median, {4, 1, 2, 3}), 2.5);
  EXPECT_THROW(apply_statistic(Statistic::min, {}), Error);
}
