#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "ecmkit/ecmkit.hpp"
#include "oracle/golden.hpp"

using namespace ecmkit;

namespace {

const std::vector<std::string> shipped{"snb", "ivb", "hsw", "bdw"};

json shipped_json(const std::string& name) {
  return parse_json_text(read_text_file(machine_directory() / (name + ".json")), name);
}

template <class F>
ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ecmkit::Error thrown";
  return ErrorKind::runtime;
}

}  // namespace

TEST(MachineFiles, AllShippedFilesLoad) {
  for (const auto& n : shipped) {
    EXPECT_NO_THROW(resolve_machine(n)) << n;
  }
}

TEST(MachineFiles, ResolveIsCaseInsensitiveForShortNames) {
  EXPECT_EQ(resolve_machine("BDW").name, "BDW");
  EXPECT_EQ(error_kind_of([] { resolve_machine("zen4"); }), ErrorKind::not_found);
}

TEST(MachineFiles, SpecificationsMatchDataSheets) {
  for (const auto& g : golden::specs()) {
    const auto md = resolve_machine(g.shorthand);
    SCOPED_TRACE(g.shorthand);
    EXPECT_EQ(md.name, g.shorthand);
    EXPECT_EQ(md.chip.microarchitecture, g.microarchitecture);
    EXPECT_EQ(md.chip.model, g.model);
    EXPECT_EQ(md.chip.release, g.release);
    EXPECT_EQ(md.chip.simd, g.simd);
    EXPECT_DOUBLE_EQ(md.frequency.base_hz, g.base_ghz * 1e9);
    if (g.all_core_turbo_ghz > 0) {
      ASSERT_TRUE(md.frequency.max_all_core_turbo_hz);
      EXPECT_DOUBLE_EQ(*md.frequency.max_all_core_turbo_hz, g.all_core_turbo_ghz * 1e9);
      EXPECT_DOUBLE_EQ(*md.frequency.avx_base_hz, g.avx_base_ghz * 1e9);
      EXPECT_DOUBLE_EQ(*md.frequency.avx_all_core_turbo_hz, g.avx_turbo_ghz * 1e9);
    } else {
      EXPECT_FALSE(md.frequency.max_all_core_turbo_hz);
      EXPECT_FALSE(md.frequency.avx_base_hz);
      EXPECT_FALSE(md.frequency.avx_all_core_turbo_hz);
    }
    EXPECT_EQ(md.cores, g.cores);
    EXPECT_EQ(md.cores * md.smt_threads_per_core, g.threads);
    EXPECT_EQ(md.memory.channels, g.mem_channels);
    EXPECT_EQ(md.memory.technology, g.mem_technology);
    EXPECT_DOUBLE_EQ(md.memory.theoretical_bw_bytes_per_s, g.theoretical_gbs * 1e9);
    ASSERT_EQ(md.cache_levels.size(), 3u);
    EXPECT_EQ(md.cache_levels[0].capacity_bytes, static_cast<std::uint64_t>(g.l1_kb * 1024));
    EXPECT_EQ(md.cache_levels[1].capacity_bytes, static_cast<std::uint64_t>(g.l2_kb * 1024));
    EXPECT_EQ(md.cache_levels[2].capacity_bytes, static_cast<std::uint64_t>(g.l3_mb * 1024 * 1024));
    EXPECT_TRUE(md.cache_levels[0].per_core);
    EXPECT_TRUE(md.cache_levels[1].per_core);
    EXPECT_FALSE(md.cache_levels[2].per_core);
    EXPECT_EQ(md.ports.load_units.count, g.load_ports);
    EXPECT_DOUBLE_EQ(md.ports.load_units.width_bytes, g.load_port_bytes);
    EXPECT_EQ(md.ports.store_units.count, g.store_ports);
    EXPECT_DOUBLE_EQ(md.ports.store_units.width_bytes, g.store_port_bytes);
    EXPECT_DOUBLE_EQ(*md.cache_levels[0].load_path_bytes_per_cycle, g.load_ports * g.load_port_bytes);
    EXPECT_DOUBLE_EQ(*md.cache_levels[0].store_path_bytes_per_cycle, g.store_ports * g.store_port_bytes);
    EXPECT_DOUBLE_EQ(*md.cache_levels[0].inter_level_bytes_per_cycle, g.l1_l2_bytes_per_cycle);
    EXPECT_DOUBLE_EQ(*md.cache_levels[1].inter_level_bytes_per_cycle, g.l2_l3_bytes_per_cycle);
  }
}

TEST(MachineFiles, InstructionTablesMatchMeasurements) {
  const auto& order = golden::inst_machine_order();
  for (std::size_t m = 0; m < order.size(); ++m) {
    const auto md = resolve_machine(order[m]);
    std::size_t expected_rows = golden::instruction_rows().size();
    for (const auto& row : golden::instruction_rows()) {
      SCOPED_TRACE(order[m] + " " + row.mnemonic + " " + row.width + " " + row.precision);
      const auto& spec = lookup_instruction(md, row.mnemonic, *parse_width(row.width), *parse_precision(row.precision));
      EXPECT_DOUBLE_EQ(spec.latency_cycles, row.latency[m]);
      EXPECT_DOUBLE_EQ(spec.inverse_throughput_cycles, row.inverse[m]);
    }
    for (const auto& row : golden::fma_rows()) {
      const auto w = *parse_width(row.width);
      const auto p = *parse_precision(row.precision);
      if (order[m] == "BDW" || order[m] == "HSW") {
        const auto& spec = lookup_instruction(md, "fma", w, p);
        EXPECT_DOUBLE_EQ(spec.latency_cycles, order[m] == "BDW" ? row.bdw_latency : row.hsw_latency);
        EXPECT_DOUBLE_EQ(spec.inverse_throughput_cycles, 0.5);
        ++expected_rows;
      } else {
        EXPECT_FALSE(has_instruction(md, "fma", w, p));
      }
    }
    EXPECT_EQ(md.instruction_table.size(), expected_rows) << order[m];
  }
}

TEST(MachineFiles, GatherTablesMatchMeasurements) {
  for (const auto& [name, levels] : golden::gather()) {
    const auto md = resolve_machine(name);
    ASSERT_TRUE(md.gather_table);
    EXPECT_EQ(md.gather_table->cycles.size(), levels.size());
    for (const auto& [level, row] : levels) {
      for (const auto& [spread, cy] : row) {
        EXPECT_DOUBLE_EQ(md.gather_table->cycles.at(level).at(spread), cy) << name << " " << level << " " << spread;
      }
    }
  }
  EXPECT_FALSE(resolve_machine("snb").gather_table);
  EXPECT_FALSE(resolve_machine("ivb").gather_table);
}

TEST(MachineFiles, LatenciesMatchMeasurements) {
  for (const auto& [name, row] : golden::latencies()) {
    const auto md = resolve_machine(name);
    SCOPED_TRACE(name);
    EXPECT_EQ(md.cache_levels[0].latency_cycles, (std::map<std::string, double>{{"default", row.l1}}));
    EXPECT_EQ(md.cache_levels[1].latency_cycles, (std::map<std::string, double>{{"default", row.l2}}));
    EXPECT_EQ(md.cache_levels[2].latency_cycles, row.l3);
    ASSERT_EQ(md.memory.latency_cycles.size(), row.mem.size());
    for (const auto& [mode, cy] : row.mem) {
      const std::string key = mode == "default" ? mode : std::string(to_string(*parse_snoop_mode(mode)));
      ASSERT_TRUE(md.memory.latency_cycles.count(key)) << key;
      EXPECT_DOUBLE_EQ(md.memory.latency_cycles.at(key), cy);
      if (mode != "default") {
        EXPECT_DOUBLE_EQ(md.snoop_profiles.at(*parse_snoop_mode(mode)).memory_latency_cycles, cy);
      }
    }
  }
}

TEST(MachineFiles, L1L2DerateReproducesMeasuredBandwidth) {
  for (const auto& [name, bw] : golden::l2_bandwidth()) {
    const auto md = resolve_machine(name);
    const auto& l1 = md.cache_levels[0];
    EXPECT_NEAR(*l1.inter_level_bytes_per_cycle * derate_for(l1, "dot"), bw.first, 1e-9) << name;
    EXPECT_NEAR(*l1.inter_level_bytes_per_cycle * derate_for(l1, "triad"), bw.second, 1e-9) << name;
  }
}

TEST(LoadMachine, BroadwellKeyFigures) {
  const auto md = resolve_machine("bdw");
  EXPECT_EQ(md.cores, 18);
  EXPECT_DOUBLE_EQ(md.frequency.base_hz, 2.3e9);
  EXPECT_DOUBLE_EQ(*md.frequency.avx_base_hz, 2.0e9);
  EXPECT_DOUBLE_EQ(md.memory.theoretical_bw_bytes_per_s, 76.8e9);
}

TEST(LoadMachine, SandyBridgeWithoutAvxBase) {
  const auto md = resolve_machine("snb");
  EXPECT_FALSE(md.frequency.avx_base_hz);
  EXPECT_DOUBLE_EQ(effective_frequency(md, WorkloadClass::avx, FrequencyMode::guaranteed), 2.7e9);
}

TEST(LoadMachine, CapacityNotLineMultipleNamesField) {
  auto doc = shipped_json("bdw");
  doc["caches"][1]["capacity_bytes"] = 100;
  try {
    machine_from_json(doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invariant);
    EXPECT_NE(std::string(e.what()).find("capacity_bytes"), std::string::npos);
  }
}

TEST(LoadMachine, SchemaErrors) {
  auto missing = shipped_json("hsw");
  missing.erase("cores");
  EXPECT_EQ(error_kind_of([&] { machine_from_json(missing); }), ErrorKind::schema);

  auto wrong_type = shipped_json("hsw");
  wrong_type["cores"] = "fourteen";
  EXPECT_EQ(error_kind_of([&] { machine_from_json(wrong_type); }), ErrorKind::schema);

  auto unknown = shipped_json("hsw");
  unknown["colour"] = "blue";
  EXPECT_EQ(error_kind_of([&] { machine_from_json(unknown); }), ErrorKind::schema);
  EXPECT_NO_THROW(machine_from_json(unknown, LoadOptions{true}));

  EXPECT_EQ(error_kind_of([] { load_machine("{ not json"); }), ErrorKind::schema);
}

TEST(LoadMachine, InvariantErrors) {
  auto shrink = shipped_json("bdw");
  shrink["caches"][2]["capacity_bytes"] = 65536;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(shrink); }), ErrorKind::invariant);

  auto avx_fast = shipped_json("bdw");
  avx_fast["frequency"]["avx_base_hz"] = 2.5e9;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(avx_fast); }), ErrorKind::invariant);

  auto dup = shipped_json("bdw");
  dup["instructions"].push_back(dup["instructions"][0]);
  EXPECT_EQ(error_kind_of([&] { machine_from_json(dup); }), ErrorKind::invariant);

  auto lat = shipped_json("bdw");
  lat["instructions"][0]["latency_cycles"] = 1;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(lat); }), ErrorKind::invariant);

  auto sustained = shipped_json("bdw");
  sustained["memory"]["sustained_bw_bytes_per_s"]["load"] = 1e12;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(sustained); }), ErrorKind::invariant);

  auto agus = shipped_json("bdw");
  agus["ports"]["general_agus"] = 0;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(agus); }), ErrorKind::invariant);

  auto zero_bw = shipped_json("bdw");
  zero_bw["caches"][0]["inter_level_bytes_per_cycle"] = 0;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(zero_bw); }), ErrorKind::invariant);

  auto dir_single = shipped_json("bdw");
  dir_single["numa_domains_per_chip"] = 1;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(dir_single); }), ErrorKind::invariant);

  auto gather = shipped_json("bdw");
  gather["gather"]["Mem"]["8"] = 1.0;
  EXPECT_EQ(error_kind_of([&] { machine_from_json(gather); }), ErrorKind::invariant);
}

TEST(LoadMachine, UnknownSnoopModeAndLevelRejected) {
  auto mode = shipped_json("bdw");
  mode["snoop_profiles"]["XYZ"] = mode["snoop_profiles"]["DIR"];
  EXPECT_NE(error_kind_of([&] { machine_from_json(mode); }), ErrorKind::runtime);

  auto level = shipped_json("bdw");
  level["caches"][1]["level"] = "LLC";
  EXPECT_NE(error_kind_of([&] { machine_from_json(level); }), ErrorKind::runtime);
}

TEST(LookupInstruction, TableValues) {
  const auto bdw = resolve_machine("bdw");
  const auto& div = lookup_instruction(bdw, "div", Width::avx, Precision::dp);
  EXPECT_EQ(div.latency_cycles, 24);
  EXPECT_EQ(div.inverse_throughput_cycles, 16);
  EXPECT_EQ(lookup_instruction(bdw, "div", Width::scalar, Precision::dp).inverse_throughput_cycles, 4.5);
}

TEST(LookupInstruction, MissingFmaListsNearest) {
  const auto snb = resolve_machine("snb");
  try {
    lookup_instruction(snb, "fma", Width::avx, Precision::dp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
    EXPECT_NE(std::string(e.what()).find("nearest"), std::string::npos);
  }
  // exact match only
  EXPECT_THROW(lookup_instruction(snb, "DIV", Width::avx, Precision::dp), Error);
}

TEST(EffectiveFrequency, Examples) {
  const auto hsw = resolve_machine("hsw");
  const auto bdw = resolve_machine("bdw");
  const auto snb = resolve_machine("snb");
  EXPECT_DOUBLE_EQ(effective_frequency(hsw, WorkloadClass::avx, FrequencyMode::guaranteed), 1.9e9);
  EXPECT_DOUBLE_EQ(effective_frequency(bdw, WorkloadClass::sse, FrequencyMode::max_all_core), 2.8e9);
  EXPECT_DOUBLE_EQ(effective_frequency(snb, WorkloadClass::avx, FrequencyMode::guaranteed), 2.7e9);
  EXPECT_DOUBLE_EQ(effective_frequency(snb, WorkloadClass::avx, FrequencyMode::max_all_core), 2.7e9);
}

TEST(EffectiveFrequency, GuaranteedNeverExceedsTurbo) {
  for (const auto& n : shipped) {
    const auto md = resolve_machine(n);
    for (auto cls : {WorkloadClass::scalar, WorkloadClass::sse, WorkloadClass::avx}) {
      EXPECT_LE(effective_frequency(md, cls, FrequencyMode::guaranteed),
                effective_frequency(md, cls, FrequencyMode::max_all_core));
    }
  }
}

TEST(MachineSerialization, ShippedFilesRoundTrip) {
  for (const auto& n : shipped) {
    const auto md = resolve_machine(n);
    const auto again = machine_from_json(parse_json_text(machine_to_json(md).dump(), "round trip"));
    EXPECT_EQ(md, again) << n;
  }
}

TEST(ChipConfigResolution, DirImpliesCod) {
  const auto bdw = resolve_machine("bdw");
  auto c = resolve_config(bdw, SnoopMode::DIR, std::nullopt);
  EXPECT_TRUE(c.cod);
  EXPECT_EQ(error_kind_of([&] { resolve_config(bdw, SnoopMode::DIR, false); }), ErrorKind::precondition);
  const auto snb = resolve_machine("snb");
  EXPECT_EQ(error_kind_of([&] { resolve_config(snb, std::nullopt, true); }), ErrorKind::precondition);
  // an explicit CoD-off request drops the DIR default
  auto off = resolve_config(bdw, std::nullopt, false);
  EXPECT_FALSE(off.cod);
  EXPECT_FALSE(off.snoop_mode);
}

TEST(ChipConfigResolution, LatencyByConfiguration) {
  const auto bdw = resolve_machine("bdw");
  EXPECT_EQ(level_latency(bdw, 2, resolve_config(bdw, std::nullopt, false)), 47);
  EXPECT_EQ(level_latency(bdw, 2, resolve_config(bdw, std::nullopt, true)), 41);
  EXPECT_EQ(memory_latency(bdw, resolve_config(bdw, SnoopMode::ES, false)), 248);
  EXPECT_EQ(memory_latency(bdw, resolve_config(bdw, SnoopMode::HS, false)), 280);
  EXPECT_EQ(memory_latency(bdw, resolve_config(bdw, SnoopMode::HS_OSB, false)), 190);
  EXPECT_EQ(memory_latency(bdw, resolve_config(bdw, SnoopMode::DIR, true)), 178);
}

TEST(Units, SizeAndFrequencyParsing) {
  EXPECT_EQ(parse_size("16kB"), 16384u);
  EXPECT_EQ(parse_size("10 MB"), 10u * 1024 * 1024);
  EXPECT_EQ(parse_size("1GB"), 1024ull * 1024 * 1024);
  EXPECT_EQ(parse_size("4096"), 4096u);
  EXPECT_THROW(parse_size("3 parsecs"), Error);
  EXPECT_DOUBLE_EQ(parse_frequency("2.3GHz"), 2.3e9);
  EXPECT_DOUBLE_EQ(parse_frequency("1800MHz"), 1.8e9);
  EXPECT_DOUBLE_EQ(parse_frequency("2.3e9"), 2.3e9);
}
