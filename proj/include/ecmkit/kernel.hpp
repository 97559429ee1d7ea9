#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/json_reader.hpp"
#include "ecmkit/machine.hpp"
#include "ecmkit/units.hpp"

namespace ecmkit {

enum class StreamDirection { load, store, nt_store };

inline constexpr std::string_view to_string(StreamDirection d) {
  switch (d) {
    case StreamDirection::load: return "load";
    case StreamDirection::store: return "store";
    case StreamDirection::nt_store: return "nt_store";
  }
  return "?";
}

inline std::optional<StreamDirection> parse_stream_direction(std::string_view s) {
  if (s == "load") return StreamDirection::load;
  if (s == "store") return StreamDirection::store;
  if (s == "nt_store") return StreamDirection::nt_store;
  return std::nullopt;
}

struct StreamDecl {
  std::string name;
  StreamDirection direction = StreamDirection::load;
  std::uint64_t bytes_per_element = 8;
  bool write_allocate = false;

  bool operator==(const StreamDecl&) const = default;
};

// Mnemonics handled by the port model rather than the instruction table.
namespace mnemonic {
inline constexpr std::string_view load = "load";
inline constexpr std::string_view store = "store";
inline constexpr std::string_view nt_store = "nt_store";
inline constexpr std::string_view lea = "lea";
inline constexpr std::string_view gather = "gather";
}  // namespace mnemonic

inline bool is_memory_mnemonic(std::string_view m) {
  return m == mnemonic::load || m == mnemonic::store || m == mnemonic::nt_store || m == mnemonic::gather;
}

inline bool is_port_model_mnemonic(std::string_view m) { return is_memory_mnemonic(m) || m == mnemonic::lea; }

struct KernelInstruction {
  std::string mnemonic;
  Width width = Width::avx;
  Precision precision = Precision::dp;
  int count_per_iteration = 1;
  std::vector<int> depends_on;    // producers in the same iteration
  std::vector<int> carried_from;  // producers in the previous iteration
  std::string stream;             // memory instructions only

  bool operator==(const KernelInstruction&) const = default;
};

struct KernelDescriptor {
  std::string name;
  Width isa_width = Width::avx;
  std::vector<KernelInstruction> instructions;
  std::vector<StreamDecl> streams;
  std::uint64_t elements_per_iteration = 1;
  double flops_per_iteration = 0.0;
  std::string access_pattern;  // key for sustained bandwidth and derate lookups
  bool uses_lea_trick = false;
  int unroll = 8;

  bool operator==(const KernelDescriptor&) const = default;
};

inline void validate_kernel(const KernelDescriptor& k) {
  if (k.name.empty()) throw invariant_error("kernel.name", "must not be empty");
  if (k.elements_per_iteration < 1) throw invariant_error("kernel.elements_per_iteration", "must be positive");
  if (k.unroll < 1) throw invariant_error("kernel.unroll", "must be positive");
  if (k.flops_per_iteration < 0) throw invariant_error("kernel.flops_per_iteration", "must be >= 0");

  std::set<std::pair<std::string, StreamDirection>> stream_keys;
  for (const auto& s : k.streams) {
    if (s.bytes_per_element != 4 && s.bytes_per_element != 8) {
      throw invariant_error("kernel.streams." + s.name + ".bytes_per_element", "must be 4 or 8");
    }
    if (s.direction == StreamDirection::nt_store && s.write_allocate) {
      throw invariant_error("kernel.streams." + s.name + ".write_allocate", "nt_store implies no write-allocate");
    }
    if (s.direction == StreamDirection::load && s.write_allocate) {
      throw invariant_error("kernel.streams." + s.name + ".write_allocate", "applies to stores only");
    }
    if (!stream_keys.emplace(s.name, s.direction).second) {
      throw invariant_error("kernel.streams." + s.name, "duplicate (name, direction)");
    }
    const auto expect = lanes(k.isa_width, s.bytes_per_element == 4 ? Precision::sp : Precision::dp);
    if (k.elements_per_iteration != expect) {
      throw invariant_error("kernel.elements_per_iteration",
                            "inconsistent with isa_width " + std::string(to_string(k.isa_width)) + " and " +
                                std::to_string(s.bytes_per_element) + "-byte elements (expected " +
                                std::to_string(expect) + ")");
    }
  }

  const int n = static_cast<int>(k.instructions.size());
  for (int i = 0; i < n; ++i) {
    const auto& inst = k.instructions[static_cast<std::size_t>(i)];
    const std::string field = "kernel.instructions[" + std::to_string(i) + "]";
    if (inst.count_per_iteration < 0) throw invariant_error(field + ".count", "must be >= 0");
    for (int d : inst.depends_on) {
      if (d < 0 || d >= n) throw invariant_error(field + ".depends_on", "index out of range");
    }
    for (int d : inst.carried_from) {
      if (d < 0 || d >= n) throw invariant_error(field + ".carried_from", "index out of range");
    }
    if (is_memory_mnemonic(inst.mnemonic) && inst.mnemonic != mnemonic::gather) {
      auto dir = parse_stream_direction(inst.mnemonic);
      if (!stream_keys.contains({inst.stream, *dir})) {
        throw invariant_error(field + ".stream", "no " + inst.mnemonic + " stream named '" + inst.stream + "'");
      }
    }
  }
  // Intra-iteration dependencies must form a DAG.
  std::vector<int> state(static_cast<std::size_t>(n), 0);
  std::function<void(int)> visit = [&](int v) {
    state[static_cast<std::size_t>(v)] = 1;
    for (int d : k.instructions[static_cast<std::size_t>(v)].depends_on) {
      if (state[static_cast<std::size_t>(d)] == 1) {
        throw invariant_error("kernel.instructions", "dependency cycle through index " + std::to_string(d));
      }
      if (state[static_cast<std::size_t>(d)] == 0) visit(d);
    }
    state[static_cast<std::size_t>(v)] = 2;
  };
  for (int i = 0; i < n; ++i) {
    if (state[static_cast<std::size_t>(i)] == 0) visit(i);
  }
}

// ---------------------------------------------------------------------------
// Builtin library (double precision)

inline const std::vector<std::string>& builtin_kernel_names() {
  static const std::vector<std::string> names{"triad", "triad_lea", "triad_noarith", "dot",    "load_only", "copy",
                                              "store_only", "nt_store", "update", "daxpy", "gather_chain"};
  return names;
}

inline KernelDescriptor builtin_kernel(std::string_view name, Width width, bool fma_available = true) {
  const auto& names = builtin_kernel_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw Error(ErrorKind::not_found, "unknown builtin kernel '" + std::string(name) + "'");
  }
  KernelDescriptor k;
  k.name = std::string(name);
  k.isa_width = width;
  k.elements_per_iteration = lanes(width, Precision::dp);
  const double elems = static_cast<double>(k.elements_per_iteration);
  const Precision dp = Precision::dp;
  auto inst = [&](std::string_view m, std::vector<int> deps = {}, std::string stream = {}) {
    KernelInstruction i;
    i.mnemonic = std::string(m);
    i.width = width;
    i.precision = dp;
    i.depends_on = std::move(deps);
    i.stream = std::move(stream);
    return i;
  };
  auto load_stream = [](std::string n) { return StreamDecl{std::move(n), StreamDirection::load, 8, false}; };
  auto store_stream = [](std::string n, bool wa) { return StreamDecl{std::move(n), StreamDirection::store, 8, wa}; };
  // a = b + s * c with either one FMA or a MUL/ADD pair; returns index of the result.
  auto multiply_add = [&](int b, int c) {
    if (fma_available) {
      k.instructions.push_back(inst("fma", {b, c}));
    } else {
      k.instructions.push_back(inst("mul", {c}));
      k.instructions.push_back(inst("add", {b, static_cast<int>(k.instructions.size()) - 1}));
    }
    return static_cast<int>(k.instructions.size()) - 1;
  };

  if (name == "triad" || name == "triad_lea" || name == "triad_noarith") {
    // A[i] = B[i] + s * C[i]
    k.access_pattern = "triad";
    k.streams = {store_stream("A", true), load_stream("B"), load_stream("C")};
    k.instructions.push_back(inst(mnemonic::load, {}, "B"));
    k.instructions.push_back(inst(mnemonic::load, {}, "C"));
    int value = 1;
    if (name != "triad_noarith") {
      value = multiply_add(0, 1);
      k.flops_per_iteration = 2 * elems;
    }
    if (name != "triad") {
      k.uses_lea_trick = true;
      k.instructions.push_back(inst(mnemonic::lea));
    }
    k.instructions.push_back(inst(mnemonic::store, {value}, "A"));
  } else if (name == "dot") {
    // dot += A[i] + B[i], one accumulator carried across iterations
    k.access_pattern = "dot";
    k.streams = {load_stream("A"), load_stream("B")};
    k.instructions.push_back(inst(mnemonic::load, {}, "A"));
    k.instructions.push_back(inst(mnemonic::load, {}, "B"));
    k.instructions.push_back(inst("add", {0, 1}));
    auto acc = inst("add", {2});
    acc.carried_from = {3};
    k.instructions.push_back(acc);
    k.flops_per_iteration = 2 * elems;
  } else if (name == "load_only") {
    k.access_pattern = "load";
    k.streams = {load_stream("A"), load_stream("B")};
    k.instructions.push_back(inst(mnemonic::load, {}, "A"));
    k.instructions.push_back(inst(mnemonic::load, {}, "B"));
  } else if (name == "copy") {
    k.access_pattern = "copy";
    k.streams = {store_stream("A", true), load_stream("B")};
    k.instructions.push_back(inst(mnemonic::load, {}, "B"));
    k.instructions.push_back(inst(mnemonic::store, {0}, "A"));
  } else if (name == "store_only") {
    k.access_pattern = "store";
    k.streams = {store_stream("A", true)};
    k.instructions.push_back(inst(mnemonic::store, {}, "A"));
  } else if (name == "nt_store") {
    k.access_pattern = "nt_store";
    k.streams = {StreamDecl{"A", StreamDirection::nt_store, 8, false}};
    k.instructions.push_back(inst(mnemonic::nt_store, {}, "A"));
  } else if (name == "update") {
    // A[i] = s * A[i]; the line is already present, so the store needs no allocation
    k.access_pattern = "update";
    k.streams = {load_stream("A"), store_stream("A", false)};
    k.instructions.push_back(inst(mnemonic::load, {}, "A"));
    k.instructions.push_back(inst("mul", {0}));
    k.instructions.push_back(inst(mnemonic::store, {1}, "A"));
    k.flops_per_iteration = elems;
  } else if (name == "daxpy") {
    // A[i] = A[i] + s * B[i]
    k.access_pattern = "daxpy";
    k.streams = {load_stream("A"), load_stream("B"), store_stream("A", false)};
    k.instructions.push_back(inst(mnemonic::load, {}, "A"));
    k.instructions.push_back(inst(mnemonic::load, {}, "B"));
    const int v = multiply_add(0, 1);
    k.instructions.push_back(inst(mnemonic::store, {v}, "A"));
    k.flops_per_iteration = 2 * elems;
  } else if (name == "gather_chain") {
    if (width != Width::avx) {
      throw precondition_error("gather_chain requires isa_width avx");
    }
    // each gather's indices come from the previous gather
    k.access_pattern = "load";
    k.streams = {load_stream("A")};
    auto g = inst(mnemonic::gather);
    g.carried_from = {0};
    k.instructions.push_back(g);
  }
  validate_kernel(k);
  return k;
}

inline bool machine_has_fma(const MachineDescription& md, Width width) {
  return has_instruction(md, "fma", width, Precision::dp);
}

// Builtin kernel adapted to the machine: MUL+ADD where FMA is absent.
inline KernelDescriptor builtin_kernel_for(const MachineDescription& md, std::string_view name, Width width) {
  return builtin_kernel(name, width, machine_has_fma(md, width));
}

// ---------------------------------------------------------------------------
// Traffic

struct LinkTraffic {
  std::string name;  // "Reg-L1", "L1-L2", ..., "L3-Mem"
  double load_bytes = 0.0;
  double store_bytes = 0.0;

  double total() const { return load_bytes + store_bytes; }
  bool operator==(const LinkTraffic&) const = default;
};

struct TrafficProfile {
  std::vector<LinkTraffic> links;  // innermost first
  int residence_level = 0;         // index into cache levels; == number of levels for memory

  const LinkTraffic* find(std::string_view link) const {
    for (const auto& l : links) {
      if (l.name == link) return &l;
    }
    return nullptr;
  }
};

struct TrafficOptions {
  int cores = 1;
  bool cod = false;          // cluster-on-die: shared capacity split across NUMA domains
  double fill_factor = 0.5;  // a working set resides in a level only up to this fraction of capacity
};

inline std::vector<std::string> link_names(const MachineDescription& md) {
  std::vector<std::string> names{"Reg-" + md.cache_levels.front().level_name};
  for (std::size_t i = 0; i + 1 < md.cache_levels.size(); ++i) {
    names.push_back(md.cache_levels[i].level_name + "-" + md.cache_levels[i + 1].level_name);
  }
  names.push_back(md.cache_levels.back().level_name + "-" + std::string(memory_level_name));
  return names;
}

// Capacity one core can use in a level.
inline double usable_capacity(const CacheLevelSpec& level, const MachineDescription& md, const TrafficOptions& opts) {
  const auto cap = static_cast<double>(level.capacity_bytes);
  if (level.per_core) return cap;
  const int domains = opts.cod ? md.numa_domains_per_chip : 1;
  const int cores = std::max(1, opts.cores);
  const int sharers = (cores + domains - 1) / domains;
  return cap / domains / sharers;
}

// The working set is the total over all participating cores; each core streams its share.
inline int residence_level(std::uint64_t working_set_bytes, const MachineDescription& md,
                           const TrafficOptions& opts = {}) {
  const auto ws = static_cast<double>(working_set_bytes) / std::max(1, opts.cores);
  for (std::size_t i = 0; i < md.cache_levels.size(); ++i) {
    if (ws <= opts.fill_factor * usable_capacity(md.cache_levels[i], md, opts)) return static_cast<int>(i);
  }
  return static_cast<int>(md.cache_levels.size());
}

inline double stream_bytes_per_iteration(const KernelDescriptor& k, const StreamDecl& s) {
  return static_cast<double>(k.elements_per_iteration * s.bytes_per_element);
}

inline TrafficProfile traffic_profile(const KernelDescriptor& k, std::uint64_t working_set_bytes,
                                      const MachineDescription& md, const TrafficOptions& opts = {}) {
  if (working_set_bytes == 0) throw precondition_error("working_set_bytes must be > 0");
  TrafficProfile tp;
  for (auto& n : link_names(md)) tp.links.push_back(LinkTraffic{std::move(n), 0.0, 0.0});
  const int r = residence_level(working_set_bytes, md, opts);
  tp.residence_level = r;
  const int mem_link = static_cast<int>(md.cache_levels.size());
  for (const auto& s : k.streams) {
    const double b = stream_bytes_per_iteration(k, s);
    switch (s.direction) {
      case StreamDirection::load:
        for (int l = 0; l <= r; ++l) tp.links[static_cast<std::size_t>(l)].load_bytes += b;
        break;
      case StreamDirection::store:
        tp.links[0].store_bytes += b;
        for (int l = 1; l <= r; ++l) {
          tp.links[static_cast<std::size_t>(l)].store_bytes += b;
          if (s.write_allocate) tp.links[static_cast<std::size_t>(l)].load_bytes += b;
        }
        break;
      case StreamDirection::nt_store:
        tp.links[static_cast<std::size_t>(mem_link)].store_bytes += b;
        break;
    }
  }
  return tp;
}

// ---------------------------------------------------------------------------
// Kernel files: {"kernel": {...}}

inline KernelDescriptor kernel_from_json(const json& doc, bool lenient = false) {
  ObjectReader outer(doc, "document", lenient);
  auto r = outer.child("kernel");
  KernelDescriptor k;
  k.name = r.string("name");
  auto w = parse_width(r.string("isa_width"));
  if (!w) throw schema_error("kernel.isa_width must be scalar|sse|avx");
  k.isa_width = *w;
  const auto epi = r.integer("elements_per_iteration");
  if (epi < 1) throw invariant_error("kernel.elements_per_iteration", "must be positive");
  k.elements_per_iteration = static_cast<std::uint64_t>(epi);
  k.flops_per_iteration = r.optional_number("flops_per_iteration").value_or(0.0);
  k.access_pattern = r.optional_string("access_pattern", k.name);
  k.uses_lea_trick = r.optional_boolean("uses_lea_trick").value_or(false);
  k.unroll = static_cast<int>(r.optional_integer("unroll").value_or(8));

  const auto& streams = r.raw("streams");
  if (!streams.is_array()) throw schema_error("kernel.streams must be an array");
  for (std::size_t i = 0; i < streams.size(); ++i) {
    ObjectReader s(streams[i], "kernel.streams[" + std::to_string(i) + "]", lenient);
    StreamDecl d;
    d.name = s.string("name");
    auto dir = parse_stream_direction(s.string("direction"));
    if (!dir) throw schema_error(s.path() + ".direction must be load|store|nt_store");
    d.direction = *dir;
    d.bytes_per_element = static_cast<std::uint64_t>(s.optional_integer("bytes_per_element").value_or(8));
    d.write_allocate = s.optional_boolean("write_allocate").value_or(false);
    s.finish();
    k.streams.push_back(std::move(d));
  }

  const auto& insts = r.raw("instructions");
  if (!insts.is_array()) throw schema_error("kernel.instructions must be an array");
  auto int_list = [](const ObjectReader& o, const std::string& key) {
    std::vector<int> out;
    if (const json* v = o.optional_raw(key)) {
      if (!v->is_array()) throw schema_error(o.path() + "." + key + " must be an array of indices");
      for (const auto& e : *v) out.push_back(static_cast<int>(ObjectReader::as_integer(e, o.path() + "." + key)));
    }
    return out;
  };
  for (std::size_t i = 0; i < insts.size(); ++i) {
    ObjectReader s(insts[i], "kernel.instructions[" + std::to_string(i) + "]", lenient);
    KernelInstruction ki;
    ki.mnemonic = s.string("mnemonic");
    auto iw = parse_width(s.optional_string("width", std::string(to_string(k.isa_width))));
    if (!iw) throw schema_error(s.path() + ".width must be scalar|sse|avx");
    ki.width = *iw;
    auto ip = parse_precision(s.optional_string("precision", "dp"));
    if (!ip) throw schema_error(s.path() + ".precision must be sp|dp|none");
    ki.precision = *ip;
    ki.count_per_iteration = static_cast<int>(s.optional_integer("count").value_or(1));
    ki.depends_on = int_list(s, "depends_on");
    ki.carried_from = int_list(s, "carried_from");
    ki.stream = s.optional_string("stream");
    s.finish();
    k.instructions.push_back(std::move(ki));
  }
  r.finish();
  outer.finish();
  validate_kernel(k);
  return k;
}

inline json kernel_to_json(const KernelDescriptor& k) {
  json r;
  r["name"] = k.name;
  r["isa_width"] = std::string(to_string(k.isa_width));
  r["elements_per_iteration"] = k.elements_per_iteration;
  r["flops_per_iteration"] = k.flops_per_iteration;
  r["access_pattern"] = k.access_pattern;
  r["uses_lea_trick"] = k.uses_lea_trick;
  r["unroll"] = k.unroll;
  json streams = json::array();
  for (const auto& s : k.streams) {
    json sj{{"name", s.name}, {"direction", std::string(to_string(s.direction))}, {"bytes_per_element", s.bytes_per_element}};
    if (s.direction == StreamDirection::store) sj["write_allocate"] = s.write_allocate;
    streams.push_back(std::move(sj));
  }
  r["streams"] = std::move(streams);
  json insts = json::array();
  for (const auto& i : k.instructions) {
    json ij{{"mnemonic", i.mnemonic},
            {"width", std::string(to_string(i.width))},
            {"precision", std::string(to_string(i.precision))},
            {"count", i.count_per_iteration}};
    if (!i.depends_on.empty()) ij["depends_on"] = i.depends_on;
    if (!i.carried_from.empty()) ij["carried_from"] = i.carried_from;
    if (!i.stream.empty()) ij["stream"] = i.stream;
    insts.push_back(std::move(ij));
  }
  r["instructions"] = std::move(insts);
  return json{{"kernel", std::move(r)}};
}

}  // namespace ecmkit
