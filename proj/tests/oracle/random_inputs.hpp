#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ecmkit/ecmkit.hpp"

// Random inputs shared by the property suites and the acceptance run.
namespace gen {

using namespace ecmkit;

inline const std::vector<MachineDescription>& machines() {
  static const std::vector<MachineDescription> all{resolve_machine("snb"), resolve_machine("ivb"),
                                                   resolve_machine("hsw"), resolve_machine("bdw")};
  return all;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::uint64_t random_ws(std::mt19937_64& rng) {
  return static_cast<std::uint64_t>(std::exp2(uniform(rng, 10, 32)));
}

inline ChipConfig random_config(const MachineDescription& md, std::mt19937_64& rng) {
  std::vector<ChipConfig> options{resolve_config(md, std::nullopt, std::nullopt)};
  if (md.numa_domains_per_chip > 1) {
    options.push_back(resolve_config(md, std::nullopt, false));
    options.push_back(resolve_config(md, std::nullopt, true));
    for (const auto& [mode, _] : md.snoop_profiles) {
      if (mode != SnoopMode::DIR) options.push_back(resolve_config(md, mode, false));
      options.push_back(resolve_config(md, mode, true));
    }
  }
  return pick(options, rng);
}

inline const std::vector<std::string>& streaming_kernels() {
  static const std::vector<std::string> names{"triad", "triad_lea", "triad_noarith", "dot",    "load_only",
                                              "copy",  "store_only", "nt_store",     "update", "daxpy"};
  return names;
}

// A builtin kernel with its arithmetic reshuffled: counts changed, extra
// instructions from the machine table appended with random same-iteration and
// loop-carried dependencies.
inline KernelDescriptor random_kernel(const MachineDescription& md, std::mt19937_64& rng) {
  const Width w = pick(std::vector<Width>{Width::scalar, Width::sse, Width::avx}, rng);
  auto k = builtin_kernel_for(md, pick(streaming_kernels(), rng), w);
  for (auto& i : k.instructions) {
    if (!is_port_model_mnemonic(i.mnemonic)) i.count_per_iteration = uniform_int(rng, 0, 3);
  }
  std::vector<const InstSpec*> rows;
  for (const auto& r : md.instruction_table) {
    if (r.width == w) rows.push_back(&r);
  }
  const int extra = uniform_int(rng, 0, 4);
  for (int e = 0; e < extra; ++e) {
    const auto* r = pick(rows, rng);
    KernelInstruction i;
    i.mnemonic = r->mnemonic;
    i.width = r->width;
    i.precision = r->precision;
    i.count_per_iteration = uniform_int(rng, 1, 2);
    const int n = static_cast<int>(k.instructions.size());
    if (uniform_int(rng, 0, 1)) i.depends_on.push_back(uniform_int(rng, 0, n - 1));
    if (uniform_int(rng, 0, 2) == 0) i.carried_from.push_back(n);
    if (uniform_int(rng, 0, 3) == 0) i.carried_from.push_back(uniform_int(rng, 0, n - 1));
    k.instructions.push_back(i);
  }
  k.unroll = uniform_int(rng, 1, 16);
  validate_kernel(k);
  return k;
}

// Some configurations have no published latency (HSW outside DIR, for one).
inline bool latencies_known(const MachineDescription& md, const ChipConfig& cfg) {
  try {
    for (std::size_t l = 0; l < md.cache_levels.size(); ++l) level_latency(md, l, cfg);
    memory_latency(md, cfg);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace gen
