#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "ecmkit/error.hpp"
#include "ecmkit/units.hpp"

namespace ecmkit::probe {

enum class ChainLayout { consecutive_cl, random_cl };

inline constexpr std::string_view to_string(ChainLayout l) {
  return l == ChainLayout::consecutive_cl ? "consecutive_cl" : "random_cl";
}

// A closed walk over the cache lines of a buffer: next[i] is the line visited after line i.
struct PointerChain {
  std::uint64_t buffer_bytes = 0;
  std::uint64_t line_size = line_size_bytes;
  ChainLayout layout = ChainLayout::consecutive_cl;
  std::vector<std::uint32_t> next;

  std::size_t lines() const { return next.size(); }
};

inline void check_chain_size(std::uint64_t buffer_bytes, std::uint64_t line_size) {
  if (line_size == 0) throw precondition_error("line size must be positive");
  if (buffer_bytes < 2 * line_size || buffer_bytes % line_size != 0) {
    throw precondition_error("buffer of " + std::to_string(buffer_bytes) + " B must be a multiple of " +
                             std::to_string(line_size) + " B and hold at least two lines");
  }
  if (buffer_bytes / line_size > UINT32_MAX) throw precondition_error("buffer too large for a pointer chain");
}

inline PointerChain build_pointer_chain(std::uint64_t buffer_bytes, ChainLayout layout,
                                        std::uint64_t line_size = line_size_bytes, std::uint64_t seed = 0) {
  check_chain_size(buffer_bytes, line_size);
  const auto n = static_cast<std::uint32_t>(buffer_bytes / line_size);
  PointerChain c{buffer_bytes, line_size, layout, std::vector<std::uint32_t>(n)};
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  if (layout == ChainLayout::random_cl) {
    // Shuffle everything after line 0 so the walk still starts at the buffer base.
    std::mt19937_64 rng(seed);
    for (std::uint32_t i = n - 1; i > 1; --i) {
      const auto j = 1 + static_cast<std::uint32_t>(rng() % i);
      std::swap(order[i], order[j]);
    }
  }
  for (std::uint32_t i = 0; i < n; ++i) c.next[order[i]] = order[(i + 1) % n];
  return c;
}

// True when following `next` from line 0 visits every line exactly once and returns.
inline bool is_single_cycle(const PointerChain& c) {
  const auto n = c.next.size();
  if (n == 0) return false;
  std::vector<bool> seen(n, false);
  std::uint32_t at = 0;
  for (std::size_t step = 0; step < n; ++step) {
    if (at >= n || seen[at]) return false;
    seen[at] = true;
    at = c.next[at];
  }
  return at == 0;
}

}  // namespace ecmkit::probe
