#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ecmkit/error.hpp"

namespace ecmkit {

inline constexpr std::uint64_t line_size_bytes = 64;

enum class Width { scalar, sse, avx };
enum class Precision { sp, dp, none };

inline constexpr std::string_view to_string(Width w) {
  switch (w) {
    case Width::scalar: return "scalar";
    case Width::sse: return "sse";
    case Width::avx: return "avx";
  }
  return "?";
}

inline constexpr std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::sp: return "sp";
    case Precision::dp: return "dp";
    case Precision::none: return "none";
  }
  return "?";
}

inline std::optional<Width> parse_width(std::string_view s) {
  if (s == "scalar") return Width::scalar;
  if (s == "sse") return Width::sse;
  if (s == "avx") return Width::avx;
  return std::nullopt;
}

inline std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "sp") return Precision::sp;
  if (s == "dp") return Precision::dp;
  if (s == "none") return Precision::none;
  return std::nullopt;
}

inline constexpr std::uint64_t element_bytes(Precision p) { return p == Precision::sp ? 4 : 8; }

// Bytes moved by one register-wide memory instruction.
inline constexpr std::uint64_t register_bytes(Width w, Precision p) {
  switch (w) {
    case Width::scalar: return element_bytes(p);
    case Width::sse: return 16;
    case Width::avx: return 32;
  }
  return 0;
}

inline constexpr std::uint64_t lanes(Width w, Precision p) { return register_bytes(w, p) / element_bytes(p); }

namespace detail {

inline std::pair<double, std::string_view> split_number(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.' ||
                             text[i] == 'e' || text[i] == 'E' || text[i] == '+' || text[i] == '-')) {
    // stop at a unit that begins with 'e'/'E' only when followed by a letter
    if ((text[i] == 'e' || text[i] == 'E') &&
        (i + 1 >= text.size() || std::isalpha(static_cast<unsigned char>(text[i + 1])))) {
      break;
    }
    ++i;
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + i, value);
  if (ec != std::errc() || ptr != text.data() + i || i == 0) {
    throw precondition_error("cannot parse number in '" + std::string(text) + "'");
  }
  auto unit = text.substr(i);
  while (!unit.empty() && unit.front() == ' ') unit.remove_prefix(1);
  return {value, unit};
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

// Parses "16kB", "10 MB", "1GB", "4096". Prefixes are binary (1 kB = 1024 B).
inline std::uint64_t parse_size(std::string_view text) {
  auto [value, unit] = detail::split_number(text);
  const auto u = detail::lower(unit);
  double scale = 1.0;
  if (u.empty() || u == "b") {
    scale = 1.0;
  } else if (u == "kb" || u == "k" || u == "kib") {
    scale = 1024.0;
  } else if (u == "mb" || u == "m" || u == "mib") {
    scale = 1024.0 * 1024.0;
  } else if (u == "gb" || u == "g" || u == "gib") {
    scale = 1024.0 * 1024.0 * 1024.0;
  } else {
    throw precondition_error("unknown size unit '" + std::string(unit) + "'");
  }
  const double bytes = value * scale;
  if (bytes < 0 || bytes != std::floor(bytes)) {
    throw precondition_error("size must be a whole number of bytes: '" + std::string(text) + "'");
  }
  return static_cast<std::uint64_t>(bytes);
}

// Parses "2.3GHz", "1800MHz", "2.3e9". Bare numbers are Hz.
inline double parse_frequency(std::string_view text) {
  auto [value, unit] = detail::split_number(text);
  const auto u = detail::lower(unit);
  if (u.empty() || u == "hz") return value;
  if (u == "khz") return value * 1e3;
  if (u == "mhz") return value * 1e6;
  if (u == "ghz") return value * 1e9;
  throw precondition_error("unknown frequency unit '" + std::string(unit) + "'");
}

}  // namespace ecmkit
