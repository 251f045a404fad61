#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace cvr {

// Base error for caller bugs and unrecoverable input problems.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Draws built straight from the engine's output so that sequences are identical
// across standard library implementations (std distributions are not).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

template <typename Range>
void shuffle(Range& range, Rng& rng) {
  const auto n = static_cast<int>(range.size());
  for (int i = n - 1; i > 0; --i) {
    const int j = uniform_int(rng, 0, i);
    using std::swap;
    swap(range[i], range[j]);
  }
}

// Timestamps carry millisecond resolution.
inline double round_ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

// Shortest round-trip decimal ("10", "85.88").
inline std::string format_seconds(double seconds) { return fmt::format("{}", seconds); }

// Half-up rounding to `digits` decimals. Values within 1e-9 (relative) below a
// half boundary are treated as on it, so 88.12499999999999 -> 88.13.
inline double round_half_up(double value, int digits) {
  const double scale = std::pow(10.0, digits);
  const double scaled = value * scale;
  const double nudge = 1e-9 * std::max(1.0, std::abs(scaled));
  return std::floor(scaled + 0.5 + nudge) / scale;
}

inline std::string format_fixed(double value, int digits) {
  return fmt::format("{:.{}f}", round_half_up(value, digits), digits);
}

// FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace cvr
