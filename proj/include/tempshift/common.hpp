#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tempshift {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid user-supplied configuration (bad fractions, paths, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when an input file cannot be parsed.
class FormatError : public Error {
 public:
  FormatError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Seeded generator used everywhere randomness is needed. mt19937_64 output is
/// fully specified by the standard, so the helpers below avoid the
/// implementation-defined std distributions.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Shortest-round-trip-safe decimal rendering with the given significant digits.
std::string format_double(double value, int significant_digits = 17);

/// Parses a double, throwing Error on trailing garbage or empty input.
double parse_double(std::string_view text);

/// Splits on a single delimiter character; keeps empty fields.
std::vector<std::string_view> split_fields(std::string_view line, char delim = '\t');

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace tempshift
