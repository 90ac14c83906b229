#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aqa {

// Error taxonomy. The CLI maps these onto exit codes (2 config, 3 data
// format, 4 numeric failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset = kNoOffset);
  std::uint64_t byte_offset() const { return byte_offset_; }
  // Message without the offset suffix.
  const std::string& detail() const { return detail_; }
  static constexpr std::uint64_t kNoOffset = ~std::uint64_t{0};

 private:
  std::string detail_;
  std::uint64_t byte_offset_;
};

// Input outside an operation's mathematical domain (empty sequence,
// constant vector for a correlation, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kNumAxes = 4;

enum class Axis : std::uint8_t { PQ = 0, PC = 1, CE = 2, CU = 3 };

inline constexpr std::array<Axis, kNumAxes> kAxes{Axis::PQ, Axis::PC, Axis::CE, Axis::CU};

std::string_view axis_name(Axis axis);  // "pq", "pc", "ce", "cu"

// Production Quality, Production Complexity, Content Enjoyment, Content
// Usefulness. Used for labels and predictions alike.
struct AxisScores {
  std::array<double, kNumAxes> values{};

  double& operator[](Axis a) { return values[static_cast<std::size_t>(a)]; }
  double operator[](Axis a) const { return values[static_cast<std::size_t>(a)]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool operator==(const AxisScores&) const = default;
};

// Arithmetic mean of the four axes.
double composite_score(const AxisScores& s);

// Deterministic RNG. mt19937_64 output is fixed by the standard; the
// distributions in <random> are not, so the few we need are written here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n). n must be > 0.
  std::uint64_t index(std::uint64_t n);
  double normal();

  // Derive an independent stream, e.g. one per epoch.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void shuffle(T& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.index(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed = 0);

}  // namespace aqa
