#include "aqa/common.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace aqa {

FormatError::FormatError(const std::string& what, std::uint64_t byte_offset)
    : Error(byte_offset == kNoOffset ? what : what + " (at byte offset " + std::to_string(byte_offset) + ")"),
      detail_(what),
      byte_offset_(byte_offset) {}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::PQ: return "pq";
    case Axis::PC: return "pc";
    case Axis::CE: return "ce";
    case Axis::CU: return "cu";
  }
  return "?";
}

double composite_score(const AxisScores& s) { return (s.values[0] + s.values[1] + s.values[2] + s.values[3]) / 4.0; }

std::uint64_t Rng::index(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed) {
  uLong crc = seed;
  const auto* bytes = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, bytes, chunk);
    bytes += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace aqa
