// SPDX-License-Identifier: Apache-2.0
#include "spikacom/rng.hpp"

#include "spikacom/error.hpp"

#include <cmath>
#include <numbers>

namespace spikacom {

std::uint64_t Rng::mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::split(std::uint64_t index) const { return Rng(mix(key_ ^ mix(index + 0x243f6a8885a308d3ULL)), 0); }

Rng Rng::split(std::string_view tag) const {
  // FNV-1a keeps tag hashing stable across platforms.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return Rng(mix(key_ + mix(h)), 0);
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  // Box-Muller without caching so the stream position is a pure function of draws.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::complex<double> Rng::cnormal(double variance) {
  const double s = std::sqrt(variance / 2.0);
  const double re = normal();
  return {s * re, s * normal()};
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::below(0)");
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = (*this)();
  } while (x >= limit);
  return x % n;
}

}  // namespace spikacom
