/*
 * (C) Copyright 2026 HIES authors.
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace hies {

/// splitmix64 step; used only to derive engine seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Purpose tags keep the truth draw, member streams etc. on disjoint seeds.
enum class StreamTag : std::uint64_t {
  kTruth = 1,
  kMember = 2,
  kObsNoise = 3,
  kOracle = 4,
  kStudy = 5,
};

inline std::uint64_t stream_id(StreamTag tag, std::uint64_t index = 0) {
  return (static_cast<std::uint64_t>(tag) << 48) | (index & 0xFFFFFFFFFFFFULL);
}

/// Deterministic random stream: mt19937_64 with an explicit Box-Muller
/// transform so normal draws do not depend on the standard library's
/// distribution implementation. One stream per (seed, stream id) pair;
/// parallel generation stays reproducible because streams never interact.
class RngStream {
 public:
  RngStream(std::uint64_t root_seed, std::uint64_t stream)
      : engine_(splitmix64(splitmix64(root_seed) ^ splitmix64(stream + 0x51ED270B7A14C8D3ULL))) {}

  RngStream(std::uint64_t root_seed, StreamTag tag, std::uint64_t index = 0)
      : RngStream(root_seed, stream_id(tag, index)) {}

  /// Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal draw (Box-Muller, pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hies
