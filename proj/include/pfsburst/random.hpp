#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include <absl/random/internal/pcg_engine.h>
#include <boost/random/exponential_distribution.hpp>

namespace pfs {

/// PCG64 (XSL-RR 128/64). The bare engine, not absl::InsecureBitGen: the
/// latter salts every seed with per-process entropy.
using Rng = absl::random_internal::pcg64_2018_engine;

/// Independent stream keyed by (seed, ids...). Streams with distinct keys
/// are statistically independent; equal keys reproduce the same sequence.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint32_t> ids) {
  std::seed_seq::result_type lo = static_cast<std::uint32_t>(seed);
  std::seed_seq::result_type hi = static_cast<std::uint32_t>(seed >> 32);
  std::vector<std::seed_seq::result_type> key{lo, hi};
  key.insert(key.end(), ids.begin(), ids.end());
  std::seed_seq seq(key.begin(), key.end());
  return Rng(seq);
}

/// Uniform on (0, 1], 53-bit resolution.
inline double uniform_open0(Rng& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

/// Unit-mean exponential (ziggurat).
inline double unit_exponential(Rng& rng) {
  return boost::random::exponential_distribution<double>(1.0)(rng);
}

}  // namespace pfs
