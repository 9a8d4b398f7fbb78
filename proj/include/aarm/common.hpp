#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace aarm {

// All numerics run in 64-bit floats. Matrices are row-major so that entity
// embeddings (one row per user/item/aspect) serialize as contiguous rows.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using Rng = std::mt19937_64;

inline constexpr const char* kVersion = "aarm 1.0.0";
inline constexpr const char* kDataFormat = "AARM-DATA v1";
inline constexpr const char* kCheckpointFormat = "AARM-CKPT v1";
inline constexpr const char* kTrainStateFormat = "AARM-TRAIN v1";

inline constexpr int kPadIndex = 0;

// splitmix64 finalizer; used to derive independent seeds from (seed, tag, ...)
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(seed ^ mix64(a + 0x51ed27f0u) ^ mix64(b + 0xc2b2ae35u));
}

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

// log1p-based softplus; safe against overflow for large |x|
inline double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string lowercase(std::string s);

// Deterministic shortest-ish float formatting for text artifacts.
std::string format_double(double v, int significant = 9);

}  // namespace aarm
