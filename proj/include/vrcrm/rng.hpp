#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace vrcrm {

// Deterministic RNG stream. All randomness in the library flows through
// this wrapper so that runs are reproducible from a single 64-bit seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Standard Gumbel noise, -log(-log(u)), u clamped away from {0,1}.
  double gumbel() {
    const double u = std::clamp(uniform(), 1e-12, 1.0 - 1e-12);
    return -std::log(-std::log(u));
  }

  // Draw an index from a discrete distribution given as k probabilities.
  int categorical(const double* probs, int k) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return k - 1;
  }

  // Fisher-Yates shuffle of an index vector.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over a string; used to derive per-cell seeds from labels.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace vrcrm
