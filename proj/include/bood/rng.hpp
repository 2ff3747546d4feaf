#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bood/tensor.hpp"

namespace bood {

/// Counter-based splittable PRNG (SplitMix64 finalizer over key + counter).
/// Identical seed => identical stream. split(lane) derives a statistically
/// independent child stream; lanes must be distinct per call site.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x5851F42D4C957F2DULL)), ctr_(0) {}

  Rng split(std::uint64_t lane) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(lane * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    child.ctr_ = 0;
    return child;
  }

  std::uint64_t next_u64() { return mix(key_ + (++ctr_) * 0x9E3779B97F4A7C15ULL); }

  /// Block draw of the same stream; no serial dependency, so it vectorizes.
  void fill_u64(std::uint64_t* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = mix(key_ + (ctr_ + 1 + i) * 0x9E3779B97F4A7C15ULL);
    ctr_ += n;
  }

  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0,1) — never exactly zero, safe under log().
  double uniform_pos() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection to kill modulo bias.
    std::uint64_t t = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= t) return r % n;
    }
  }

  bool coin() { return (next_u64() >> 63) != 0; }

  /// Standard normal via Box-Muller; two uniforms per draw, deterministic.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Gamma(integer shape, scale) as a sum of exponentials.
  double gamma_int(int shape, double scale) {
    double prod = 1.0;
    for (int i = 0; i < shape; ++i) prod *= uniform_pos();
    return -scale * std::log(prod);
  }

  /// Beta(2,2): the median of three uniforms.
  double beta22() {
    double a = uniform(), b = uniform(), c = uniform();
    double lo = std::min(a, std::min(b, c));
    double hi = std::max(a, std::max(b, c));
    return a + b + c - lo - hi;
  }

  template <class T>
  void fill_normal(Tensor<T>& t) {
    fill_normal(t.data.data(), t.data.size());
  }

  template <class T>
  void fill_normal(T* out, std::size_t n) {
    // Pairs from one Box-Muller transform; tail draw discards the sine term.
    std::size_t i = 0;
    for (; i + 1 < n; i += 2) {
      double u1 = uniform_pos();
      double u2 = uniform();
      double r = std::sqrt(-2.0 * std::log(u1));
      out[i] = static_cast<T>(r * std::cos(6.283185307179586 * u2));
      out[i + 1] = static_cast<T>(r * std::sin(6.283185307179586 * u2));
    }
    if (i < n) out[i] = static_cast<T>(normal());
  }

  /// Random +-1 signs.
  template <class T>
  void fill_signs(T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = coin() ? T(1) : T(-1);
  }

  /// Sample k distinct indices from [0, n) without replacement
  /// (partial Fisher-Yates over an index vector).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
      std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
};

/// i.i.d. standard normal tensor, deterministic under seed.
template <class T>
inline Tensor<T> rng_standard_normal(Rng& rng, std::vector<int> shape) {
  Tensor<T> t(std::move(shape));
  rng.fill_normal(t);
  return t;
}

}  // namespace bood
