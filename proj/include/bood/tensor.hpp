#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace bood {

namespace detail {
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace detail

/// 64-byte-aligned allocator. Keeping every numeric buffer at a fixed
/// alignment makes the SIMD kernels take the same code path on every run,
/// so results do not depend on heap history.
template <class T>
struct AlignedAlloc64 {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAlloc64() = default;
  template <class U>
  AlignedAlloc64(const AlignedAlloc64<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAlloc64<U>&) const {
    return true;
  }
};

template <class T>
using AVec = std::vector<T, AlignedAlloc64<T>>;

/// Dense row-major tensor. Shapes are immutable after construction; data is
/// a flat buffer of length prod(shape).
template <class T>
struct Tensor {
  using Vec = AVec<T>;

  std::vector<int> shape;
  Vec data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {
    for (int d : shape) detail::require(d > 0, "tensor dimensions must be positive");
  }
  Tensor(std::vector<int> s, Vec d) : shape(std::move(s)), data(std::move(d)) {
    detail::require(data.size() == numel_of(shape), "tensor data length must equal prod(shape)");
  }
  Tensor(std::vector<int> s, std::initializer_list<T> d) : shape(std::move(s)), data(d) {
    detail::require(data.size() == numel_of(shape), "tensor data length must equal prod(shape)");
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape.size()); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // 2-D accessor, row-major
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Contract check: NaN/Inf anywhere is a violation.
  void ensure_finite(const char* what) const {
    if (!all_finite()) throw std::runtime_error(std::string("non-finite values in ") + what);
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

/// Numerically safe softplus: log(1 + exp(t)) = max(t,0) + log1p(exp(-|t|)).
/// Strictly positive and monotone increasing on finite input.
template <class T>
inline T softplus(T t) {
  T m = t > T(0) ? t : T(0);
  return m + std::log1p(std::exp(-std::abs(t)));
}

template <class T>
inline T sigmoid(T t) {
  if (t >= T(0)) return T(1) / (T(1) + std::exp(-t));
  T e = std::exp(t);
  return e / (T(1) + e);
}

/// Inverse of softplus, exact where representable: log(exp(y) - 1).
template <class T>
inline T softplus_inverse(T y) {
  // log(e^y - 1) = y + log(1 - e^-y)
  return y + std::log(-std::expm1(-static_cast<double>(y)));
}

template <class T>
inline T clamp01(T v) {
  return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

}  // namespace bood
