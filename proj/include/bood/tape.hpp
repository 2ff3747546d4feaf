#pragma once

#include <Eigen/Core>
#include <cstring>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "bood/tensor.hpp"

namespace bood {

/// Keep large tensor blocks on the main heap so freed buffers are reused
/// across batches instead of being unmapped and re-faulted. Idempotent.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

enum class Pad { Same, Valid };

struct ConvDims {
  int B = 0, H = 0, W = 0, C = 0;
  int kh = 0, kw = 0, F = 0, stride = 1;
  int OH = 0, OW = 0, pad_top = 0, pad_left = 0;
};

inline ConvDims conv_dims(const std::vector<int>& x_shape, const std::vector<int>& w_shape,
                          int stride, Pad pad) {
  detail::require(x_shape.size() == 4, "conv2d input must be [B,H,W,C]");
  detail::require(w_shape.size() == 4, "conv2d kernel must be [kh,kw,C,F]");
  ConvDims d;
  d.B = x_shape[0];
  d.H = x_shape[1];
  d.W = x_shape[2];
  d.C = x_shape[3];
  d.kh = w_shape[0];
  d.kw = w_shape[1];
  d.F = w_shape[3];
  d.stride = stride;
  detail::require(stride >= 1, "conv2d stride must be >= 1");
  detail::require(d.kh % 2 == 1 && d.kw % 2 == 1, "conv2d kernel size must be odd");
  detail::require(w_shape[2] == d.C, "conv2d kernel channels must match input channels");
  if (pad == Pad::Same) {
    d.OH = (d.H + stride - 1) / stride;
    d.OW = (d.W + stride - 1) / stride;
    int ph = std::max((d.OH - 1) * stride + d.kh - d.H, 0);
    int pw = std::max((d.OW - 1) * stride + d.kw - d.W, 0);
    d.pad_top = ph / 2;
    d.pad_left = pw / 2;
  } else {
    detail::require(d.H >= d.kh && d.W >= d.kw, "conv2d valid: kernel larger than input");
    d.OH = (d.H - d.kh) / stride + 1;
    d.OW = (d.W - d.kw) / stride + 1;
  }
  return d;
}

namespace detail {

// cols layout: [B*OH*OW, kh*kw*C]; channel runs are contiguous memcpys.
template <class T>
void im2col(const T* x, const ConvDims& d, T* cols) {
  const int K = d.kh * d.kw * d.C;
  for (int b = 0; b < d.B; ++b) {
    for (int oy = 0; oy < d.OH; ++oy) {
      for (int ox = 0; ox < d.OW; ++ox) {
        T* row = cols + static_cast<std::size_t>((b * d.OH + oy) * d.OW + ox) * K;
        for (int ky = 0; ky < d.kh; ++ky) {
          const int iy = oy * d.stride - d.pad_top + ky;
          for (int kx = 0; kx < d.kw; ++kx) {
            const int ix = ox * d.stride - d.pad_left + kx;
            T* dst = row + (ky * d.kw + kx) * d.C;
            const bool in = iy >= 0 && iy < d.H && ix >= 0 && ix < d.W;
            if (d.C == 1) {
              *dst = in ? x[static_cast<std::size_t>((b * d.H + iy) * d.W + ix)] : T(0);
            } else if (in) {
              const T* src = x + static_cast<std::size_t>(((b * d.H + iy) * d.W + ix)) * d.C;
              std::memcpy(dst, src, sizeof(T) * d.C);
            } else {
              std::memset(dst, 0, sizeof(T) * d.C);
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvDims& d, T* dx) {
  const int K = d.kh * d.kw * d.C;
  for (int b = 0; b < d.B; ++b) {
    for (int oy = 0; oy < d.OH; ++oy) {
      for (int ox = 0; ox < d.OW; ++ox) {
        const T* row = cols + static_cast<std::size_t>((b * d.OH + oy) * d.OW + ox) * K;
        for (int ky = 0; ky < d.kh; ++ky) {
          const int iy = oy * d.stride - d.pad_top + ky;
          if (iy < 0 || iy >= d.H) continue;
          for (int kx = 0; kx < d.kw; ++kx) {
            const int ix = ox * d.stride - d.pad_left + kx;
            if (ix < 0 || ix >= d.W) continue;
            const T* src = row + (ky * d.kw + kx) * d.C;
            T* dst = dx + static_cast<std::size_t>(((b * d.H + iy) * d.W + ix)) * d.C;
            for (int c = 0; c < d.C; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Reverse-mode autodiff tape. Nodes are appended in construction order, so
/// the index order is already topological and the graph is acyclic by
/// construction; backward() visits each node exactly once in reverse.
template <class T>
class Tape {
 public:
  using Id = int;

  enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    MatMul,
    BiasAdd,
    Conv2D,
    Relu,
    Softplus,
    Sigmoid,
    Log,
    Square,
    Sum,
    Column,
    Reshape,
    Upsample2x,
    BceLogitsSum,
    ScaledNoise,
    KlStdNormal,
    Linear,
    ConvFused,
    MulChanSigns,
    AddBiasAct,
  };

  enum class Act { None, Relu, Softplus, Sigmoid };

  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using CMatMap = Eigen::Map<const Mat>;
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  using ArrMap = Eigen::Map<Arr>;
  using CArrMap = Eigen::Map<const Arr>;

  void reserve(std::size_t n) { nodes_.reserve(n); }
  std::size_t size() const { return nodes_.size(); }

  Id leaf(Tensor<T> v, bool needs_grad = false) {
    return push(Op::Leaf, -1, -1, std::move(v), needs_grad);
  }

  Id add(Id a, Id b) { return ew2(Op::Add, a, b); }
  Id sub(Id a, Id b) { return ew2(Op::Sub, a, b); }
  Id mul(Id a, Id b) { return ew2(Op::Mul, a, b); }
  Id div(Id a, Id b) { return ew2(Op::Div, a, b); }

  Id scale(Id a, T s) {
    Tensor<T> v = val(a);
    for (T& x : v.data) x *= s;
    Id id = push(Op::Scale, a, -1, std::move(v), needs(a));
    nodes_[id].scalar = s;
    return id;
  }

  Id add_scalar(Id a, T s) {
    Tensor<T> v = val(a);
    for (T& x : v.data) x += s;
    Id id = push(Op::AddScalar, a, -1, std::move(v), needs(a));
    nodes_[id].scalar = s;
    return id;
  }

  /// a treated as [m, k] with k = rows(b); b is [k, n].
  Id matmul(Id a, Id b) {
    const auto& bs = val(b).shape;
    detail::require(bs.size() == 2, "matmul rhs must be rank 2");
    const int k = bs[0], n = bs[1];
    detail::require(val(a).numel() % k == 0, "matmul lhs size not divisible by k");
    const int m = static_cast<int>(val(a).numel()) / k;
    Tensor<T> v({m, n});
    MatMap(v.data.data(), m, n).noalias() =
        CMatMap(val(a).data.data(), m, k) * CMatMap(val(b).data.data(), k, n);
    Id id = push(Op::MatMul, a, b, std::move(v), needs(a) || needs(b));
    nodes_[id].m = m;
    nodes_[id].k = k;
    nodes_[id].n = n;
    return id;
  }

  /// a [rows, n] + bias [n], broadcast over rows.
  Id bias_add(Id a, Id b) {
    const int n = static_cast<int>(val(b).numel());
    detail::require(val(a).numel() % n == 0, "bias_add: width mismatch");
    const int rows = static_cast<int>(val(a).numel()) / n;
    Tensor<T> v = val(a);
    const T* bias = val(b).data.data();
    T* p = v.data.data();
    for (int r = 0; r < rows; ++r, p += n)
      for (int j = 0; j < n; ++j) p[j] += bias[j];
    Id id = push(Op::BiasAdd, a, b, std::move(v), needs(a) || needs(b));
    nodes_[id].m = rows;
    nodes_[id].n = n;
    return id;
  }

  /// Cross-correlation, NHWC input, [kh,kw,C,F] kernel.
  Id conv2d(Id x, Id w, int stride, Pad pad) {
    ConvDims d = conv_dims(val(x).shape, val(w).shape, stride, pad);
    const int rows = d.B * d.OH * d.OW;
    const int K = d.kh * d.kw * d.C;
    AVec<T> cols(static_cast<std::size_t>(rows) * K);
    detail::im2col(val(x).data.data(), d, cols.data());
    Tensor<T> v({d.B, d.OH, d.OW, d.F});
    MatMap(v.data.data(), rows, d.F).noalias() =
        CMatMap(cols.data(), rows, K) * CMatMap(val(w).data.data(), K, d.F);
    Id id = push(Op::Conv2D, x, w, std::move(v), needs(x) || needs(w));
    nodes_[id].conv = d;
    // keep cols for the backward GEMMs
    if (nodes_[id].needs_grad) nodes_[id].scratch = std::move(cols);
    return id;
  }

  Id relu(Id a) {
    Tensor<T> v = val(a);
    ArrMap(v.data.data(), v.numel()) = ArrMap(v.data.data(), v.numel()).max(T(0));
    return push(Op::Relu, a, -1, std::move(v), needs(a));
  }
  Id softplus_op(Id a) {
    Tensor<T> v = val(a);
    ArrMap m(v.data.data(), v.numel());
    m = m.max(T(0)) + (-m.abs()).exp().log1p();
    return push(Op::Softplus, a, -1, std::move(v), needs(a));
  }
  Id sigmoid_op(Id a) {
    Tensor<T> v = val(a);
    ArrMap m(v.data.data(), v.numel());
    m = T(1) / (T(1) + (-m).exp());
    return push(Op::Sigmoid, a, -1, std::move(v), needs(a));
  }
  Id log_op(Id a) {
    Tensor<T> v = val(a);
    ArrMap m(v.data.data(), v.numel());
    m = m.log();
    return push(Op::Log, a, -1, std::move(v), needs(a));
  }
  Id square(Id a) { return ew1(Op::Square, a, [](T x) { return x * x; }); }

  /// softplus(rho) * eps — the reparameterized posterior noise term. The
  /// gradient flows to rho only; eps is a fixed draw.
  Id scaled_noise(Id rho, Id eps) {
    detail::require(val(rho).same_shape(val(eps)), "scaled_noise: shape mismatch");
    const std::size_t n = val(rho).numel();
    AVec<T> sp(n);
    ArrMap spm(sp.data(), n);
    spm = CArrMap(val(rho).data.data(), n);
    spm = spm.max(T(0)) + (-spm.abs()).exp().log1p();
    Tensor<T> v(val(rho).shape);
    ArrMap(v.data.data(), n) = spm * CArrMap(val(eps).data.data(), n);
    Id id = push(Op::ScaledNoise, rho, eps, std::move(v), needs(rho));
    nodes_[id].scratch = std::move(sp);  // softplus(rho), reused in backward
    return id;
  }

  /// Closed-form KL( N(mu, softplus(rho)^2) || N(0,1) ) summed over elements.
  Id kl_std_normal(Id mu, Id rho) {
    detail::require(val(mu).same_shape(val(rho)), "kl_std_normal: shape mismatch");
    const std::size_t n = val(mu).numel();
    AVec<T> sp(n);
    ArrMap spm(sp.data(), n);
    spm = CArrMap(val(rho).data.data(), n);
    spm = spm.max(T(0)) + (-spm.abs()).exp().log1p();
    CArrMap mum(val(mu).data.data(), n);
    Tensor<T> v({1});
    v.data[0] = (T(0.5) * (spm.square() + mum.square()) - spm.log()).sum() -
                T(0.5) * static_cast<T>(n);
    Id id = push(Op::KlStdNormal, mu, rho, std::move(v), needs(mu) || needs(rho));
    nodes_[id].scratch = std::move(sp);
    return id;
  }

  Id sum(Id a) {
    T s = 0;
    for (T x : val(a).data) s += x;
    Tensor<T> v({1});
    v.data[0] = s;
    return push(Op::Sum, a, -1, std::move(v), needs(a));
  }

  /// Extract column j of a [rows, cols] value as a rank-1 tensor.
  Id column(Id a, int j) {
    const auto& s = val(a).shape;
    detail::require(s.size() == 2 && j >= 0 && j < s[1], "column: bad index");
    const int rows = s[0], cols = s[1];
    Tensor<T> v({rows});
    for (int r = 0; r < rows; ++r) v.data[r] = val(a).data[static_cast<std::size_t>(r) * cols + j];
    Id id = push(Op::Column, a, -1, std::move(v), needs(a));
    nodes_[id].m = rows;
    nodes_[id].n = cols;
    nodes_[id].k = j;
    return id;
  }

  /// Fused x @ w + bias with activation; one node instead of three.
  Id linear(Id x, Id w, Id bias, Act act) {
    const auto& ws = val(w).shape;
    detail::require(ws.size() == 2, "linear: weight must be rank 2");
    const int k = ws[0], n = ws[1];
    detail::require(val(x).numel() % k == 0, "linear: input size not divisible by fan-in");
    detail::require(static_cast<int>(val(bias).numel()) == n, "linear: bias width mismatch");
    const int m = static_cast<int>(val(x).numel()) / k;
    Tensor<T> v({m, n});
    MatMap(v.data.data(), m, n).noalias() =
        CMatMap(val(x).data.data(), m, k) * CMatMap(val(w).data.data(), k, n);
    apply_bias_act(v.data.data(), val(bias).data.data(), m, n, act);
    Id id = push(Op::Linear, x, w, std::move(v), needs(x) || needs(w) || needs(bias));
    nodes_[id].c = bias;
    nodes_[id].m = m;
    nodes_[id].k = k;
    nodes_[id].n = n;
    nodes_[id].act = act;
    return id;
  }

  /// Fused cross-correlation + bias + activation.
  Id conv2d_fused(Id x, Id w, Id bias, int stride, Pad pad, Act act) {
    ConvDims d = conv_dims(val(x).shape, val(w).shape, stride, pad);
    detail::require(static_cast<int>(val(bias).numel()) == d.F, "conv: bias width mismatch");
    const int rows = d.B * d.OH * d.OW;
    const int K = d.kh * d.kw * d.C;
    AVec<T> cols(static_cast<std::size_t>(rows) * K);
    detail::im2col(val(x).data.data(), d, cols.data());
    Tensor<T> v({d.B, d.OH, d.OW, d.F});
    MatMap(v.data.data(), rows, d.F).noalias() =
        CMatMap(cols.data(), rows, K) * CMatMap(val(w).data.data(), K, d.F);
    apply_bias_act(v.data.data(), val(bias).data.data(), rows, d.F, act);
    Id id = push(Op::ConvFused, x, w, std::move(v), needs(x) || needs(w) || needs(bias));
    nodes_[id].c = bias;
    nodes_[id].conv = d;
    nodes_[id].act = act;
    if (nodes_[id].needs_grad) nodes_[id].scratch = std::move(cols);
    return id;
  }

  /// act(a + b + bias), bias broadcast over rows; the Flipout recombine.
  Id add_bias_act(Id a, Id b, Id bias, Act act) {
    detail::require(val(a).same_shape(val(b)), "add_bias_act: shape mismatch");
    const int n = static_cast<int>(val(bias).numel());
    detail::require(val(a).numel() % n == 0, "add_bias_act: bias width mismatch");
    const int rows = static_cast<int>(val(a).numel()) / n;
    Tensor<T> v = val(a);
    ArrMap(v.data.data(), v.numel()) += CArrMap(val(b).data.data(), v.numel());
    apply_bias_act(v.data.data(), val(bias).data.data(), rows, n, act);
    Id id = push(Op::AddBiasAct, a, b, std::move(v), needs(a) || needs(b) || needs(bias));
    nodes_[id].c = bias;
    nodes_[id].m = rows;
    nodes_[id].n = n;
    nodes_[id].act = act;
    return id;
  }

  /// a [B, P..., C] * signs [B, C], the sign broadcast over all middle dims.
  Id mul_chan_signs(Id a, Id signs) {
    const auto& as = val(a).shape;
    const auto& ss = val(signs).shape;
    detail::require(as.size() >= 2 && ss.size() == 2 && as.front() == ss[0] && as.back() == ss[1],
                    "mul_chan_signs: incompatible shapes");
    const int B = as.front(), C = as.back();
    const std::size_t spatial = val(a).numel() / (static_cast<std::size_t>(B) * C);
    Tensor<T> v = val(a);
    const T* sg = val(signs).data.data();
    T* p = v.data.data();
    for (int b = 0; b < B; ++b)
      for (std::size_t q = 0; q < spatial; ++q, p += C)
        for (int c = 0; c < C; ++c) p[c] *= sg[static_cast<std::size_t>(b) * C + c];
    Id id = push(Op::MulChanSigns, a, signs, std::move(v), needs(a));
    nodes_[id].m = B;
    nodes_[id].n = C;
    return id;
  }

  /// Same data, new shape (row-major layout unchanged).
  Id reshape(Id a, std::vector<int> shape) {
    detail::require(Tensor<T>::numel_of(shape) == val(a).numel(), "reshape: size mismatch");
    Tensor<T> v(std::move(shape), val(a).data);
    return push(Op::Reshape, a, -1, std::move(v), needs(a));
  }

  /// Nearest-neighbor 2x spatial upsampling of [B,H,W,C].
  Id upsample2x(Id a) {
    const auto& s = val(a).shape;
    detail::require(s.size() == 4, "upsample2x input must be [B,H,W,C]");
    const int B = s[0], H = s[1], W = s[2], C = s[3];
    Tensor<T> v({B, 2 * H, 2 * W, C});
    const T* src = val(a).data.data();
    T* dst = v.data.data();
    for (int b = 0; b < B; ++b)
      for (int y = 0; y < 2 * H; ++y)
        for (int x = 0; x < 2 * W; ++x) {
          const T* sp = src + static_cast<std::size_t>(((b * H + y / 2) * W + x / 2)) * C;
          T* dp = dst + static_cast<std::size_t>(((b * 2 * H + y) * 2 * W + x)) * C;
          std::memcpy(dp, sp, sizeof(T) * C);
        }
    return push(Op::Upsample2x, a, -1, std::move(v), needs(a));
  }

  /// Sum over the batch of the stable binary cross-entropy on raw logits:
  /// max(z,0) - z*t + log(1 + exp(-|z|)).
  Id bce_with_logits_sum(Id logits, Id targets) {
    detail::require(val(logits).numel() == val(targets).numel(), "bce: size mismatch");
    T s = 0;
    const auto& z = val(logits).data;
    const auto& t = val(targets).data;
    for (std::size_t i = 0; i < z.size(); ++i)
      s += std::max(z[i], T(0)) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
    Tensor<T> v({1});
    v.data[0] = s;
    return push(Op::BceLogitsSum, logits, targets, std::move(v), needs(logits));
  }

  const Tensor<T>& val(Id id) const { return nodes_[id].v; }
  const Tensor<T>& grad(Id id) const { return nodes_[id].g; }
  bool needs(Id id) const { return nodes_[id].needs_grad; }

  /// Reverse sweep from a scalar loss. Gradients of leaves that do not
  /// contribute stay exactly zero.
  void backward(Id loss) {
    detail::require(loss >= 0 && loss < static_cast<Id>(nodes_.size()), "backward: bad id");
    if (val(loss).numel() != 1) throw std::invalid_argument("backward requires a scalar loss");
    for (auto& n : nodes_)
      if (n.needs_grad && n.g.data.size() != n.v.data.size()) {
        n.g.shape = n.v.shape;
        n.g.data.assign(n.v.data.size(), T(0));
      } else if (n.needs_grad) {
        std::fill(n.g.data.begin(), n.g.data.end(), T(0));
      }
    if (!nodes_[loss].needs_grad) return;
    nodes_[loss].g.data[0] = T(1);
    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.op == Op::Leaf) continue;
      backward_one(n);
    }
  }

 private:
  struct Node {
    Op op;
    Id a, b;
    Id c = -1;  // bias input for fused ops
    Tensor<T> v;
    Tensor<T> g;
    bool needs_grad;
    T scalar = 0;
    int m = 0, k = 0, n = 0;
    Act act = Act::None;
    ConvDims conv;
    AVec<T> scratch;
  };

  std::vector<Node> nodes_;
  AVec<T> gpre_;  // activation-backward staging buffer

  static void apply_bias_act(T* v, const T* bias, int rows, int n, Act act) {
    T* p = v;
    for (int r = 0; r < rows; ++r, p += n)
      for (int j = 0; j < n; ++j) p[j] += bias[j];
    const std::size_t sz = static_cast<std::size_t>(rows) * n;
    ArrMap m(v, sz);
    switch (act) {
      case Act::Relu:
        m = m.max(T(0));
        break;
      case Act::Softplus:
        m = m.max(T(0)) + (-m.abs()).exp().log1p();
        break;
      case Act::Sigmoid:
        m = T(1) / (T(1) + (-m).exp());
        break;
      case Act::None:
        break;
    }
  }

  // Gradient through the activation, from the post-activation value.
  const T* act_backward(const T* g, const T* v, std::size_t sz, Act act) {
    if (act == Act::None) return g;
    gpre_.resize(sz);
    switch (act) {
      case Act::Relu:
        for (std::size_t i = 0; i < sz; ++i) gpre_[i] = v[i] > T(0) ? g[i] : T(0);
        break;
      case Act::Sigmoid:
        for (std::size_t i = 0; i < sz; ++i) gpre_[i] = g[i] * v[i] * (T(1) - v[i]);
        break;
      case Act::Softplus:
        ArrMap(gpre_.data(), sz) = CArrMap(g, sz) * (T(1) - (-CArrMap(v, sz)).exp());
        break;
      case Act::None:
        break;
    }
    return gpre_.data();
  }

  Id push(Op op, Id a, Id b, Tensor<T> v, bool needs_grad) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.v = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <class F>
  Id ew1(Op op, Id a, F f) {
    Tensor<T> v = val(a);
    for (T& x : v.data) x = f(x);
    return push(op, a, -1, std::move(v), needs(a));
  }

  Id ew2(Op op, Id a, Id b) {
    detail::require(val(a).same_shape(val(b)),
                    "elementwise op shape mismatch: " + shape_str(val(a).shape) + " vs " +
                        shape_str(val(b).shape));
    Tensor<T> v = val(a);
    const auto& bd = val(b).data;
    switch (op) {
      case Op::Add:
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] += bd[i];
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] -= bd[i];
        break;
      case Op::Mul:
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] *= bd[i];
        break;
      case Op::Div:
        for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] /= bd[i];
        break;
      default:
        throw std::logic_error("ew2: not an elementwise op");
    }
    return push(op, a, b, std::move(v), needs(a) || needs(b));
  }

  T* gptr(Id id) { return nodes_[id].g.data.data(); }

  void backward_one(Node& n) {
    const T* g = n.g.data.data();
    const std::size_t sz = n.v.data.size();
    Node& na = nodes_[n.a];
    switch (n.op) {
      case Op::Add: {
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i];
        Node& nb = nodes_[n.b];
        if (nb.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) nb.g.data[i] += g[i];
        break;
      }
      case Op::Sub: {
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i];
        Node& nb = nodes_[n.b];
        if (nb.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) nb.g.data[i] -= g[i];
        break;
      }
      case Op::Mul: {
        Node& nb = nodes_[n.b];
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i] * nb.v.data[i];
        if (nb.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) nb.g.data[i] += g[i] * na.v.data[i];
        break;
      }
      case Op::Div: {
        Node& nb = nodes_[n.b];
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i] / nb.v.data[i];
        if (nb.needs_grad)
          for (std::size_t i = 0; i < sz; ++i)
            nb.g.data[i] -= g[i] * n.v.data[i] / nb.v.data[i];
        break;
      }
      case Op::Scale:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i] * n.scalar;
        break;
      case Op::AddScalar:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i];
        break;
      case Op::MatMul: {
        Node& nb = nodes_[n.b];
        CMatMap G(g, n.m, n.n);
        if (na.needs_grad)
          MatMap(na.g.data.data(), n.m, n.k).noalias() +=
              G * CMatMap(nb.v.data.data(), n.k, n.n).transpose();
        if (nb.needs_grad)
          MatMap(nb.g.data.data(), n.k, n.n).noalias() +=
              CMatMap(na.v.data.data(), n.m, n.k).transpose() * G;
        break;
      }
      case Op::BiasAdd: {
        Node& nb = nodes_[n.b];
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i];
        if (nb.needs_grad) {
          const T* p = g;
          for (int r = 0; r < n.m; ++r, p += n.n)
            for (int j = 0; j < n.n; ++j) nb.g.data[j] += p[j];
        }
        break;
      }
      case Op::Conv2D: {
        Node& nb = nodes_[n.b];
        const ConvDims& d = n.conv;
        const int rows = d.B * d.OH * d.OW;
        const int K = d.kh * d.kw * d.C;
        CMatMap G(g, rows, d.F);
        if (nb.needs_grad)
          MatMap(nb.g.data.data(), K, d.F).noalias() +=
              CMatMap(n.scratch.data(), rows, K).transpose() * G;
        if (na.needs_grad) {
          AVec<T> dcols(static_cast<std::size_t>(rows) * K);
          MatMap(dcols.data(), rows, K).noalias() =
              G * CMatMap(nb.v.data.data(), K, d.F).transpose();
          detail::col2im_add(dcols.data(), d, na.g.data.data());
        }
        break;
      }
      case Op::Relu:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i)
            if (na.v.data[i] > T(0)) na.g.data[i] += g[i];
        break;
      case Op::Softplus:
        // d/dx softplus(x) = sigmoid(x) = 1 - exp(-softplus(x))
        if (na.needs_grad)
          ArrMap(na.g.data.data(), sz) +=
              CArrMap(g, sz) * (T(1) - (-CArrMap(n.v.data.data(), sz)).exp());
        break;
      case Op::Sigmoid:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i)
            na.g.data[i] += g[i] * n.v.data[i] * (T(1) - n.v.data[i]);
        break;
      case Op::Log:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i] / na.v.data[i];
        break;
      case Op::Square:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i] * T(2) * na.v.data[i];
        break;
      case Op::Sum:
        if (na.needs_grad)
          for (std::size_t i = 0; i < na.g.data.size(); ++i) na.g.data[i] += g[0];
        break;
      case Op::Column:
        if (na.needs_grad)
          for (int r = 0; r < n.m; ++r)
            na.g.data[static_cast<std::size_t>(r) * n.n + n.k] += g[r];
        break;
      case Op::Reshape:
        if (na.needs_grad)
          for (std::size_t i = 0; i < sz; ++i) na.g.data[i] += g[i];
        break;
      case Op::Upsample2x: {
        if (!na.needs_grad) break;
        const auto& s = na.v.shape;
        const int B = s[0], H = s[1], W = s[2], C = s[3];
        for (int b = 0; b < B; ++b)
          for (int y = 0; y < 2 * H; ++y)
            for (int x = 0; x < 2 * W; ++x) {
              const T* gp = g + static_cast<std::size_t>(((b * 2 * H + y) * 2 * W + x)) * C;
              T* dp = na.g.data.data() + static_cast<std::size_t>(((b * H + y / 2) * W + x / 2)) * C;
              for (int c = 0; c < C; ++c) dp[c] += gp[c];
            }
        break;
      }
      case Op::BceLogitsSum: {
        if (!na.needs_grad) break;
        Node& nb = nodes_[n.b];
        for (std::size_t i = 0; i < na.v.data.size(); ++i)
          na.g.data[i] += g[0] * (sigmoid(na.v.data[i]) - nb.v.data[i]);
        break;
      }
      case Op::ScaledNoise: {
        // d/drho [softplus(rho) * eps] = eps * sigmoid(rho)
        if (!na.needs_grad) break;
        Node& nb = nodes_[n.b];
        const std::size_t m = na.v.data.size();
        CArrMap sp(n.scratch.data(), m);
        ArrMap(na.g.data.data(), m) +=
            CArrMap(g, m) * CArrMap(nb.v.data.data(), m) * (T(1) - (-sp).exp());
        break;
      }
      case Op::KlStdNormal: {
        Node& nb = nodes_[n.b];
        const std::size_t m = na.v.data.size();
        CArrMap sp(n.scratch.data(), m);
        if (na.needs_grad)
          ArrMap(na.g.data.data(), m) += g[0] * CArrMap(na.v.data.data(), m);
        if (nb.needs_grad)
          ArrMap(nb.g.data.data(), m) +=
              g[0] * ((sp - T(1) / sp) * (T(1) - (-sp).exp()));
        break;
      }
      case Op::Linear: {
        Node& nb = nodes_[n.b];
        Node& nc = nodes_[n.c];
        const T* gp = act_backward(g, n.v.data.data(), sz, n.act);
        CMatMap G(gp, n.m, n.n);
        if (na.needs_grad)
          MatMap(na.g.data.data(), n.m, n.k).noalias() +=
              G * CMatMap(nb.v.data.data(), n.k, n.n).transpose();
        if (nb.needs_grad)
          MatMap(nb.g.data.data(), n.k, n.n).noalias() +=
              CMatMap(na.v.data.data(), n.m, n.k).transpose() * G;
        if (nc.needs_grad) {
          const T* p = gp;
          for (int r = 0; r < n.m; ++r, p += n.n)
            for (int j = 0; j < n.n; ++j) nc.g.data[j] += p[j];
        }
        break;
      }
      case Op::ConvFused: {
        Node& nb = nodes_[n.b];
        Node& nc = nodes_[n.c];
        const ConvDims& d = n.conv;
        const int rows = d.B * d.OH * d.OW;
        const int K = d.kh * d.kw * d.C;
        const T* gp = act_backward(g, n.v.data.data(), sz, n.act);
        CMatMap G(gp, rows, d.F);
        if (nb.needs_grad)
          MatMap(nb.g.data.data(), K, d.F).noalias() +=
              CMatMap(n.scratch.data(), rows, K).transpose() * G;
        if (na.needs_grad) {
          AVec<T> dcols(static_cast<std::size_t>(rows) * K);
          MatMap(dcols.data(), rows, K).noalias() =
              G * CMatMap(nb.v.data.data(), K, d.F).transpose();
          detail::col2im_add(dcols.data(), d, na.g.data.data());
        }
        if (nc.needs_grad) {
          const T* p = gp;
          for (int r = 0; r < rows; ++r, p += d.F)
            for (int j = 0; j < d.F; ++j) nc.g.data[j] += p[j];
        }
        break;
      }
      case Op::AddBiasAct: {
        Node& nb = nodes_[n.b];
        Node& nc = nodes_[n.c];
        const T* gp = act_backward(g, n.v.data.data(), sz, n.act);
        if (na.needs_grad)
          ArrMap(na.g.data.data(), sz) += CArrMap(gp, sz);
        if (nb.needs_grad)
          ArrMap(nb.g.data.data(), sz) += CArrMap(gp, sz);
        if (nc.needs_grad) {
          const T* p = gp;
          for (int r = 0; r < n.m; ++r, p += n.n)
            for (int j = 0; j < n.n; ++j) nc.g.data[j] += p[j];
        }
        break;
      }
      case Op::MulChanSigns: {
        if (!na.needs_grad) break;
        Node& nb = nodes_[n.b];
        const int B = n.m, C = n.n;
        const std::size_t spatial = sz / (static_cast<std::size_t>(B) * C);
        const T* sg = nb.v.data.data();
        const T* gp = g;
        T* da = na.g.data.data();
        for (int b = 0; b < B; ++b)
          for (std::size_t q = 0; q < spatial; ++q, gp += C, da += C)
            for (int c = 0; c < C; ++c) da[c] += gp[c] * sg[static_cast<std::size_t>(b) * C + c];
        break;
      }
      case Op::Leaf:
        break;
    }
  }
};

}  // namespace bood
