#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "bood/rng.hpp"
#include "bood/tape.hpp"
#include "bood/tensor.hpp"

namespace bood {

enum class Activation { None, Relu, Softplus, Sigmoid };
enum class SamplingMode { Reparameterization, Flipout };

struct LayerSpec {
  enum class Kind { Conv2D, Dense, Flatten, Reshape, Upsample2x };
  Kind kind = Kind::Dense;
  int units = 0;                      // dense
  int filters = 0, kernel = 3, stride = 1;  // conv
  Pad pad = Pad::Same;
  Activation act = Activation::None;
  std::vector<int> target_shape;      // reshape

  static LayerSpec conv2d(int filters, int kernel, int stride, Activation act, Pad pad = Pad::Same) {
    LayerSpec s;
    s.kind = Kind::Conv2D;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    s.act = act;
    s.pad = pad;
    return s;
  }
  static LayerSpec dense(int units, Activation act) {
    LayerSpec s;
    s.kind = Kind::Dense;
    s.units = units;
    s.act = act;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = Kind::Flatten;
    return s;
  }
  static LayerSpec reshape(std::vector<int> shape) {
    LayerSpec s;
    s.kind = Kind::Reshape;
    s.target_shape = std::move(shape);
    return s;
  }
  static LayerSpec upsample2x() {
    LayerSpec s;
    s.kind = Kind::Upsample2x;
    return s;
  }
};

struct NetworkSpec {
  std::vector<int> input_shape;  // per example, e.g. [40,40,1] or [1600]
  std::vector<LayerSpec> layers;
  SamplingMode mode = SamplingMode::Flipout;
};

/// The two-conv trunk used throughout: conv(32) -> conv(64) -> dense(64) ->
/// dense(2), stride 2, relu hidden activations, linear two-unit head
/// (amplitude and raw aleatoric scale).
inline NetworkSpec model1_spec(SamplingMode mode = SamplingMode::Flipout) {
  NetworkSpec s;
  s.input_shape = {40, 40, 1};
  s.layers = {LayerSpec::conv2d(32, 3, 2, Activation::Relu),
              LayerSpec::conv2d(64, 3, 2, Activation::Relu), LayerSpec::flatten(),
              LayerSpec::dense(64, Activation::Relu), LayerSpec::dense(2, Activation::None)};
  s.mode = mode;
  return s;
}

/// Model 1 with variable filter counts in the two conv layers.
inline NetworkSpec model2_spec(int f1, int f2, SamplingMode mode = SamplingMode::Flipout) {
  NetworkSpec s = model1_spec(mode);
  s.layers[0].filters = f1;
  s.layers[1].filters = f2;
  return s;
}

/// Dense regression net over flattened input, two-unit head.
inline NetworkSpec dense_spec(std::vector<int> input_shape, std::vector<int> hidden,
                              SamplingMode mode = SamplingMode::Flipout) {
  NetworkSpec s;
  s.input_shape = std::move(input_shape);
  s.layers.push_back(LayerSpec::flatten());
  for (int h : hidden) s.layers.push_back(LayerSpec::dense(h, Activation::Relu));
  s.layers.push_back(LayerSpec::dense(2, Activation::None));
  s.mode = mode;
  return s;
}

struct LayerShapes {
  std::vector<int> out_shape;                 // per example
  std::vector<int> kernel_shape, bias_shape;  // empty for non-trainable layers
  int in_features = 0;                        // dense fan-in
};

inline std::vector<LayerShapes> walk_shapes(const NetworkSpec& spec) {
  std::vector<LayerShapes> out;
  std::vector<int> cur = spec.input_shape;
  for (const LayerSpec& l : spec.layers) {
    LayerShapes ls;
    switch (l.kind) {
      case LayerSpec::Kind::Conv2D: {
        detail::require(cur.size() == 3, "conv2d layer needs [H,W,C] input");
        std::vector<int> x4 = {1, cur[0], cur[1], cur[2]};
        std::vector<int> w4 = {l.kernel, l.kernel, cur[2], l.filters};
        ConvDims d = conv_dims(x4, w4, l.stride, l.pad);
        ls.kernel_shape = w4;
        ls.bias_shape = {l.filters};
        cur = {d.OH, d.OW, d.F};
        break;
      }
      case LayerSpec::Kind::Dense: {
        int fan_in = 1;
        for (int d : cur) fan_in *= d;
        ls.kernel_shape = {fan_in, l.units};
        ls.bias_shape = {l.units};
        ls.in_features = fan_in;
        cur = {l.units};
        break;
      }
      case LayerSpec::Kind::Flatten: {
        int n = 1;
        for (int d : cur) n *= d;
        cur = {n};
        break;
      }
      case LayerSpec::Kind::Reshape: {
        detail::require(Tensor<float>::numel_of(l.target_shape) == Tensor<float>::numel_of(cur),
                        "reshape layer size mismatch");
        cur = l.target_shape;
        break;
      }
      case LayerSpec::Kind::Upsample2x: {
        detail::require(cur.size() == 3, "upsample2x needs [H,W,C] input");
        cur = {2 * cur[0], 2 * cur[1], cur[2]};
        break;
      }
    }
    ls.out_shape = cur;
    out.push_back(std::move(ls));
  }
  return out;
}

inline int output_width(const NetworkSpec& spec) {
  auto shapes = walk_shapes(spec);
  detail::require(!shapes.empty() && shapes.back().out_shape.size() == 1, "network must end in a dense layer");
  return shapes.back().out_shape[0];
}

/// Factorized Gaussian posterior over one weight tensor: stddev = softplus(rho).
template <class T>
struct VariationalParam {
  Tensor<T> mu, rho;

  std::size_t count() const { return mu.numel(); }
};

/// Posterior sample w = mu + softplus(rho) * eps, eps ~ N(0,1).
template <class T>
inline Tensor<T> sample_weights(const VariationalParam<T>& vp, Rng& rng) {
  Tensor<T> w(vp.mu.shape);
  for (std::size_t i = 0; i < w.numel(); ++i)
    w.data[i] = vp.mu.data[i] + softplus(vp.rho.data[i]) * static_cast<T>(rng.normal());
  return w;
}

namespace detail {

template <class T>
typename Tape<T>::Act tape_act(Activation a) {
  switch (a) {
    case Activation::Relu:
      return Tape<T>::Act::Relu;
    case Activation::Softplus:
      return Tape<T>::Act::Softplus;
    case Activation::Sigmoid:
      return Tape<T>::Act::Sigmoid;
    case Activation::None:
      break;
  }
  return Tape<T>::Act::None;
}

/// Vectorized standard-normal fill (Box-Muller over 24-bit uniforms).
/// Used on hot paths; the scalar Rng::fill_normal is the reference stream.
inline void fast_fill_normal(Rng& rng, float* out, std::size_t n) {
  constexpr std::size_t kChunk = 2048;  // pairs per chunk
  alignas(64) std::uint64_t raw[kChunk];
  alignas(64) float u1[kChunk], u2[kChunk], zc[kChunk], zs[kChunk];
  constexpr float kInv24 = 1.0f / 16777216.0f;
  constexpr float kTwoPi = 6.2831853071795865f;
  std::size_t i = 0;
  while (i < n) {
    std::size_t pairs = std::min(kChunk, (n - i + 1) / 2);
    rng.fill_u64(raw, pairs);
    for (std::size_t k = 0; k < pairs; ++k) {
      u1[k] = (static_cast<float>(raw[k] >> 40) + 0.5f) * kInv24;
      u2[k] = static_cast<float>((raw[k] >> 8) & 0xFFFFFFu) * kInv24;
    }
    Eigen::Map<Eigen::ArrayXf> a(u1, pairs), b(u2, pairs), c(zc, pairs), s(zs, pairs);
    a = (a.log() * -2.0f).sqrt();
    c = (b * kTwoPi).cos();
    s = (b * kTwoPi).sin();
    for (std::size_t k = 0; k < pairs; ++k) {
      out[i + 2 * k] = u1[k] * zc[k];
      if (i + 2 * k + 1 < n) out[i + 2 * k + 1] = u1[k] * zs[k];
    }
    i += 2 * pairs;
  }
}

inline void fast_fill_normal(Rng& rng, double* out, std::size_t n) { rng.fill_normal(out, n); }

}  // namespace detail

/// Ids of the parameter leaves bound onto a tape for one forward/backward.
template <class T>
struct TapeBinding {
  std::vector<typename Tape<T>::Id> kernel_mu, kernel_rho, bias_mu, bias_rho;
};

/// Mean-field variational network: every kernel and bias carries an
/// independent Gaussian posterior against a standard-normal prior.
template <class T>
class BayesNet {
 public:
  NetworkSpec spec;
  std::vector<LayerShapes> shapes;           // per layer
  std::vector<int> trainable;                // layer index per trainable slot
  std::vector<VariationalParam<T>> kernels;  // per trainable slot
  std::vector<VariationalParam<T>> biases;

  BayesNet() = default;

  /// mu ~ N(0, 0.05^2), rho set so the initial posterior stddev is 0.01.
  static BayesNet init(const NetworkSpec& spec, Rng& rng) {
    BayesNet net;
    net.spec = spec;
    net.shapes = walk_shapes(spec);
    const T rho0 = static_cast<T>(softplus_inverse(0.01));
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      if (net.shapes[li].kernel_shape.empty()) continue;
      net.trainable.push_back(static_cast<int>(li));
      VariationalParam<T> k, b;
      k.mu = Tensor<T>(net.shapes[li].kernel_shape);
      Rng krng = rng.split(2 * li);
      detail::fast_fill_normal(krng, k.mu.data.data(), k.mu.numel());
      for (T& v : k.mu.data) v *= T(0.05);
      k.rho = Tensor<T>(net.shapes[li].kernel_shape);
      k.rho.fill(rho0);
      b.mu = Tensor<T>(net.shapes[li].bias_shape);  // zero biases
      b.rho = Tensor<T>(net.shapes[li].bias_shape);
      b.rho.fill(rho0);
      net.kernels.push_back(std::move(k));
      net.biases.push_back(std::move(b));
    }
    return net;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kernels.size(); ++i) n += kernels[i].count() + biases[i].count();
    return n;
  }

  TapeBinding<T> bind(Tape<T>& t) const {
    TapeBinding<T> b;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      b.kernel_mu.push_back(t.leaf(kernels[i].mu, true));
      b.kernel_rho.push_back(t.leaf(kernels[i].rho, true));
      b.bias_mu.push_back(t.leaf(biases[i].mu, true));
      b.bias_rho.push_back(t.leaf(biases[i].rho, true));
    }
    return b;
  }

  /// Batched forward on the tape; x is [B, ...input_shape]. One posterior
  /// draw shared across the batch (reparameterization) or per-example sign
  /// decorrelation (Flipout), per spec.mode.
  typename Tape<T>::Id forward(Tape<T>& t, const TapeBinding<T>& b, typename Tape<T>::Id x,
                               Rng& rng) const {
    const int B = t.val(x).shape[0];
    typename Tape<T>::Id h = x;
    int slot = 0;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      const LayerSpec& l = spec.layers[li];
      switch (l.kind) {
        case LayerSpec::Kind::Flatten:
          h = t.reshape(h, {B, static_cast<int>(t.val(h).numel()) / B});
          break;
        case LayerSpec::Kind::Reshape: {
          std::vector<int> s = {B};
          s.insert(s.end(), l.target_shape.begin(), l.target_shape.end());
          h = t.reshape(h, std::move(s));
          break;
        }
        case LayerSpec::Kind::Upsample2x:
          h = t.upsample2x(h);
          break;
        case LayerSpec::Kind::Conv2D:
        case LayerSpec::Kind::Dense: {
          Rng lr = rng.split(li);
          if (spec.mode == SamplingMode::Flipout && B > 1)
            h = trainable_flipout(t, b, h, l, slot, B, lr);
          else
            h = trainable_reparam(t, b, h, l, slot, lr);
          ++slot;
          break;
        }
      }
    }
    return h;
  }

  /// Closed-form KL(q || N(0,1)) summed over all weights, built on the tape
  /// so it participates in the ELBO gradient.
  typename Tape<T>::Id kl_on_tape(Tape<T>& t, const TapeBinding<T>& b) const {
    typename Tape<T>::Id total = -1;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      auto k = t.kl_std_normal(b.kernel_mu[i], b.kernel_rho[i]);
      auto bs = t.kl_std_normal(b.bias_mu[i], b.bias_rho[i]);
      auto s = t.add(k, bs);
      total = (total < 0) ? s : t.add(total, s);
    }
    return total;
  }

 private:
  typename Tape<T>::Id sampled_bias(Tape<T>& t, const TapeBinding<T>& b, int slot, Rng& rng) const {
    Tensor<T> eps(biases[slot].mu.shape);
    detail::fast_fill_normal(rng, eps.data.data(), eps.numel());
    return t.add(b.bias_mu[slot], t.scaled_noise(b.bias_rho[slot], t.leaf(std::move(eps))));
  }

  typename Tape<T>::Id trainable_reparam(Tape<T>& t, const TapeBinding<T>& b,
                                         typename Tape<T>::Id h, const LayerSpec& l, int slot,
                                         Rng& rng) const {
    Rng wr = rng.split(0), br = rng.split(1);
    Tensor<T> eps(kernels[slot].mu.shape);
    detail::fast_fill_normal(wr, eps.data.data(), eps.numel());
    auto w = t.add(b.kernel_mu[slot], t.scaled_noise(b.kernel_rho[slot], t.leaf(std::move(eps))));
    auto bias = sampled_bias(t, b, slot, br);
    const auto act = detail::tape_act<T>(l.act);
    return (l.kind == LayerSpec::Kind::Conv2D)
               ? t.conv2d_fused(h, w, bias, l.stride, l.pad, act)
               : t.linear(h, w, bias, act);
  }

  // Shared perturbation decorrelated per example by sign vectors over input
  // channels/features (r) and output channels/features (s); the marginal law
  // of each example's weights equals the mean-field posterior.
  typename Tape<T>::Id trainable_flipout(Tape<T>& t, const TapeBinding<T>& b,
                                         typename Tape<T>::Id h, const LayerSpec& l, int slot,
                                         int B, Rng& rng) const {
    Rng wr = rng.split(0), br = rng.split(1), sr = rng.split(2);
    Tensor<T> eps(kernels[slot].mu.shape);
    detail::fast_fill_normal(wr, eps.data.data(), eps.numel());
    auto dw = t.scaled_noise(b.kernel_rho[slot], t.leaf(std::move(eps)));
    auto bias = sampled_bias(t, b, slot, br);
    const auto act = detail::tape_act<T>(l.act);

    const auto& in_shape = t.val(h).shape;
    typename Tape<T>::Id mean_lin, pert_lin;
    if (l.kind == LayerSpec::Kind::Conv2D) {
      const int C = in_shape[3];
      Tensor<T> r({B, C}), s({B, l.filters});
      sr.fill_signs(r.data.data(), r.numel());
      sr.fill_signs(s.data.data(), s.numel());
      mean_lin = t.conv2d(h, b.kernel_mu[slot], l.stride, l.pad);
      pert_lin = t.conv2d(t.mul_chan_signs(h, t.leaf(std::move(r))), dw, l.stride, l.pad);
      pert_lin = t.mul_chan_signs(pert_lin, t.leaf(std::move(s)));
    } else {
      const int D = static_cast<int>(t.val(h).numel()) / B;
      Tensor<T> r({B, D}), s({B, l.units});
      sr.fill_signs(r.data.data(), r.numel());
      sr.fill_signs(s.data.data(), s.numel());
      auto hflat = (in_shape.size() == 2) ? h : t.reshape(h, {B, D});
      mean_lin = t.matmul(hflat, b.kernel_mu[slot]);
      pert_lin = t.matmul(t.mul_chan_signs(hflat, t.leaf(std::move(r))), dw);
      pert_lin = t.mul_chan_signs(pert_lin, t.leaf(std::move(s)));
    }
    return t.add_bias_act(mean_lin, pert_lin, bias, act);
  }
};

/// Conventional fixed-weight network (the GAN is the one non-Bayesian model).
template <class T>
class PlainNet {
 public:
  NetworkSpec spec;
  std::vector<LayerShapes> shapes;
  std::vector<int> trainable;
  std::vector<Tensor<T>> kernels, biases;

  PlainNet() = default;

  /// Glorot-uniform kernels, zero biases.
  static PlainNet init(const NetworkSpec& spec, Rng& rng) {
    PlainNet net;
    net.spec = spec;
    net.shapes = walk_shapes(spec);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      if (net.shapes[li].kernel_shape.empty()) continue;
      net.trainable.push_back(static_cast<int>(li));
      const auto& ks = net.shapes[li].kernel_shape;
      Tensor<T> k(ks);
      std::size_t fan_in, fan_out;
      if (ks.size() == 4) {
        fan_in = static_cast<std::size_t>(ks[0]) * ks[1] * ks[2];
        fan_out = static_cast<std::size_t>(ks[0]) * ks[1] * ks[3];
      } else {
        fan_in = ks[0];
        fan_out = ks[1];
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      Rng lrng = rng.split(li);
      for (T& v : k.data) v = static_cast<T>(lrng.uniform(-limit, limit));
      net.kernels.push_back(std::move(k));
      net.biases.emplace_back(net.shapes[li].bias_shape);
    }
    return net;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kernels.size(); ++i) n += kernels[i].numel() + biases[i].numel();
    return n;
  }

  struct Binding {
    std::vector<typename Tape<T>::Id> kernel, bias;
  };

  Binding bind(Tape<T>& t, bool needs_grad) const {
    Binding b;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      b.kernel.push_back(t.leaf(kernels[i], needs_grad));
      b.bias.push_back(t.leaf(biases[i], needs_grad));
    }
    return b;
  }

  typename Tape<T>::Id forward(Tape<T>& t, const Binding& b, typename Tape<T>::Id x) const {
    const int B = t.val(x).shape[0];
    typename Tape<T>::Id h = x;
    int slot = 0;
    for (const LayerSpec& l : spec.layers) {
      switch (l.kind) {
        case LayerSpec::Kind::Flatten:
          h = t.reshape(h, {B, static_cast<int>(t.val(h).numel()) / B});
          break;
        case LayerSpec::Kind::Reshape: {
          std::vector<int> s = {B};
          s.insert(s.end(), l.target_shape.begin(), l.target_shape.end());
          h = t.reshape(h, std::move(s));
          break;
        }
        case LayerSpec::Kind::Upsample2x:
          h = t.upsample2x(h);
          break;
        case LayerSpec::Kind::Conv2D:
        case LayerSpec::Kind::Dense: {
          const auto act = detail::tape_act<T>(l.act);
          h = (l.kind == LayerSpec::Kind::Conv2D)
                  ? t.conv2d_fused(h, b.kernel[slot], b.bias[slot], l.stride, l.pad, act)
                  : t.linear(h, b.kernel[slot], b.bias[slot], act);
          ++slot;
          break;
        }
      }
    }
    return h;
  }

  /// Inference without gradients; x is [B, ...input_shape].
  Tensor<T> infer(const Tensor<T>& x) const {
    Tape<T> t;
    auto b = bind(t, false);
    return t.val(forward(t, b, t.leaf(x, false)));
  }
};

/// Forward-only evaluator drawing fresh posterior weights per call. The
/// posterior stddevs are cached at construction (the net must not change
/// while an evaluator is alive); scratch buffers are reused across calls,
/// so keep one instance per thread.
template <class T>
class SampledForward {
 public:
  explicit SampledForward(const BayesNet<T>* net) : net_(net) {
    tune_allocator();
    auto cache_sigma = [](const Tensor<T>& rho) {
      Tensor<T> s(rho.shape);
      for (std::size_t i = 0; i < rho.numel(); ++i) s.data[i] = softplus(rho.data[i]);
      return s;
    };
    for (std::size_t i = 0; i < net->kernels.size(); ++i) {
      w_.emplace_back(net->kernels[i].mu.shape);
      b_.emplace_back(net->biases[i].mu.shape);
      w_sigma_.push_back(cache_sigma(net->kernels[i].rho));
      b_sigma_.push_back(cache_sigma(net->biases[i].rho));
    }
  }

  /// Sample weights from the posterior (or pin them to the mean) and run one
  /// example; returns the final-layer raw outputs.
  const AVec<T>& run(const T* image, Rng& rng, bool mean_only = false) {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      materialize(net_->kernels[i].mu, w_sigma_[i], w_[i], rng, mean_only);
      materialize(net_->biases[i].mu, b_sigma_[i], b_[i], rng, mean_only);
    }
    return forward(image);
  }

 private:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using CMatMap = Eigen::Map<const Mat>;

  static void materialize(const Tensor<T>& mu, const Tensor<T>& sigma, Tensor<T>& out, Rng& rng,
                          bool mean_only) {
    const std::size_t n = mu.numel();
    if (mean_only) {
      std::copy(mu.data.begin(), mu.data.end(), out.data.begin());
      return;
    }
    detail::fast_fill_normal(rng, out.data.data(), n);
    const T* m = mu.data.data();
    const T* s = sigma.data.data();
    T* o = out.data.data();
    for (std::size_t i = 0; i < n; ++i) o[i] = m[i] + s[i] * o[i];
  }

  const AVec<T>& forward(const T* image) {
    cur_.assign(image, image + Tensor<T>::numel_of(net_->spec.input_shape));
    std::vector<int> shape = net_->spec.input_shape;
    int slot = 0;
    for (const LayerSpec& l : net_->spec.layers) {
      switch (l.kind) {
        case LayerSpec::Kind::Flatten:
        case LayerSpec::Kind::Reshape:
          shape = (l.kind == LayerSpec::Kind::Flatten)
                      ? std::vector<int>{static_cast<int>(cur_.size())}
                      : l.target_shape;
          break;
        case LayerSpec::Kind::Upsample2x: {
          const int H = shape[0], W = shape[1], C = shape[2];
          nxt_.resize(cur_.size() * 4);
          for (int y = 0; y < 2 * H; ++y)
            for (int x = 0; x < 2 * W; ++x)
              std::memcpy(&nxt_[(static_cast<std::size_t>(y) * 2 * W + x) * C],
                          &cur_[(static_cast<std::size_t>(y / 2) * W + x / 2) * C], sizeof(T) * C);
          cur_.swap(nxt_);
          shape = {2 * H, 2 * W, C};
          break;
        }
        case LayerSpec::Kind::Conv2D: {
          std::vector<int> x4 = {1, shape[0], shape[1], shape[2]};
          ConvDims d = conv_dims(x4, w_[slot].shape, l.stride, l.pad);
          const int rows = d.OH * d.OW;
          const int K = d.kh * d.kw * d.C;
          cols_.resize(static_cast<std::size_t>(rows) * K);
          detail::im2col(cur_.data(), d, cols_.data());
          nxt_.resize(static_cast<std::size_t>(rows) * d.F);
          MatMap(nxt_.data(), rows, d.F).noalias() =
              CMatMap(cols_.data(), rows, K) * CMatMap(w_[slot].data.data(), K, d.F);
          add_bias_activate(nxt_, b_[slot].data, l.act);
          cur_.swap(nxt_);
          shape = {d.OH, d.OW, d.F};
          ++slot;
          break;
        }
        case LayerSpec::Kind::Dense: {
          const int k = w_[slot].shape[0], n = w_[slot].shape[1];
          nxt_.resize(n);
          MatMap(nxt_.data(), 1, n).noalias() =
              CMatMap(cur_.data(), 1, k) * CMatMap(w_[slot].data.data(), k, n);
          add_bias_activate(nxt_, b_[slot].data, l.act);
          cur_.swap(nxt_);
          shape = {n};
          ++slot;
          break;
        }
      }
    }
    return cur_;
  }

  void add_bias_activate(AVec<T>& v, const AVec<T>& bias, Activation act) {
    const std::size_t n = bias.size();
    const std::size_t rows = v.size() / n;
    T* p = v.data();
    for (std::size_t r = 0; r < rows; ++r, p += n)
      for (std::size_t j = 0; j < n; ++j) p[j] += bias[j];
    switch (act) {
      case Activation::Relu:
        for (T& x : v) x = x > T(0) ? x : T(0);
        break;
      case Activation::Softplus:
        for (T& x : v) x = softplus(x);
        break;
      case Activation::Sigmoid:
        for (T& x : v) x = sigmoid(x);
        break;
      case Activation::None:
        break;
    }
  }

  const BayesNet<T>* net_;
  std::vector<Tensor<T>> w_, b_;
  std::vector<Tensor<T>> w_sigma_, b_sigma_;
  AVec<T> cur_, nxt_, cols_;
};

}  // namespace bood
