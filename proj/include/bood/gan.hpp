#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "bood/adam.hpp"
#include "bood/nn.hpp"
#include "bood/stats.hpp"

namespace bood {

/// Generator maps a latent vector to a sigmoid 40x40 image; the discriminator
/// mirrors the conv trunk of Model 1 and emits one raw logit.
struct GanSpec {
  int latent_dim = 64;
  NetworkSpec generator;
  NetworkSpec discriminator;
};

inline GanSpec default_gan_spec(int latent_dim = 64) {
  GanSpec g;
  g.latent_dim = latent_dim;
  g.generator.input_shape = {latent_dim};
  g.generator.layers = {LayerSpec::dense(5 * 5 * 64, Activation::Relu),
                        LayerSpec::reshape({5, 5, 64}),
                        LayerSpec::upsample2x(),
                        LayerSpec::conv2d(32, 3, 1, Activation::Relu),
                        LayerSpec::upsample2x(),
                        LayerSpec::conv2d(16, 3, 1, Activation::Relu),
                        LayerSpec::upsample2x(),
                        LayerSpec::conv2d(1, 3, 1, Activation::Sigmoid)};
  g.generator.mode = SamplingMode::Reparameterization;  // not variational; field unused
  g.discriminator.input_shape = {40, 40, 1};
  g.discriminator.layers = {LayerSpec::conv2d(32, 3, 2, Activation::Relu),
                            LayerSpec::conv2d(64, 3, 2, Activation::Relu), LayerSpec::flatten(),
                            LayerSpec::dense(64, Activation::Relu),
                            LayerSpec::dense(1, Activation::None)};
  return g;
}

struct GanTrainConfig {
  int batch_size = 64;
  double lr = 1e-4;
  int epochs = 1;
  std::uint64_t seed = 0;
};

struct GanEpochStats {
  double d_loss, g_loss;
  double fake_pixel_var;
};

struct Gan {
  GanSpec spec;
  PlainNet<float> generator;
  PlainNet<float> discriminator;
};

namespace detail {

inline double population_var(const AVec<float>& v) {
  double m = 0;
  for (float x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (float x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Alternating single-step adversarial training. Discriminator minimizes
/// BCE(real, 1) + BCE(fake, 0); generator minimizes BCE(fake, 1), the
/// non-saturating objective. Deterministic under seed.
inline Gan gan_train(const Tensor<float>& X_real, const GanSpec& spec, const GanTrainConfig& cfg,
                     std::vector<GanEpochStats>* history = nullptr) {
  using T = float;
  tune_allocator();
  const int n = X_real.shape[0];
  detail::require(n >= cfg.batch_size, "gan_train: dataset smaller than one batch");
  Rng master(cfg.seed);
  Gan gan;
  gan.spec = spec;
  Rng gi = master.split(0), di = master.split(1);
  gan.generator = PlainNet<T>::init(spec.generator, gi);
  gan.discriminator = PlainNet<T>::init(spec.discriminator, di);
  AdamState<T> adam_g(cfg.lr), adam_d(cfg.lr);

  std::vector<std::string> g_names, d_names;
  for (std::size_t i = 0; i < gan.generator.kernels.size(); ++i) {
    g_names.push_back("gen.layer" + std::to_string(gan.generator.trainable[i]) + ".kernel");
    g_names.push_back("gen.layer" + std::to_string(gan.generator.trainable[i]) + ".bias");
  }
  for (std::size_t i = 0; i < gan.discriminator.kernels.size(); ++i) {
    d_names.push_back("disc.layer" + std::to_string(gan.discriminator.trainable[i]) + ".kernel");
    d_names.push_back("disc.layer" + std::to_string(gan.discriminator.trainable[i]) + ".bias");
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t ex = X_real.numel() / n;
  const int nbatches = n / cfg.batch_size;  // full batches only; fake/real sizes match
  int collapse_streak = 0;
  bool warned = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = master.split(2 + static_cast<std::uint64_t>(epoch));
    Rng shuffle = erng.split(0);
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }
    double dl_acc = 0, gl_acc = 0, var_acc = 0;
    for (int bi = 0; bi < nbatches; ++bi) {
      Rng brng = erng.split(1 + static_cast<std::uint64_t>(bi));
      const int B = cfg.batch_size;
      Tensor<T> xb({B, X_real.shape[1], X_real.shape[2], X_real.shape[3]});
      for (int i = 0; i < B; ++i)
        std::memcpy(xb.data.data() + static_cast<std::size_t>(i) * ex,
                    X_real.data.data() + static_cast<std::size_t>(order[bi * B + i]) * ex,
                    sizeof(T) * ex);

      // --- discriminator step ---
      Rng z1 = brng.split(0);
      Tensor<T> z({B, spec.latent_dim});
      detail::fast_fill_normal(z1, z.data.data(), z.numel());
      Tensor<T> fake = gan.generator.infer(z);
      var_acc += detail::population_var(fake.data);
      {
        Tape<T> t;
        auto db = gan.discriminator.bind(t, true);
        auto real_logits = gan.discriminator.forward(t, db, t.leaf(xb));
        auto fake_logits = gan.discriminator.forward(t, db, t.leaf(fake));
        Tensor<T> ones({B, 1});
        ones.fill(T(1));
        Tensor<T> zeros({B, 1});
        auto loss = t.add(t.bce_with_logits_sum(real_logits, t.leaf(std::move(ones))),
                          t.bce_with_logits_sum(fake_logits, t.leaf(std::move(zeros))));
        const double lv = static_cast<double>(t.val(loss).data[0]) / B;
        if (!std::isfinite(lv))
          throw std::runtime_error("NaN discriminator loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(bi));
        t.backward(loss);
        std::vector<Tensor<T>*> params;
        std::vector<const Tensor<T>*> grads;
        for (std::size_t i = 0; i < gan.discriminator.kernels.size(); ++i) {
          params.push_back(&gan.discriminator.kernels[i]);
          grads.push_back(&t.grad(db.kernel[i]));
          params.push_back(&gan.discriminator.biases[i]);
          grads.push_back(&t.grad(db.bias[i]));
        }
        adam_d.step(params, grads, d_names);
        dl_acc += lv;
      }

      // --- generator step ---
      Rng z2 = brng.split(1);
      detail::fast_fill_normal(z2, z.data.data(), z.numel());
      {
        Tape<T> t;
        auto gb = gan.generator.bind(t, true);
        auto db = gan.discriminator.bind(t, false);
        auto fake_imgs = gan.generator.forward(t, gb, t.leaf(z));
        auto logits = gan.discriminator.forward(t, db, fake_imgs);
        Tensor<T> ones({B, 1});
        ones.fill(T(1));
        auto loss = t.bce_with_logits_sum(logits, t.leaf(std::move(ones)));
        const double lv = static_cast<double>(t.val(loss).data[0]) / B;
        if (!std::isfinite(lv))
          throw std::runtime_error("NaN generator loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(bi));
        t.backward(loss);
        std::vector<Tensor<T>*> params;
        std::vector<const Tensor<T>*> grads;
        for (std::size_t i = 0; i < gan.generator.kernels.size(); ++i) {
          params.push_back(&gan.generator.kernels[i]);
          grads.push_back(&t.grad(gb.kernel[i]));
          params.push_back(&gan.generator.biases[i]);
          grads.push_back(&t.grad(gb.bias[i]));
        }
        adam_g.step(params, grads, g_names);
        gl_acc += lv;
      }
    }
    GanEpochStats st{dl_acc / nbatches, gl_acc / nbatches, var_acc / nbatches};
    if (history) history->push_back(st);
    collapse_streak = (st.fake_pixel_var < 1e-4) ? collapse_streak + 1 : 0;
    if (collapse_streak >= 10 && !warned) {
      std::cerr << "warning: possible generator mode collapse (batch pixel variance < 1e-4 for "
                   "10 consecutive epochs)\n";
      warned = true;
    }
  }
  return gan;
}

/// Sigmoid discriminator score in (0,1); higher reads as more in-distribution.
inline double disc_score(const std::vector<float>& pixels, const PlainNet<float>& disc) {
  Tensor<float> x({1, disc.spec.input_shape[0], disc.spec.input_shape[1],
                   disc.spec.input_shape[2]});
  detail::require(pixels.size() == x.numel(), "disc_score: pixel count mismatch");
  std::copy(pixels.begin(), pixels.end(), x.data.begin());
  return sigmoid(static_cast<double>(disc.infer(x).data[0]));
}

inline std::vector<double> disc_scores(const Tensor<float>& X, const PlainNet<float>& disc) {
  Tensor<float> logits = disc.infer(X);
  std::vector<double> out(logits.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = sigmoid(static_cast<double>(logits.data[i]));
  return out;
}

/// Score threshold mirroring Algorithm 1 on the (1 - score) axis: tau is the
/// nearest-rank 100*alpha percentile of iD validation scores, flag OoD iff
/// score < tau. alpha = 0 keeps every validation image in-distribution.
struct DiscThreshold {
  double tau = 0.0;
  double alpha = 0.05;
  std::size_t validation_size = 0;
};

inline DiscThreshold fit_disc_threshold(std::vector<double> validation_scores, double alpha) {
  detail::require(!validation_scores.empty(), "fit_disc_threshold: empty validation");
  detail::require(alpha >= 0.0 && alpha <= 1.0, "fit_disc_threshold: alpha must be in [0,1]");
  std::sort(validation_scores.begin(), validation_scores.end());
  const std::size_t m = validation_scores.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(m)));
  if (rank < 1) rank = 1;
  if (rank > m) rank = m;
  DiscThreshold th;
  th.tau = validation_scores[rank - 1];
  th.alpha = alpha;
  th.validation_size = m;
  return th;
}

inline bool classify_gan(double score, const DiscThreshold& th) { return score < th.tau; }

/// Fraction of a dataset flagged OoD by any classifier.
inline double proportion_ood(const std::vector<double>& values,
                             const std::function<bool(double)>& flag_ood) {
  detail::require(!values.empty(), "proportion_ood: empty dataset");
  std::size_t flagged = 0;
  for (double v : values)
    if (flag_ood(v)) ++flagged;
  return static_cast<double>(flagged) / static_cast<double>(values.size());
}

/// Deterministic generator samples for inspection or scoring.
inline Tensor<float> generate_images(const Gan& gan, int count, Rng& rng) {
  Tensor<float> z({count, gan.spec.latent_dim});
  detail::fast_fill_normal(rng, z.data.data(), z.numel());
  return gan.generator.infer(z);
}

}  // namespace bood
