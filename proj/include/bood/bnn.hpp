#pragma once

#include <atomic>
#include <functional>
#include <thread>

#include "bood/adam.hpp"
#include "bood/nn.hpp"
#include "bood/stats.hpp"

namespace bood {

inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*log(2*pi)

/// Heteroscedastic Gaussian negative log-likelihood for one prediction.
inline double gaussian_nll(double yhat, double sigma_a, double y) {
  detail::require(sigma_a > 0.0, "gaussian_nll: sigma_a must be positive");
  const double r = yhat - y;
  return kHalfLog2Pi + std::log(sigma_a) + r * r / (2.0 * sigma_a * sigma_a);
}

/// KL(q || N(0,1)) for a factorized Gaussian posterior, closed form:
/// sum over weights of -log(sigma_q) + (sigma_q^2 + mu^2)/2 - 1/2.
template <class T>
inline double kl_mean_field(const VariationalParam<T>& vp) {
  double kl = 0.0;
  for (std::size_t i = 0; i < vp.count(); ++i) {
    const double mu = static_cast<double>(vp.mu.data[i]);
    const double sq = softplus(static_cast<double>(vp.rho.data[i]));
    kl += -std::log(sq) + 0.5 * (sq * sq + mu * mu) - 0.5;
  }
  return kl;
}

template <class T>
inline double kl_total(const BayesNet<T>& net) {
  double kl = 0.0;
  for (std::size_t i = 0; i < net.kernels.size(); ++i)
    kl += kl_mean_field(net.kernels[i]) + kl_mean_field(net.biases[i]);
  return kl;
}

template <class T>
struct ElboIds {
  typename Tape<T>::Id loss, nll_sum, kl;
  typename Tape<T>::Id output;  // [B,2] raw head
};

/// Builds the batch ELBO on the tape:
///   loss = sum_i gaussian_nll(yhat_i, softplus(sraw_i), y_i) + kl_weight * KL.
template <class T>
ElboIds<T> elbo_on_tape(Tape<T>& t, const BayesNet<T>& net, const TapeBinding<T>& b,
                        typename Tape<T>::Id x, const std::vector<T>& y, Rng& rng,
                        double kl_weight) {
  detail::require(kl_weight > 0.0, "elbo: kl_weight must be positive");
  const int B = static_cast<int>(y.size());
  auto out = net.forward(t, b, x, rng);
  detail::require(t.val(out).shape == std::vector<int>({B, 2}), "elbo: head must be [B,2]");
  auto yhat = t.column(out, 0);
  auto sigma = t.softplus_op(t.column(out, 1));
  auto res = t.sub(yhat, t.leaf(Tensor<T>({B}, typename Tensor<T>::Vec(y.begin(), y.end()))));
  auto quad = t.scale(t.div(t.square(res), t.square(sigma)), T(0.5));
  auto nll_sum = t.add_scalar(t.sum(t.add(t.log_op(sigma), quad)),
                              static_cast<T>(static_cast<double>(B) * kHalfLog2Pi));
  auto kl = net.kl_on_tape(t, b);
  auto loss = t.add(nll_sum, t.scale(kl, static_cast<T>(kl_weight)));
  return {loss, nll_sum, kl, out};
}

struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-4;
  int epochs = 1;
  double kl_weight = 0.0;  // <= 0 selects batch_size / n
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::Flipout;
};

struct EpochStats {
  double mean_loss;  // mean per-batch ELBO
  double mean_nll;   // mean per-example NLL
  double mean_kl;    // mean per-batch closed-form KL
};

namespace detail {

template <class T>
void gather_batch(const Tensor<T>& X, const std::vector<int>& order, std::size_t begin,
                  std::size_t end, Tensor<T>& out) {
  const std::size_t ex = X.numel() / X.shape[0];
  out.shape[0] = static_cast<int>(end - begin);
  out.data.resize((end - begin) * ex);
  for (std::size_t i = begin; i < end; ++i)
    std::memcpy(out.data.data() + (i - begin) * ex, X.data.data() + static_cast<std::size_t>(order[i]) * ex,
                sizeof(T) * ex);
}

template <class T>
std::string find_nonfinite_layer(const BayesNet<T>& net, Tape<T>& t, const TapeBinding<T>& b) {
  for (std::size_t i = 0; i < net.kernels.size(); ++i) {
    if (!t.grad(b.kernel_mu[i]).all_finite() || !t.grad(b.kernel_rho[i]).all_finite())
      return "layer " + std::to_string(net.trainable[i]) + " kernel";
    if (!t.grad(b.bias_mu[i]).all_finite() || !t.grad(b.bias_rho[i]).all_finite())
      return "layer " + std::to_string(net.trainable[i]) + " bias";
  }
  return "unknown layer";
}

}  // namespace detail

/// ELBO training with Adam; one posterior draw per batch (reparameterization)
/// or Flipout perturbations per cfg.mode. Deterministic under (seed, config).
template <class T>
std::vector<EpochStats> train(BayesNet<T>& net, const Tensor<T>& X, const std::vector<T>& y,
                              const TrainConfig& cfg,
                              const std::function<void(int, const EpochStats&)>& on_epoch = {}) {
  tune_allocator();
  const int n = X.shape[0];
  detail::require(n == static_cast<int>(y.size()), "train: image/label count mismatch");
  detail::require(cfg.batch_size >= 1 && cfg.epochs >= 1, "train: batch >= 1 and epochs >= 1");
  net.spec.mode = cfg.mode;
  const double kl_weight =
      cfg.kl_weight > 0.0 ? cfg.kl_weight : static_cast<double>(cfg.batch_size) / n;

  AdamState<T> adam(cfg.lr);
  Rng master(cfg.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int nbatches = (n + cfg.batch_size - 1) / cfg.batch_size;

  std::vector<std::string> names;
  for (std::size_t i = 0; i < net.kernels.size(); ++i) {
    const std::string base = "layer" + std::to_string(net.trainable[i]);
    names.push_back(base + ".kernel.mu");
    names.push_back(base + ".kernel.rho");
    names.push_back(base + ".bias.mu");
    names.push_back(base + ".bias.rho");
  }

  std::vector<EpochStats> history;
  Tensor<T> xb(X.shape);
  std::vector<T> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = master.split(static_cast<std::uint64_t>(epoch));
    Rng shuffle = erng.split(0);
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }
    double loss_acc = 0, nll_acc = 0, kl_acc = 0;
    for (int bi = 0; bi < nbatches; ++bi) {
      const std::size_t begin = static_cast<std::size_t>(bi) * cfg.batch_size;
      const std::size_t end = std::min<std::size_t>(begin + cfg.batch_size, n);
      detail::gather_batch(X, order, begin, end, xb);
      yb.resize(end - begin);
      for (std::size_t i = begin; i < end; ++i) yb[i - begin] = y[order[i]];

      Tape<T> t;
      t.reserve(64 + 12 * net.kernels.size());
      auto bind = net.bind(t);
      Rng brng = erng.split(1 + static_cast<std::uint64_t>(bi));
      auto ids = elbo_on_tape(t, net, bind, t.leaf(xb), yb, brng, kl_weight);

      const double loss = static_cast<double>(t.val(ids.loss).data[0]);
      if (!std::isfinite(loss)) {
        t.backward(ids.loss);
        throw std::runtime_error("NaN loss at epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(bi) + " (" +
                                 detail::find_nonfinite_layer(net, t, bind) + ")");
      }
      t.backward(ids.loss);

      std::vector<Tensor<T>*> params;
      std::vector<const Tensor<T>*> grads;
      for (std::size_t i = 0; i < net.kernels.size(); ++i) {
        params.push_back(&net.kernels[i].mu);
        grads.push_back(&t.grad(bind.kernel_mu[i]));
        params.push_back(&net.kernels[i].rho);
        grads.push_back(&t.grad(bind.kernel_rho[i]));
        params.push_back(&net.biases[i].mu);
        grads.push_back(&t.grad(bind.bias_mu[i]));
        params.push_back(&net.biases[i].rho);
        grads.push_back(&t.grad(bind.bias_rho[i]));
      }
      adam.step(params, grads, names);

      loss_acc += loss;
      nll_acc += static_cast<double>(t.val(ids.nll_sum).data[0]);
      kl_acc += static_cast<double>(t.val(ids.kl).data[0]);
    }
    EpochStats st{loss_acc / nbatches, nll_acc / n, kl_acc / nbatches};
    history.push_back(st);
    if (on_epoch) on_epoch(epoch, st);
  }
  return history;
}

/// T resampled forward passes through the posterior for one input (Eq. 4
/// machinery): sigma_e is the T-1-denominator sample stddev of the yhat_i,
/// sigma_a the mean softplus-transformed aleatoric output.
struct PredictionBundle {
  std::vector<double> yhats;    // per resample
  std::vector<double> sigmas_a; // per resample, softplus applied
  double y_mean = 0, sigma_e = 0, sigma_a = 0;
};

namespace detail {

inline void finalize_bundle(PredictionBundle& p) {
  p.y_mean = mean_of(p.yhats);
  p.sigma_e = sample_stddev(p.yhats);
  p.sigma_a = mean_of(p.sigmas_a);
}

}  // namespace detail

template <class T>
PredictionBundle predict_with(SampledForward<T>& fw, const T* image, int resamples,
                              const Rng& rng) {
  detail::require(resamples >= 2, "predict: need T >= 2 resamples");
  PredictionBundle p;
  p.yhats.reserve(resamples);
  p.sigmas_a.reserve(resamples);
  for (int i = 0; i < resamples; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    const auto& out = fw.run(image, r);
    p.yhats.push_back(static_cast<double>(out[0]));
    p.sigmas_a.push_back(softplus(static_cast<double>(out[1])));
  }
  detail::finalize_bundle(p);
  return p;
}

template <class T>
PredictionBundle predict(const BayesNet<T>& net, const Tensor<T>& image, int resamples, Rng& rng) {
  SampledForward<T> fw(&net);
  return predict_with(fw, image.data.data(), resamples, rng);
}

/// Bundle per image over a [n, ...] stack; parallel across images, each image
/// owning a split stream so results are schedule-independent.
template <class T>
std::vector<PredictionBundle> predict_all(const BayesNet<T>& net, const Tensor<T>& X,
                                          int resamples, const Rng& base, int jobs = 1) {
  const int n = X.shape[0];
  const std::size_t ex = X.numel() / n;
  std::vector<PredictionBundle> out(n);
  jobs = std::max(1, std::min(jobs, n));
  std::atomic<int> next{0};
  auto worker = [&]() {
    SampledForward<T> fw(&net);
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) break;
      Rng r = base.split(static_cast<std::uint64_t>(i));
      out[i] = predict_with(fw, X.data.data() + static_cast<std::size_t>(i) * ex, resamples, r);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline std::vector<double> sigma_e_of(const std::vector<PredictionBundle>& bs) {
  std::vector<double> v(bs.size());
  for (std::size_t i = 0; i < bs.size(); ++i) v[i] = bs[i].sigma_e;
  return v;
}

inline std::vector<double> sigma_a_of(const std::vector<PredictionBundle>& bs) {
  std::vector<double> v(bs.size());
  for (std::size_t i = 0; i < bs.size(); ++i) v[i] = bs[i].sigma_a;
  return v;
}

inline std::vector<double> y_mean_of(const std::vector<PredictionBundle>& bs) {
  std::vector<double> v(bs.size());
  for (std::size_t i = 0; i < bs.size(); ++i) v[i] = bs[i].y_mean;
  return v;
}

/// RMS of (mean prediction - label) over a labeled set.
template <class T>
double test_rms(const std::vector<PredictionBundle>& bs, const std::vector<T>& labels) {
  detail::require(bs.size() == labels.size(), "test_rms: size mismatch");
  std::vector<double> err(bs.size());
  for (std::size_t i = 0; i < bs.size(); ++i)
    err[i] = bs[i].y_mean - static_cast<double>(labels[i]);
  return rms(err);
}

}  // namespace bood
