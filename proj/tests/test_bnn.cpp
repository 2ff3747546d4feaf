#include <catch2/catch_amalgamated.hpp>

#include "bood/bnn.hpp"
#include "bood/datagen.hpp"
#include "oracles.hpp"

using namespace bood;

TEST_CASE("sample_weights: reparameterized posterior draws") {
  SECTION("zero-variance limit returns the mean") {
    VariationalParam<double> vp;
    vp.mu = Tensor<double>({4}, {1, -2, 3, 0.5});
    vp.rho = Tensor<double>({4});
    vp.rho.fill(-60.0);  // softplus(-60) underflows to ~1e-26
    Rng rng(1);
    auto w = sample_weights(vp, rng);
    for (int i = 0; i < 4; ++i) CHECK(w.data[i] == Catch::Approx(vp.mu.data[i]).margin(1e-12));
  }

  SECTION("unit posterior stddev shows up in the sample") {
    VariationalParam<double> vp;
    vp.mu = Tensor<double>({1});
    vp.rho = Tensor<double>({1});
    vp.rho.fill(softplus_inverse(1.0));
    Rng rng(2);
    const int n = 100000;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) draws[i] = sample_weights(vp, rng).data[0];
    const double sd = sample_stddev(draws);
    CHECK(sd > 0.99);
    CHECK(sd < 1.01);
  }

  SECTION("gradient of a sampled weight wrt mu is exactly 1") {
    Tape<double> t;
    auto mu = t.leaf(Tensor<double>({3}, {0.1, 0.2, 0.3}), true);
    auto rho = t.leaf(Tensor<double>({3}, {-1, -2, -3}), true);
    Tensor<double> eps({3});
    Rng rng(3);
    rng.fill_normal(eps);
    auto w = t.add(mu, t.scaled_noise(rho, t.leaf(eps)));
    t.backward(t.sum(w));
    for (double g : t.grad(mu).data) CHECK(g == Catch::Approx(1.0).margin(0));
  }
}

TEST_CASE("flipout: sign statistics and law equivalence") {
  SECTION("signs are exactly +-1 with zero mean") {
    Rng rng(10);
    const std::size_t n = 100000;
    std::vector<double> s(n);
    rng.fill_signs(s.data(), n);
    double sum = 0;
    for (double v : s) {
      REQUIRE((v == 1.0 || v == -1.0));
      sum += v;
    }
    CHECK(std::abs(sum / n) < 0.01);
  }

  SECTION("batch of one matches plain reparameterization in law") {
    // one dense layer 3 -> 2: compare mean/var of outputs over many draws
    NetworkSpec spec;
    spec.input_shape = {3};
    spec.layers = {LayerSpec::dense(2, Activation::None)};
    Rng ir(4);
    auto net = BayesNet<double>::init(spec, ir);
    Tensor<double> x({1, 3}, {0.4, -0.7, 1.1});
    const int trials = 20000;
    auto run_mode = [&](SamplingMode mode) {
      net.spec.mode = mode;
      std::vector<double> out0(trials);
      Rng rng(77);
      for (int i = 0; i < trials; ++i) {
        Tape<double> t;
        auto b = net.bind(t);
        Rng r = rng.split(i);
        out0[i] = t.val(net.forward(t, b, t.leaf(x), r)).data[0];
      }
      return std::pair(mean_of(out0), sample_stddev(out0));
    };
    auto [m_rep, s_rep] = run_mode(SamplingMode::Reparameterization);
    auto [m_flip, s_flip] = run_mode(SamplingMode::Flipout);
    CHECK(m_flip == Catch::Approx(m_rep).margin(0.02 * s_rep));
    CHECK(s_flip == Catch::Approx(s_rep).epsilon(0.05));
  }

  SECTION("per-example flipout output variance matches reparameterization within 5%") {
    // one dense layer 4 -> 1, batch of 8 identical examples
    NetworkSpec spec;
    spec.input_shape = {4};
    spec.layers = {LayerSpec::dense(1, Activation::None)};
    spec.mode = SamplingMode::Flipout;
    Rng ir(6);
    auto net = BayesNet<double>::init(spec, ir);
    // widen the posterior so the perturbation dominates
    for (auto& k : net.kernels) k.rho.fill(softplus_inverse(0.3));
    for (auto& b : net.biases) b.rho.fill(softplus_inverse(0.3));
    const int B = 8, trials = 10000;
    Tensor<double> xb({B, 4});
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < 4; ++j) xb.data[i * 4 + j] = 0.5 + 0.25 * j;
    std::vector<double> flip_samples, rep_samples;
    Rng rng(91);
    for (int i = 0; i < trials; ++i) {
      Tape<double> t;
      auto b = net.bind(t);
      Rng r = rng.split(i);
      const auto& out = t.val(net.forward(t, b, t.leaf(xb), r));
      for (int e = 0; e < B; ++e) flip_samples.push_back(out.data[e]);
    }
    net.spec.mode = SamplingMode::Reparameterization;
    Tensor<double> x1({1, 4});
    for (int j = 0; j < 4; ++j) x1.data[j] = 0.5 + 0.25 * j;
    Rng rng2(92);
    for (int i = 0; i < trials; ++i) {
      Tape<double> t;
      auto b = net.bind(t);
      Rng r = rng2.split(i);
      rep_samples.push_back(t.val(net.forward(t, b, t.leaf(x1), r)).data[0]);
    }
    const double v_flip = sample_stddev(flip_samples);
    const double v_rep = sample_stddev(rep_samples);
    CHECK(v_flip == Catch::Approx(v_rep).epsilon(0.05));
    CHECK(mean_of(flip_samples) == Catch::Approx(mean_of(rep_samples)).margin(0.05 * v_rep));
  }
}

TEST_CASE("gaussian_nll: closed-form values and contract") {
  CHECK(gaussian_nll(2.0, 1.0, 2.0) == Catch::Approx(0.9189385332046727).epsilon(1e-14));
  CHECK(gaussian_nll(3.0, 1.0, 2.0) == Catch::Approx(1.4189385332046727).epsilon(1e-14));
  // direct formula evaluation: 0.5 log(2pi) + log 2 + 4/(2*4)
  CHECK(gaussian_nll(4.0, 2.0, 2.0) == Catch::Approx(2.1120857137646180).epsilon(1e-14));
  CHECK_THROWS_AS(gaussian_nll(1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_nll(1.0, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("kl_mean_field: closed form against quadrature") {
  auto kl_one = [](double mu, double sigma) {
    VariationalParam<double> vp;
    vp.mu = Tensor<double>({1}, {mu});
    vp.rho = Tensor<double>({1}, {softplus_inverse(sigma)});
    return kl_mean_field(vp);
  };
  CHECK(kl_one(0.0, 1.0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(kl_one(1.0, 1.0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(kl_one(0.3, 0.7) == Catch::Approx(oracles::kl_by_quadrature(0.3, 0.7)).margin(1e-6));
  CHECK(kl_one(0.3, 0.7) == Catch::Approx(0.14667494393873238).margin(1e-9));

  SECTION("nonnegative, zero only at the prior") {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
      const double mu = rng.normal();
      const double sigma = 0.05 + 2.0 * rng.uniform();
      const double kl = kl_one(mu, sigma);
      CHECK(kl >= -1e-12);
      if (std::abs(mu) > 0.05 || std::abs(sigma - 1.0) > 0.05) CHECK(kl > 1e-4);
    }
  }

  SECTION("matches quadrature on 100 random pairs within 1e-6") {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
      const double mu = 2.0 * rng.normal();
      const double sigma = 0.05 + 3.0 * rng.uniform();
      CHECK(kl_one(mu, sigma) ==
            Catch::Approx(oracles::kl_by_quadrature(mu, sigma)).margin(1e-6));
    }
  }
}

TEST_CASE("elbo: limits and hand computation") {
  NetworkSpec spec;
  spec.input_shape = {2};
  spec.layers = {LayerSpec::dense(2, Activation::None)};
  spec.mode = SamplingMode::Reparameterization;
  Rng ir(12);
  auto net = BayesNet<double>::init(spec, ir);

  SECTION("posterior pinned to the prior contributes zero KL") {
    for (auto& k : net.kernels) {
      k.mu.fill(0.0);
      k.rho.fill(softplus_inverse(1.0));
    }
    for (auto& b : net.biases) {
      b.mu.fill(0.0);
      b.rho.fill(softplus_inverse(1.0));
    }
    Tape<double> t;
    auto b = net.bind(t);
    CHECK(t.val(net.kl_on_tape(t, b)).data[0] == Catch::Approx(0.0).margin(1e-10));
    CHECK(kl_total(net) == Catch::Approx(0.0).margin(1e-10));
  }

  SECTION("loss equals hand-computed NLL plus weighted closed-form KL") {
    Tensor<double> x({1, 2}, {0.3, -0.6});
    std::vector<double> y = {1.5};
    const double kl_weight = 0.37;
    Tape<double> t;
    auto b = net.bind(t);
    Rng noise(55);
    auto ids = elbo_on_tape(t, net, b, t.leaf(x), y, noise, kl_weight);
    // recompute the forward pass by hand from the same sampled weights: run
    // the tape pieces directly
    const auto& out = t.val(ids.output);
    const double nll_hand = gaussian_nll(out.data[0], softplus(out.data[1]), y[0]);
    const double kl_hand = kl_total(net);
    CHECK(t.val(ids.nll_sum).data[0] == Catch::Approx(nll_hand).margin(1e-10));
    CHECK(t.val(ids.kl).data[0] == Catch::Approx(kl_hand).margin(1e-8));
    CHECK(t.val(ids.loss).data[0] ==
          Catch::Approx(nll_hand + kl_weight * kl_hand).margin(1e-8));
  }

  SECTION("kl_weight must be positive; zero-weight limit is the pure NLL") {
    Tensor<double> x({1, 2}, {0.3, -0.6});
    std::vector<double> y = {1.5};
    Tape<double> t;
    auto b = net.bind(t);
    Rng noise(56);
    CHECK_THROWS_AS(elbo_on_tape(t, net, b, t.leaf(x), y, noise, 0.0), std::invalid_argument);
    Rng noise2(56);
    auto ids = elbo_on_tape(t, net, b, t.leaf(x), y, noise2, 1e-300);
    CHECK(t.val(ids.loss).data[0] ==
          Catch::Approx(t.val(ids.nll_sum).data[0]).epsilon(1e-12));
  }
}

TEST_CASE("train: loss decreases on an easy task and is seed-deterministic") {
  // linear-head net on a constant-label dataset
  NetworkSpec spec = dense_spec({4, 4, 1}, {}, SamplingMode::Flipout);
  DatasetHeader h;
  h.count = 256;
  h.height = h.width = 4;
  h.seed = 5;
  Dataset ds = generate_amplitude_dataset(h);
  auto X = stack_images<float>(ds.images);
  std::vector<float> y(256, 3.0f);  // constant labels

  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.lr = 1e-2;
  cfg.seed = 42;
  Rng ir(1);
  auto net = BayesNet<float>::init(spec, ir);
  auto hist = train(net, X, y, cfg);
  REQUIRE(hist.size() == 10);
  for (std::size_t e = 1; e < hist.size(); ++e) CHECK(hist[e].mean_loss < hist[e - 1].mean_loss);

  SECTION("same seed, same history; different seed differs") {
    Rng ir2(1);
    auto net2 = BayesNet<float>::init(spec, ir2);
    auto hist2 = train(net2, X, y, cfg);
    for (std::size_t e = 0; e < hist.size(); ++e) {
      CHECK(hist2[e].mean_loss == hist[e].mean_loss);
      CHECK(hist2[e].mean_nll == hist[e].mean_nll);
      CHECK(hist2[e].mean_kl == hist[e].mean_kl);
    }
    for (std::size_t s = 0; s < net.kernels.size(); ++s)
      CHECK(net2.kernels[s].mu.data == net.kernels[s].mu.data);
    Rng ir3(1);
    auto net3 = BayesNet<float>::init(spec, ir3);
    TrainConfig other = cfg;
    other.seed = 43;
    auto hist3 = train(net3, X, y, other);
    CHECK(hist3.back().mean_loss != hist.back().mean_loss);
  }
}

TEST_CASE("predict: resample statistics per the push-forward definition") {
  NetworkSpec spec = dense_spec({2, 2, 1}, {4}, SamplingMode::Flipout);
  Rng ir(3);
  auto net = BayesNet<double>::init(spec, ir);
  Tensor<double> img({2, 2, 1}, {0.2, 0.4, 0.6, 0.8});

  SECTION("T < 2 is rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(predict(net, img, 1, rng), std::invalid_argument);
  }

  SECTION("degenerate posterior gives sigma_e = 0 and equal resamples") {
    auto frozen = net;
    for (auto& k : frozen.kernels) k.rho.fill(-80.0);
    for (auto& b : frozen.biases) b.rho.fill(-80.0);
    Rng rng(2);
    auto p = predict(frozen, img, 25, rng);
    for (double yh : p.yhats) CHECK(yh == Catch::Approx(p.yhats[0]).margin(1e-12));
    CHECK(p.sigma_e == Catch::Approx(0.0).margin(1e-12));
    CHECK(p.sigma_a > 0.0);
  }

  SECTION("hand-set resamples {1,2,3} give sigma_e = 1") {
    CHECK(sample_stddev(std::vector<double>{1.0, 2.0, 3.0}) == Catch::Approx(1.0).margin(0));
  }

  SECTION("sigma_e equals an index-order recomputation, bitwise") {
    Rng rng(7);
    auto p = predict(net, img, 100, rng);
    // brute-force two-pass recomputation from the returned resamples
    double m = 0;
    for (double v : p.yhats) m += v;
    m /= static_cast<double>(p.yhats.size());
    double ss = 0;
    for (double v : p.yhats) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(p.yhats.size() - 1));
    CHECK(p.sigma_e == sd);  // bitwise on the 64-bit path
    CHECK(p.y_mean == m);
    double sa = 0;
    for (double v : p.sigmas_a) {
      CHECK(v > 0.0);
      sa += v;
    }
    CHECK(p.sigma_a == sa / static_cast<double>(p.sigmas_a.size()));
  }

  SECTION("two rng streams give sigma_e estimates within chi-square spread") {
    Rng r1(100), r2(200);
    auto p1 = predict(net, img, 100, r1);
    auto p2 = predict(net, img, 100, r2);
    CHECK(std::abs(p1.sigma_e - p2.sigma_e) / std::max(p1.sigma_e, p2.sigma_e) < 0.30);
  }

  SECTION("predict_all is schedule-independent") {
    Tensor<double> X({6, 2, 2, 1});
    Rng rng(9);
    rng.fill_normal(X);
    for (auto& v : X.data) v = std::abs(v) * 0.4;
    auto serial = predict_all(net, X, 20, Rng(31), 1);
    auto parallel = predict_all(net, X, 20, Rng(31), 3);
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(serial[i].sigma_e == parallel[i].sigma_e);
      CHECK(serial[i].y_mean == parallel[i].y_mean);
    }
  }
}

TEST_CASE("full ELBO gradients match central finite differences (flipout conv net)") {
  NetworkSpec spec;
  spec.input_shape = {6, 6, 1};
  spec.layers = {LayerSpec::conv2d(3, 3, 2, Activation::Relu),
                 LayerSpec::conv2d(4, 3, 2, Activation::Relu), LayerSpec::flatten(),
                 LayerSpec::dense(2, Activation::None)};
  spec.mode = SamplingMode::Flipout;
  Rng ir(17);
  auto net = BayesNet<double>::init(spec, ir);
  const int B = 3;
  Rng dr(18);
  Tensor<double> X({B, 6, 6, 1});
  dr.fill_normal(X);
  for (auto& v : X.data) v = 0.4 + 0.15 * v;
  std::vector<double> y = {0.5, 1.5, -0.3};

  auto eval = [&]() {
    Tape<double> t;
    auto b = net.bind(t);
    Rng noise(4242);
    return static_cast<double>(
        t.val(elbo_on_tape(t, net, b, t.leaf(X), y, noise, 0.25).loss).data[0]);
  };
  Tape<double> t;
  auto b = net.bind(t);
  Rng noise(4242);
  auto ids = elbo_on_tape(t, net, b, t.leaf(X), y, noise, 0.25);
  t.backward(ids.loss);

  Rng pick(19);
  double max_rel = 0;
  int checked = 0;
  for (std::size_t s = 0; s < net.kernels.size(); ++s) {
    auto check = [&](Tensor<double>& p, const Tensor<double>& g) {
      for (int rep = 0; rep < 4; ++rep) {
        const std::size_t i = pick.below(p.numel());
        const double fd = oracles::central_diff(eval, p.data[i], 1e-5);
        const double ad = g.data[i];
        max_rel = std::max(max_rel,
                           std::abs(fd - ad) / std::max({1e-8, std::abs(fd), std::abs(ad)}));
        ++checked;
      }
    };
    check(net.kernels[s].mu, t.grad(b.kernel_mu[s]));
    check(net.kernels[s].rho, t.grad(b.kernel_rho[s]));
    check(net.biases[s].mu, t.grad(b.bias_mu[s]));
    check(net.biases[s].rho, t.grad(b.bias_rho[s]));
  }
  INFO("checked " << checked << " coordinates");
  CHECK(max_rel < 1e-4);
}

TEST_CASE("train aborts with diagnostics on a poisoned configuration") {
  NetworkSpec spec = dense_spec({2, 2, 1}, {}, SamplingMode::Reparameterization);
  Rng ir(1);
  auto net = BayesNet<float>::init(spec, ir);
  net.kernels[0].mu.fill(std::numeric_limits<float>::quiet_NaN());
  Tensor<float> X({8, 2, 2, 1});
  X.fill(0.5f);
  std::vector<float> y(8, 1.0f);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_WITH(train(net, X, y, cfg), Catch::Matchers::ContainsSubstring("epoch 0"));
}
