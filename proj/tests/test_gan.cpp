#include <catch2/catch_amalgamated.hpp>

#include "bood/datagen.hpp"
#include "bood/gan.hpp"

using namespace bood;

namespace {
Tensor<float> small_real_batch(int n, std::uint64_t seed) {
  DatasetHeader h;
  h.count = static_cast<std::uint32_t>(n);
  h.seed = seed;
  return stack_images<float>(generate_amplitude_dataset(h).images);
}
}  // namespace

TEST_CASE("untrained discriminator scores hover near one half") {
  Rng img_rng(3);
  auto img = generate_amplitude_image(img_rng, true, 512.0);
  for (int init = 0; init < 20; ++init) {
    Rng r(1000 + init);
    auto disc = PlainNet<float>::init(default_gan_spec().discriminator, r);
    const double s = disc_score(img.pixels, disc);
    CHECK(s > 0.3);
    CHECK(s < 0.7);  // zero-bias glorot nets start close to logit 0
  }
}

TEST_CASE("disc_score: range and determinism") {
  Rng r(5);
  auto disc = PlainNet<float>::init(default_gan_spec().discriminator, r);
  Rng img_rng(6);
  for (int i = 0; i < 10; ++i) {
    Rng ir = img_rng.split(i);
    auto img = generate_amplitude_image(ir, i % 2 == 0, 512.0);
    const double s = disc_score(img.pixels, disc);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(disc_score(img.pixels, disc) == s);  // pure function
  }
}

TEST_CASE("generator output is a sigmoid image in [0,1]") {
  Rng r(7);
  Gan gan;
  gan.spec = default_gan_spec();
  Rng gi = r.split(0);
  gan.generator = PlainNet<float>::init(gan.spec.generator, gi);
  Rng zr(8);
  auto imgs = generate_images(gan, 4, zr);
  REQUIRE(imgs.shape == std::vector<int>({4, 40, 40, 1}));
  for (float p : imgs.data) {
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }
}

TEST_CASE("fit_disc_threshold: percentile examples") {
  std::vector<double> scores;
  for (int i = 1; i <= 10; ++i) scores.push_back(i / 10.0);

  SECTION("alpha = 0.2 on {0.1..1.0} puts tau at 0.2 (count oracle)") {
    auto th = fit_disc_threshold(scores, 0.2);
    CHECK(th.tau == Catch::Approx(0.2).margin(1e-12));
    CHECK(classify_gan(0.15, th));
    CHECK_FALSE(classify_gan(0.2, th));   // strict inequality
    CHECK_FALSE(classify_gan(0.25, th));
    // oracle: tau is the smallest score with at least ceil(alpha*m) values <= it
    int at_or_below = 0;
    for (double s : scores) at_or_below += s <= th.tau;
    CHECK(at_or_below >= 2);
  }

  SECTION("alpha = 0 puts tau at the minimum; no validation point is flagged") {
    auto th = fit_disc_threshold(scores, 0.0);
    CHECK(th.tau == Catch::Approx(0.1).margin(1e-12));
    for (double s : scores) CHECK_FALSE(classify_gan(s, th));
  }

  SECTION("false-alarm rate sits in the binomial band") {
    Rng rng(11);
    std::vector<double> val(2000);
    for (auto& v : val) v = rng.uniform();
    auto th = fit_disc_threshold(val, 0.05);
    int flagged = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) flagged += classify_gan(rng.uniform(), th);
    const double frac = static_cast<double>(flagged) / n;
    CHECK(frac > 0.035);
    CHECK(frac < 0.065);
  }

  CHECK_THROWS_AS(fit_disc_threshold({}, 0.05), std::invalid_argument);
}

TEST_CASE("classify_gan is monotone: lower scores never flip back to iD") {
  DiscThreshold th;
  th.tau = 0.4;
  bool was_ood = classify_gan(1.0, th);
  for (double s = 1.0; s >= 0.0; s -= 0.01) {
    const bool f = classify_gan(s, th);
    if (was_ood) CHECK(f);
    was_ood = was_ood || f;
  }
}

TEST_CASE("proportion_ood: bounds and counting") {
  std::vector<double> vals = {0.1, 0.2, 0.3, 0.4};
  CHECK(proportion_ood(vals, [](double v) { return v < 0.25; }) == 0.5);
  CHECK(proportion_ood(vals, [](double) { return false; }) == 0.0);
  CHECK(proportion_ood(vals, [](double) { return true; }) == 1.0);
  CHECK_THROWS_AS(proportion_ood({}, [](double) { return true; }), std::invalid_argument);
}

TEST_CASE("gan_train: short run is deterministic and exercises both steps") {
  auto X = small_real_batch(192, 13);
  GanTrainConfig gc;
  gc.epochs = 2;
  gc.seed = 99;
  std::vector<GanEpochStats> h1, h2;
  Gan g1 = gan_train(X, default_gan_spec(), gc, &h1);
  Gan g2 = gan_train(X, default_gan_spec(), gc, &h2);
  REQUIRE(h1.size() == 2);
  CHECK(h1[0].d_loss == h2[0].d_loss);
  CHECK(h1[1].g_loss == h2[1].g_loss);
  for (std::size_t i = 0; i < g1.generator.kernels.size(); ++i)
    CHECK(g1.generator.kernels[i].data == g2.generator.kernels[i].data);
  for (std::size_t i = 0; i < g1.discriminator.kernels.size(); ++i)
    CHECK(g1.discriminator.kernels[i].data == g2.discriminator.kernels[i].data);
  CHECK(h1[0].fake_pixel_var > 0.0);

  SECTION("different seeds diverge") {
    GanTrainConfig other = gc;
    other.seed = 100;
    std::vector<GanEpochStats> h3;
    Gan g3 = gan_train(X, default_gan_spec(), other, &h3);
    CHECK(h3[0].d_loss != h1[0].d_loss);
  }
}
