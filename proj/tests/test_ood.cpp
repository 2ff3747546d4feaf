#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "bood/ood.hpp"
#include "bood/rng.hpp"
#include "oracles.hpp"

using namespace bood;

namespace {
std::vector<double> one_to_hundred() {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i + 1;
  return v;
}
}  // namespace

TEST_CASE("fit_rejection_mark: nearest-rank percentile") {
  auto sample = one_to_hundred();

  SECTION("alpha = 0.05 on {1..100} picks 95 (exhaustive rank-check oracle)") {
    auto det = fit_rejection_mark(sample, 0.05);
    CHECK(det.rm == 95.0);
    CHECK(det.rm == oracles::percentile_by_rank_check(sample, 0.05));
  }

  SECTION("alpha = 0 is the sample maximum; nothing in-sample exceeds RM") {
    auto det = fit_rejection_mark(sample, 0.0);
    CHECK(det.rm == 100.0);
    for (double v : sample) CHECK_FALSE(classify_ood(v, det));
  }

  SECTION("alpha = 1 is the sample minimum; everything above min is flagged") {
    auto det = fit_rejection_mark(sample, 1.0);
    CHECK(det.rm == 1.0);
    int flagged = 0;
    for (double v : sample) flagged += classify_ood(v, det);
    CHECK(flagged == 99);  // all but the minimum itself
  }

  SECTION("agrees with the rank-check oracle across alphas and sample sizes") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
      const int m = 20 + static_cast<int>(rng.below(200));
      std::vector<double> s(m);
      for (auto& v : s) v = rng.normal();
      const double alpha = rng.uniform();
      CHECK(fit_rejection_mark(s, alpha).rm == oracles::percentile_by_rank_check(s, alpha));
    }
  }

  SECTION("input contracts") {
    CHECK_THROWS_AS(fit_rejection_mark({}, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(fit_rejection_mark(std::vector<double>(5, 1.0), 0.05),
                    std::invalid_argument);  // m >= 20
    CHECK_THROWS_AS(fit_rejection_mark(sample, 1.5), std::invalid_argument);
  }

  SECTION("refitting the same sample is idempotent") {
    auto d1 = fit_rejection_mark(sample, 0.05);
    auto d2 = fit_rejection_mark(sample, 0.05);
    CHECK(d1.rm == d2.rm);
  }
}

TEST_CASE("classify: strict threshold semantics") {
  auto det = fit_rejection_mark(one_to_hundred(), 0.05);
  CHECK_FALSE(classify_ood(det.rm, det));                 // boundary stays iD
  CHECK(classify_ood(det.rm + 1e-12, det));
  CHECK_FALSE(classify_ood(det.rm - 1.0, det));

  SECTION("monotone in sigma_e") {
    bool seen_ood = false;
    for (double s = 0.0; s <= 120.0; s += 0.5) {
      const bool f = classify_ood(s, det);
      if (seen_ood) CHECK(f);  // never flips back
      seen_ood = seen_ood || f;
    }
    CHECK(seen_ood);
  }

  SECTION("false-alarm fraction on fresh iid data sits in the binomial band") {
    Rng rng(23);
    std::vector<double> validation(2000);
    for (auto& v : validation) v = std::abs(rng.normal());
    auto d = fit_rejection_mark(validation, 0.05);
    int flagged = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) flagged += classify_ood(std::abs(rng.normal()), d);
    const double frac = static_cast<double>(flagged) / n;
    CHECK(frac > 0.035);
    CHECK(frac < 0.065);
  }
}

TEST_CASE("separation_index: direct count semantics") {
  auto det = fit_rejection_mark(one_to_hundred(), 0.05);  // RM = 95

  SECTION("all above RM gives SI = 1") {
    std::vector<double> ood = {96, 97, 1000};
    CHECK(separation_index(ood, det) == 1.0);
  }

  SECTION("{RM-1, RM, RM+1, RM+2} gives SI = 0.5 by direct count") {
    std::vector<double> ood = {det.rm - 1, det.rm, det.rm + 1, det.rm + 2};
    CHECK(separation_index(ood, det) == 0.5);
  }

  SECTION("iD-as-OoD null case sits near alpha") {
    Rng rng(29);
    std::vector<double> validation(5000);
    for (auto& v : validation) v = rng.normal();
    auto d = fit_rejection_mark(validation, 0.05);
    std::vector<double> null_ood(5000);
    for (auto& v : null_ood) v = rng.normal();
    CHECK(separation_index(null_ood, d) == Catch::Approx(0.05).margin(0.02));
  }

  SECTION("SI equals a brute-force count, exactly") {
    Rng rng(31);
    std::vector<double> ood(997);
    for (auto& v : ood) v = 90 + 20 * rng.uniform();
    std::size_t count = 0;
    for (double v : ood) count += v > det.rm;
    CHECK(separation_index(ood, det) ==
          static_cast<double>(count) / static_cast<double>(ood.size()));
  }

  CHECK_THROWS_AS(separation_index({}, det), std::invalid_argument);
}

TEST_CASE("roc_curve: null, perfect separation, monotonicity, AUC") {
  SECTION("identical distributions give AUC near 0.5") {
    Rng rng(41);
    std::vector<double> id(2000), ood(2000);
    for (auto& v : id) v = rng.normal();
    for (auto& v : ood) v = rng.normal();
    auto rc = roc_curve(id, ood, default_alpha_grid());
    CHECK(rc.auc == Catch::Approx(0.5).margin(0.05));
  }

  SECTION("perfectly separated samples give SI = 1 everywhere and AUC = 1") {
    Rng rng(43);
    std::vector<double> id(500), ood(500);
    for (auto& v : id) v = rng.uniform();          // in [0,1)
    for (auto& v : ood) v = 2.0 + rng.uniform();   // strictly above
    auto rc = roc_curve(id, ood, default_alpha_grid());
    for (double si : rc.si) CHECK(si == 1.0);
    CHECK(rc.auc == 1.0);
  }

  SECTION("SI is nondecreasing in alpha on any fixed data") {
    Rng rng(47);
    std::vector<double> id(300), ood(300);
    for (auto& v : id) v = rng.normal();
    for (auto& v : ood) v = 0.8 * rng.normal() + 0.7;
    auto rc = roc_curve(id, ood, default_alpha_grid());
    for (std::size_t i = 1; i < rc.si.size(); ++i) CHECK(rc.si[i] >= rc.si[i - 1]);
    CHECK(rc.auc >= 0.0);
    CHECK(rc.auc <= 1.0);
  }
}

TEST_CASE("confidence_interval: z values and degenerate limits") {
  SECTION("95% interval around 10 with sigma 2") {
    auto [lo, hi] = confidence_interval(10.0, 2.0, 0.95);
    // inverse-normal-CDF oracle: z = 1.9599639845400545
    CHECK(lo == Catch::Approx(10.0 - 2.0 * 1.9599639845400545).margin(1e-9));
    CHECK(hi == Catch::Approx(10.0 + 2.0 * 1.9599639845400545).margin(1e-9));
    CHECK(lo == Catch::Approx(6.080).margin(5e-4));
    CHECK(hi == Catch::Approx(13.920).margin(5e-4));
  }

  SECTION("level -> 0 collapses the interval") {
    auto [lo, hi] = confidence_interval(3.0, 1.0, 1e-12);
    CHECK(lo == Catch::Approx(3.0).margin(1e-9));
    CHECK(hi == Catch::Approx(3.0).margin(1e-9));
  }

  SECTION("one-sigma identity at level 0.6827") {
    auto [lo, hi] = confidence_interval(0.0, 1.0, 0.6827);
    CHECK(hi == Catch::Approx(1.0).margin(1e-3));
    CHECK(lo == Catch::Approx(-1.0).margin(1e-3));
  }

  CHECK_THROWS_AS(confidence_interval(0.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(confidence_interval(0.0, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("normal_quantile is the inverse of the normal CDF") {
  for (double p : {0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == Catch::Approx(p).margin(1e-12));
  }
}

TEST_CASE("calibration_curve: exact coverage cases") {
  SECTION("labels exactly at the predictions cover at every level") {
    std::vector<double> yhat(50, 2.0), sigma(50, 0.5), labels(50, 2.0);
    auto cc = calibration_curve(yhat, sigma, labels, default_levels());
    REQUIRE(cc.levels.size() == 19);
    for (double c : cc.coverage) CHECK(c == 1.0);
  }

  SECTION("synthetic gaussian labels reach nominal coverage within 0.01") {
    Rng rng(53);
    const int n = 100000;
    std::vector<double> yhat(n), sigma(n), labels(n);
    for (int i = 0; i < n; ++i) {
      yhat[i] = rng.normal() * 3.0;
      sigma[i] = 0.5 + rng.uniform();
      labels[i] = yhat[i] + sigma[i] * rng.normal();
    }
    auto cc = calibration_curve(yhat, sigma, labels, {0.1, 0.3, 0.5, 0.7, 0.9});
    for (std::size_t i = 0; i < cc.levels.size(); ++i)
      CHECK(cc.coverage[i] == Catch::Approx(cc.levels[i]).margin(0.01));
  }

  SECTION("coverage is monotone in the level (nested intervals)") {
    Rng rng(59);
    const int n = 5000;
    std::vector<double> yhat(n), sigma(n), labels(n);
    for (int i = 0; i < n; ++i) {
      yhat[i] = rng.normal();
      sigma[i] = 1.0;
      labels[i] = 1.5 * rng.normal();
    }
    auto cc = calibration_curve(yhat, sigma, labels, default_levels());
    for (std::size_t i = 1; i < cc.coverage.size(); ++i)
      CHECK(cc.coverage[i] >= cc.coverage[i - 1]);
  }

  SECTION("length mismatch is rejected") {
    CHECK_THROWS_AS(calibration_curve({1.0}, {1.0, 2.0}, {1.0}, {0.5}), std::invalid_argument);
  }
}

TEST_CASE("detector serialization round-trips") {
  auto det = fit_rejection_mark(one_to_hundred(), 0.05, "cafe1234");
  const auto path = (std::filesystem::temp_directory_path() / "bood_det.json").string();
  save_detector(path, det, "model.bnnw");
  std::string model_path;
  auto back = load_detector(path, &model_path);
  CHECK(back.rm == det.rm);
  CHECK(back.alpha == det.alpha);
  CHECK(back.validation_size == det.validation_size);
  CHECK(back.model_fingerprint == "cafe1234");
  CHECK(back.percentile_rule == "nearest-rank-above");
  CHECK(model_path == "model.bnnw");
  std::filesystem::remove(path);
}
