#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "bood/cli.hpp"
#include "bood/experiments.hpp"
#include "bood/io.hpp"

using namespace bood;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_sweep_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.sweep = "epochs";
  cfg.axis_values = {1, 2};
  cfg.seeds = 2;
  cfg.base_seed = 5;
  cfg.train_n = 64;
  cfg.batch_size = 32;
  cfg.epochs = 1;
  cfg.resamples = 4;
  cfg.eval_n = 24;
  cfg.val_n = 24;
  cfg.jobs = 2;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("paper training sizes are geometric from 100 to 60000") {
  auto sizes = paper_training_sizes();
  REQUIRE(sizes.size() == 20);
  CHECK(sizes[0] == 100.0);
  CHECK(sizes[1] == 140.0);   // 100 * 600^(1/19)
  CHECK(sizes[2] == 196.0);   // geometric-spacing formula oracle
  CHECK(sizes[19] == 60000.0);
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    const double ratio = sizes[i] / sizes[i - 1];
    CHECK(ratio == Catch::Approx(std::pow(600.0, 1.0 / 19.0)).epsilon(0.02));
  }
}

TEST_CASE("sweep: bookkeeping, resumability, seed-averaged summary") {
  auto dir = fresh_dir("bood_sweep_test");
  auto cfg = tiny_sweep_config(dir.string());

  auto first = run_sweep(cfg);
  REQUIRE(first.records.size() == 4);  // 2 axis values x 2 seeds
  CHECK(first.cached == 0);
  for (const auto& r : first.records) {
    CHECK(r.sweep == "epochs");
    CHECK((r.axis_value == 1.0 || r.axis_value == 2.0));
    CHECK(r.si.count("sp40") == 1);
    CHECK(r.si.at("sp40") >= 0.0);
    CHECK(r.si.at("sp40") <= 1.0);
    CHECK(r.test_rms >= 0.0);
    CHECK(r.wall_seconds > 0.0);
  }

  SECTION("rerun skips all completed cells and reproduces the records") {
    auto second = run_sweep(cfg);
    CHECK(second.cached == 4);
    for (std::size_t i = 0; i < first.records.size(); ++i) {
      CHECK(second.records[i].test_rms == first.records[i].test_rms);
      CHECK(second.records[i].si.at("sp40") == first.records[i].si.at("sp40"));
    }
  }

  SECTION("a changed config invalidates the cache") {
    auto changed = cfg;
    changed.resamples = 5;
    auto rerun = run_sweep(changed);
    CHECK(rerun.cached == 0);
  }

  SECTION("summary rows are exact means of the per-seed records") {
    write_sweep_csv(dir.string(), cfg.sweep, first.records);
    const std::string summary = slurp(dir / "epochs_summary.csv");
    for (double axis : {1.0, 2.0}) {
      double sum = 0;
      int n = 0;
      for (const auto& r : first.records)
        if (r.axis_value == axis) {
          sum += r.si.at("sp40");
          ++n;
        }
      char expect[64];
      std::snprintf(expect, sizeof(expect), "%.9g", sum / n);
      CHECK(summary.find(expect) != std::string::npos);
    }
    CHECK(slurp(dir / "epochs_records.csv").find("axis_value,f1,f2,seed,test_rms") == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoints round-trip through the BNNW container") {
  auto dir = fresh_dir("bood_ckpt_test");

  SECTION("bnn posteriors") {
    Rng r(1);
    auto net = BayesNet<float>::init(model2_spec(4, 8), r);
    const std::string path = (dir / "model.bnnw").string();
    save_bnn(path, net);
    std::string fp;
    auto back = load_bnn<float>(path, &fp);
    CHECK(!fp.empty());
    REQUIRE(back.kernels.size() == net.kernels.size());
    for (std::size_t i = 0; i < net.kernels.size(); ++i) {
      CHECK(back.kernels[i].mu.data == net.kernels[i].mu.data);
      CHECK(back.kernels[i].rho.data == net.kernels[i].rho.data);
      CHECK(back.biases[i].mu.data == net.biases[i].mu.data);
    }
    CHECK(back.spec.layers.size() == net.spec.layers.size());
    CHECK(back.spec.layers[0].filters == 4);

    SECTION("a gan checkpoint does not load as a bnn") {
      Rng r2(2);
      auto spec = default_gan_spec(16);
      PlainNet<float> gen = PlainNet<float>::init(spec.generator, r2);
      PlainNet<float> disc = PlainNet<float>::init(spec.discriminator, r2);
      save_gan((dir / "gan.bnnw").string(), gen, disc);
      CHECK_THROWS_WITH(load_bnn<float>((dir / "gan.bnnw").string()),
                        Catch::Matchers::ContainsSubstring("not a bnn"));
      PlainNet<float> gen2, disc2;
      load_gan((dir / "gan.bnnw").string(), gen2, disc2);
      CHECK(gen2.kernels[0].data == gen.kernels[0].data);
      CHECK(disc2.kernels[1].data == disc.kernels[1].data);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("cli: datagen determinism, scoring format, exit codes") {
  auto dir = fresh_dir("bood_cli_test");
  const std::string d1 = (dir / "d1").string(), d2 = (dir / "d2").string();

  SECTION("datagen twice with one seed gives byte-identical files") {
    REQUIRE(cli_dispatch({"datagen", "--n", "60", "--seed", "7", "--out", d1}) == 0);
    REQUIRE(cli_dispatch({"datagen", "--n", "60", "--seed", "7", "--out", d2}) == 0);
    CHECK(slurp(d1 + "/dataset.bood") == slurp(d2 + "/dataset.bood"));
    CHECK(slurp(d1 + "/manifest.json") == slurp(d2 + "/manifest.json"));
    REQUIRE(cli_dispatch({"datagen", "--n", "60", "--seed", "8", "--out",
                          (dir / "d3").string()}) == 0);
    CHECK(slurp(d1 + "/dataset.bood") != slurp((dir / "d3" / "dataset.bood").string()));
  }

  SECTION("train + ood-fit + ood-score produce the documented CSV shape") {
    REQUIRE(cli_dispatch({"datagen", "--n", "96", "--seed", "3", "--out", d1}) == 0);
    REQUIRE(cli_dispatch({"train", "--dataset", d1 + "/dataset.bood", "--epochs", "1",
                          "--batch", "32", "--arch", "model2", "--f1", "4", "--f2", "8",
                          "--seed", "11", "--out", (dir / "m").string()}) == 0);
    REQUIRE(fs::exists(dir / "m" / "model.bnnw"));
    REQUIRE(fs::exists(dir / "m" / "loss_history.csv"));
    CHECK(slurp(dir / "m" / "loss_history.csv").find("epoch,mean_loss,mean_nll,mean_kl") == 0);

    REQUIRE(cli_dispatch({"datagen", "--n", "40", "--seed", "4", "--out", d2}) == 0);
    REQUIRE(cli_dispatch({"ood-fit", "--model", (dir / "m" / "model.bnnw").string(),
                          "--dataset", d2 + "/dataset.bood", "--T", "4", "--seed", "2",
                          "--out", (dir / "det").string()}) == 0);
    REQUIRE(fs::exists(dir / "det" / "detector.json"));

    REQUIRE(cli_dispatch({"ood-score", "--detector", (dir / "det" / "detector.json").string(),
                          "--dataset", d2 + "/dataset.bood", "--T", "4", "--seed", "9",
                          "--out", (dir / "scores").string()}) == 0);
    const std::string csv = slurp(dir / "scores" / "ood_scores.csv");
    CHECK(csv.find("index,sigma_e,flag") == 0);
    // one row per image plus header
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);

    SECTION("train is byte-deterministic under seed") {
      REQUIRE(cli_dispatch({"train", "--dataset", d1 + "/dataset.bood", "--epochs", "1",
                            "--batch", "32", "--arch", "model2", "--f1", "4", "--f2", "8",
                            "--seed", "11", "--out", (dir / "m2").string()}) == 0);
      CHECK(slurp(dir / "m" / "model.bnnw") == slurp(dir / "m2" / "model.bnnw"));
      CHECK(slurp(dir / "m" / "loss_history.csv") == slurp(dir / "m2" / "loss_history.csv"));
    }
  }

  SECTION("usage errors exit 1, runtime failures exit 2") {
    CHECK(cli_dispatch({"no-such-command"}) == 1);
    CHECK(cli_dispatch({"datagen", "--bogus-flag", "1", "--out", d1}) == 1);
    CHECK(cli_dispatch({"train", "--dataset", (dir / "missing.bood").string(), "--out",
                        d1}) == 2);
  }

  SECTION("sweep via config file caches on rerun") {
    auto cfg = tiny_sweep_config((dir / "sweep").string());
    cfg.axis_values = {1};
    cfg.seeds = 1;
    std::ofstream cf(dir / "sweep.json");
    cf << to_json_config(cfg).dump();
    cf.close();
    REQUIRE(cli_dispatch({"sweep", "--config", (dir / "sweep.json").string(), "--jobs",
                          "2"}) == 0);
    REQUIRE(fs::exists(dir / "sweep" / "epochs_records.csv"));
    const std::string first = slurp(dir / "sweep" / "epochs_records.csv");
    REQUIRE(cli_dispatch({"sweep", "--config", (dir / "sweep.json").string(), "--jobs",
                          "2"}) == 0);
    CHECK(slurp(dir / "sweep" / "epochs_records.csv") == first);

    SECTION("report rebuilds the same summary from the record store") {
      REQUIRE(cli_dispatch({"report", "--records", (dir / "sweep" / "records").string(),
                            "--out", (dir / "rebuilt").string()}) == 0);
      CHECK(slurp(dir / "rebuilt" / "epochs_records.csv") == first);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest is written before outputs and carries input hashes") {
  auto dir = fresh_dir("bood_manifest_test");
  REQUIRE(cli_dispatch({"datagen", "--n", "30", "--seed", "1", "--out", dir.string()}) == 0);
  auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("subcommand") == "datagen");
  CHECK(manifest.at("config").at("n") == 30);

  // a failing run (bad dataset) must still leave a manifest in the out dir
  const auto out2 = dir / "fail";
  std::ofstream bad(dir / "bad.bood");
  bad << "garbage";
  bad.close();
  CHECK(cli_dispatch({"train", "--dataset", (dir / "bad.bood").string(), "--out",
                      out2.string()}) == 2);
  CHECK(fs::exists(out2 / "manifest.json"));
  fs::remove_all(dir);
}
