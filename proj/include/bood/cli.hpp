#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bood/experiments.hpp"
#include "bood/image_io.hpp"
#include "bood/io.hpp"
#include "bood/ood.hpp"

namespace bood {

namespace cli {

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("BOOD_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

/// Resolved config + seed + input hashes, written before any computation so
/// a crash can never leave outputs without a manifest.
inline void write_manifest(const std::string& out_dir, const std::string& subcommand,
                           const nlohmann::json& config,
                           const std::vector<std::string>& input_paths) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json m{{"subcommand", subcommand}, {"config", config}, {"inputs", nlohmann::json::object()}};
  for (const auto& p : input_paths) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", crc32_file(p));
    m["inputs"][p] = buf;
  }
  std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
  detail::require(out.good(), "cannot write manifest in " + out_dir);
  out << m.dump(2) << "\n";
}

inline NetworkSpec arch_from_flags(const std::string& arch, int f1, int f2,
                                   const std::vector<int>& hidden, const std::string& mode) {
  const SamplingMode m =
      mode == "reparameterization" ? SamplingMode::Reparameterization : SamplingMode::Flipout;
  if (arch == "model1") return model1_spec(m);
  if (arch == "model2") return model2_spec(f1, f2, m);
  if (arch == "dense") return dense_spec({40, 40, 1}, hidden, m);
  if (arch == "dense-beta") return dense_spec({2, 2, 1}, hidden, m);
  throw CLI::ValidationError("--arch", "unknown architecture " + arch);
}

inline int run_datagen(const std::string& out_dir, const std::string& kind, int n, double fraction,
                       double noise_min, double noise_max, std::uint64_t seed,
                       const std::string& name) {
  DatasetHeader h;
  h.count = static_cast<std::uint32_t>(n);
  h.event_fraction = fraction;
  h.noise_min = noise_min;
  h.noise_max = noise_max;
  h.seed = seed;
  h.kind = kind;
  if (kind == "beta") {
    h.height = h.width = 2;
    h.event_fraction = 0;
  }
  write_manifest(out_dir, "datagen",
                 {{"kind", kind}, {"n", n}, {"event_fraction", fraction},
                  {"noise_min", noise_min}, {"noise_max", noise_max}, {"seed", seed},
                  {"name", name}},
                 {});
  const std::string path = out_dir + "/" + name;
  if (kind == "beta") {
    Rng rng(seed);
    auto images = generate_beta_dataset(rng, n);
    std::vector<AmplitudeImage> amps(images.size());
    std::vector<float> labels(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      amps[i].height = amps[i].width = 2;
      amps[i].pixels.assign(images[i].pixels.begin(), images[i].pixels.end());
      labels[i] = images[i].label;
    }
    save_dataset(path, h, amps, labels);
  } else {
    save_dataset(path, generate_amplitude_dataset(h));
  }
  std::cout << "wrote " << path << " (" << n << " images)\n";
  return 0;
}

inline int run_train(const std::string& dataset_path, const std::string& out_dir,
                     const NetworkSpec& spec, const TrainConfig& tc) {
  write_manifest(out_dir, "train",
                 {{"dataset", dataset_path}, {"epochs", tc.epochs}, {"batch", tc.batch_size},
                  {"lr", tc.lr}, {"seed", tc.seed},
                  {"mode", tc.mode == SamplingMode::Flipout ? "flipout" : "reparameterization"},
                  {"spec", nlohmann::json(spec)}},
                 {dataset_path});
  Dataset ds = load_dataset(dataset_path);
  auto X = stack_images<float>(ds.images);
  Rng init_rng(tc.seed);
  auto net = BayesNet<float>::init(spec, init_rng);
  auto history = train(net, X, ds.labels, tc, [](int epoch, const EpochStats& st) {
    if (epoch % 10 == 0)
      std::cout << "epoch " << epoch << " loss " << st.mean_loss << " nll/ex " << st.mean_nll
                << "\n";
  });
  save_bnn(out_dir + "/model.bnnw", net);
  write_loss_history_csv(out_dir + "/loss_history.csv", history);
  std::cout << "wrote " << out_dir << "/model.bnnw and loss_history.csv\n";
  return 0;
}

inline int run_predict(const std::string& model_path, const std::string& dataset_path,
                       const std::string& out_dir, int resamples, std::uint64_t seed, int jobs) {
  write_manifest(out_dir, "predict",
                 {{"model", model_path}, {"dataset", dataset_path}, {"T", resamples},
                  {"seed", seed}},
                 {model_path, dataset_path});
  auto net = load_bnn<float>(model_path);
  Dataset ds = load_dataset(dataset_path);
  auto bundles = predict_all(net, stack_images<float>(ds.images), resamples, Rng(seed), jobs);
  std::ofstream out(out_dir + "/predictions.csv", std::ios::trunc);
  out << "index,label,y_mean,sigma_a,sigma_e\n";
  for (std::size_t i = 0; i < bundles.size(); ++i)
    out << i << "," << format_g(ds.labels[i]) << "," << format_g(bundles[i].y_mean) << ","
        << format_g(bundles[i].sigma_a) << "," << format_g(bundles[i].sigma_e) << "\n";
  std::cout << "wrote " << out_dir << "/predictions.csv\n";
  return 0;
}

inline int run_ood_fit(const std::string& model_path, const std::string& dataset_path,
                       const std::string& out_dir, double alpha, int resamples,
                       std::uint64_t seed, int jobs) {
  write_manifest(out_dir, "ood-fit",
                 {{"model", model_path}, {"dataset", dataset_path}, {"alpha", alpha},
                  {"T", resamples}, {"seed", seed}},
                 {model_path, dataset_path});
  std::string fingerprint;
  auto net = load_bnn<float>(model_path, &fingerprint);
  Dataset ds = load_dataset(dataset_path);
  auto bundles = predict_all(net, stack_images<float>(ds.images), resamples, Rng(seed), jobs);
  auto det = fit_rejection_mark(sigma_e_of(bundles), alpha, fingerprint);
  save_detector(out_dir + "/detector.json", det, model_path);
  std::cout << "RM = " << det.rm << " at alpha = " << alpha << " (m = " << det.validation_size
            << ")\n";
  return 0;
}

inline int run_ood_score(const std::string& detector_path, const std::string& dataset_path,
                         const std::string& out_dir, const std::string& model_override,
                         int resamples, std::uint64_t seed, int jobs) {
  std::string model_path;
  OoDDetector det = load_detector(detector_path, &model_path);
  if (!model_override.empty()) model_path = model_override;
  detail::require(!model_path.empty(),
                  "detector carries no model path; pass --model explicitly");
  write_manifest(out_dir, "ood-score",
                 {{"detector", detector_path}, {"dataset", dataset_path}, {"model", model_path},
                  {"T", resamples}, {"seed", seed}},
                 {detector_path, dataset_path, model_path});
  std::string fingerprint;
  auto net = load_bnn<float>(model_path, &fingerprint);
  if (!det.model_fingerprint.empty() && fingerprint != det.model_fingerprint)
    throw std::runtime_error("model fingerprint " + fingerprint +
                             " does not match detector's " + det.model_fingerprint);
  Dataset ds = load_dataset(dataset_path);
  auto bundles = predict_all(net, stack_images<float>(ds.images), resamples, Rng(seed), jobs);
  std::ofstream out(out_dir + "/ood_scores.csv", std::ios::trunc);
  out << "index,sigma_e,flag\n";
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const bool ood = classify_ood(bundles[i].sigma_e, det);
    flagged += ood;
    out << i << "," << format_g(bundles[i].sigma_e) << "," << (ood ? 1 : 0) << "\n";
  }
  std::cout << "flagged " << flagged << "/" << bundles.size() << " as OoD\n";
  return 0;
}

inline int run_roc(const std::string& model_path, const std::string& id_path,
                   const std::string& ood_path, const std::string& out_dir, int resamples,
                   int grid_points, std::uint64_t seed, int jobs) {
  write_manifest(out_dir, "roc",
                 {{"model", model_path}, {"id_dataset", id_path}, {"ood_dataset", ood_path},
                  {"T", resamples}, {"grid", grid_points}, {"seed", seed}},
                 {model_path, id_path, ood_path});
  auto net = load_bnn<float>(model_path);
  Dataset id_ds = load_dataset(id_path);
  Dataset ood_ds = load_dataset(ood_path);
  Rng rng(seed);
  auto id_se = sigma_e_of(
      predict_all(net, stack_images<float>(id_ds.images), resamples, rng.split(0), jobs));
  auto ood_se = sigma_e_of(
      predict_all(net, stack_images<float>(ood_ds.images), resamples, rng.split(1), jobs));
  auto rc = roc_curve(id_se, ood_se, default_alpha_grid(grid_points));
  std::ofstream out(out_dir + "/roc.csv", std::ios::trunc);
  out << "alpha,si\n";
  for (std::size_t i = 0; i < rc.alphas.size(); ++i)
    out << format_g(rc.alphas[i]) << "," << format_g(rc.si[i]) << "\n";
  SvgPlot plot("SI vs alpha (AUC " + format_g(rc.auc) + ")", "alpha", "separation index");
  plot.add_series("SI", rc.alphas, rc.si);
  plot.write(out_dir + "/roc.svg");
  std::cout << "AUC = " << rc.auc << "\n";
  return 0;
}

inline int run_gan_train(const std::string& dataset_path, const std::string& out_dir,
                         const GanTrainConfig& gc, int latent_dim) {
  write_manifest(out_dir, "gan-train",
                 {{"dataset", dataset_path}, {"epochs", gc.epochs}, {"batch", gc.batch_size},
                  {"lr", gc.lr}, {"seed", gc.seed}, {"latent", latent_dim}},
                 {dataset_path});
  Dataset ds = load_dataset(dataset_path);
  std::vector<GanEpochStats> history;
  Gan gan = gan_train(stack_images<float>(ds.images), default_gan_spec(latent_dim), gc, &history);
  save_gan(out_dir + "/gan.bnnw", gan.generator, gan.discriminator);
  std::ofstream out(out_dir + "/gan_history.csv", std::ios::trunc);
  out << "epoch,d_loss,g_loss,fake_pixel_var\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    out << e << "," << format_g(history[e].d_loss) << "," << format_g(history[e].g_loss) << ","
        << format_g(history[e].fake_pixel_var) << "\n";
  std::cout << "wrote " << out_dir << "/gan.bnnw\n";
  return 0;
}

inline int run_gan_score(const std::string& gan_path, const std::string& dataset_path,
                         const std::string& out_dir, const std::string& validation_path,
                         double alpha) {
  std::vector<std::string> inputs = {gan_path, dataset_path};
  if (!validation_path.empty()) inputs.push_back(validation_path);
  write_manifest(out_dir, "gan-score",
                 {{"gan", gan_path}, {"dataset", dataset_path}, {"validation", validation_path},
                  {"alpha", alpha}},
                 inputs);
  PlainNet<float> gen, disc;
  load_gan(gan_path, gen, disc);
  Dataset ds = load_dataset(dataset_path);
  auto scores = disc_scores(stack_images<float>(ds.images), disc);
  std::ofstream out(out_dir + "/gan_scores.csv", std::ios::trunc);
  if (!validation_path.empty()) {
    Dataset val = load_dataset(validation_path);
    auto th = fit_disc_threshold(disc_scores(stack_images<float>(val.images), disc), alpha);
    out << "index,score,flag\n";
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool ood = classify_gan(scores[i], th);
      flagged += ood;
      out << i << "," << format_g(scores[i]) << "," << (ood ? 1 : 0) << "\n";
    }
    std::cout << "tau = " << th.tau << "; flagged " << flagged << "/" << scores.size() << "\n";
  } else {
    out << "index,score\n";
    for (std::size_t i = 0; i < scores.size(); ++i)
      out << i << "," << format_g(scores[i]) << "\n";
  }
  std::cout << "wrote " << out_dir << "/gan_scores.csv\n";
  return 0;
}

inline int run_sweep_cmd(ExperimentConfig cfg) {
  write_manifest(cfg.out_dir, "sweep", to_json_config(cfg), {});
  if (cfg.sweep == "gan_comparison") {
    auto res = gan_comparison(cfg);
    write_gan_comparison_csv(cfg.out_dir, res);
    std::cout << (res.cached ? std::to_string(res.cached) + " cells cached; " : "")
              << "wrote gan_comparison.csv\n";
    return 0;
  }
  auto res = run_sweep(cfg);
  write_sweep_csv(cfg.out_dir, cfg.sweep, res.records);
  write_sweep_svg(cfg.out_dir, cfg.sweep, res.records);
  std::cout << res.records.size() << " cells (" << res.cached << " cached); wrote "
            << cfg.sweep << "_records.csv and summary\n";
  return 0;
}

inline int run_appendix(const std::string& which, ExperimentConfig cfg) {
  cfg.sweep = "appendix_" + which;
  apply_profile(cfg);
  write_manifest(cfg.out_dir, "appendix", to_json_config(cfg), {});
  if (which == "a") {
    auto res = appendix_a(cfg);
    std::cout << "Spearman(density, sigma_e) = " << spearman_rho(res.density, res.sigma_e)
              << "\n";
  } else if (which == "b") {
    auto curve = appendix_b(cfg);
    std::cout << "mean |coverage - nominal| = " << curve.mean_abs_gap() << "\n";
  } else if (which == "c") {
    auto rows = appendix_c(cfg);
    std::cout << rows.size() << " noise levels summarized\n";
  } else {
    throw CLI::ValidationError("--which", "expected a, b, or c");
  }
  return 0;
}

inline int run_report(const std::string& records_dir, const std::string& out_dir) {
  write_manifest(out_dir, "report", {{"records", records_dir}}, {});
  std::map<std::string, std::vector<ExperimentRecord>> by_sweep;
  GanComparisonResult gan_points;
  for (const auto& e : std::filesystem::directory_iterator(records_dir)) {
    if (e.path().extension() != ".json") continue;
    std::ifstream in(e.path());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.contains("points")) {
      for (const auto& p : j.at("points"))
        gan_points.points.push_back({p.at("curve"), p.at("level"), p.at("method"),
                                     p.at("proportion"), p.at("seed")});
    } else if (j.contains("sweep")) {
      ExperimentRecord r = j.get<ExperimentRecord>();
      by_sweep[r.sweep].push_back(std::move(r));
    }
  }
  for (auto& [sweep, records] : by_sweep) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
      return std::tie(a.axis_value, a.f2, a.seed) < std::tie(b.axis_value, b.f2, b.seed);
    });
    write_sweep_csv(out_dir, sweep, records);
    write_sweep_svg(out_dir, sweep, records);
    std::cout << sweep << ": " << records.size() << " records\n";
  }
  if (!gan_points.points.empty()) {
    std::sort(gan_points.points.begin(), gan_points.points.end(),
              [](const auto& a, const auto& b) {
                return std::tie(a.curve, a.level, a.method, a.seed) <
                       std::tie(b.curve, b.level, b.method, b.seed);
              });
    write_gan_comparison_csv(out_dir, gan_points);
    std::cout << "gan_comparison: " << gan_points.points.size() << " points\n";
  }
  return 0;
}

}  // namespace cli

/// Entry point behind main(); returns 0 on success, 1 on usage errors, 2 on
/// runtime failures.
inline int cli_dispatch(std::vector<std::string> args) {
  CLI::App app{"Bayesian out-of-distribution detection toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = cli::default_seed();
  std::string out_dir = "out";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  auto* dg = app.add_subcommand("datagen", "Generate a dataset file");
  int dg_n = 10000;
  double dg_fraction = 0.5, dg_noise_min = 512, dg_noise_max = -1;
  std::string dg_kind = "amplitudes", dg_name = "dataset.bood";
  dg->add_option("--n", dg_n, "image count");
  dg->add_option("--kind", dg_kind, "amplitudes|beta");
  dg->add_option("--event-fraction", dg_fraction, "fraction of event images");
  dg->add_option("--noise", dg_noise_min, "background noise level (1..2048)");
  dg->add_option("--noise-max", dg_noise_max, "upper noise level for a uniform range");
  dg->add_option("--name", dg_name, "output file name");
  dg->add_option("--seed", seed, "generator seed");
  dg->add_option("--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a variational network");
  std::string tr_dataset, tr_arch = "model1", tr_mode = "flipout";
  int tr_epochs = 100, tr_batch = 64, tr_f1 = 32, tr_f2 = 64;
  double tr_lr = 1e-4;
  std::vector<int> tr_hidden = {128, 64};
  tr->add_option("--dataset", tr_dataset)->required();
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--batch", tr_batch);
  tr->add_option("--lr", tr_lr);
  tr->add_option("--arch", tr_arch, "model1|model2|dense|dense-beta");
  tr->add_option("--f1", tr_f1);
  tr->add_option("--f2", tr_f2);
  tr->add_option("--hidden", tr_hidden)->delimiter(',');
  tr->add_option("--mode", tr_mode, "flipout|reparameterization");
  tr->add_option("--seed", seed);
  tr->add_option("--out", out_dir)->required();

  auto* pr = app.add_subcommand("predict", "Resampled predictions with uncertainties");
  std::string pr_model, pr_dataset;
  int pr_T = 50;
  pr->add_option("--model", pr_model)->required();
  pr->add_option("--dataset", pr_dataset)->required();
  pr->add_option("--T", pr_T, "resamples per image");
  pr->add_option("--seed", seed);
  pr->add_option("--jobs", jobs);
  pr->add_option("--out", out_dir)->required();

  auto* of = app.add_subcommand("ood-fit", "Fit the rejection mark on a validation set");
  std::string of_model, of_dataset;
  double of_alpha = 0.05;
  int of_T = 50;
  of->add_option("--model", of_model)->required();
  of->add_option("--dataset", of_dataset)->required();
  of->add_option("--alpha", of_alpha);
  of->add_option("--T", of_T);
  of->add_option("--seed", seed);
  of->add_option("--jobs", jobs);
  of->add_option("--out", out_dir)->required();

  auto* os = app.add_subcommand("ood-score", "Classify a dataset with a fitted detector");
  std::string os_detector, os_dataset, os_model;
  int os_T = 50;
  os->add_option("--detector", os_detector)->required();
  os->add_option("--dataset", os_dataset)->required();
  os->add_option("--model", os_model, "override the detector's model path");
  os->add_option("--T", os_T);
  os->add_option("--seed", seed);
  os->add_option("--jobs", jobs);
  os->add_option("--out", out_dir)->required();

  auto* rc = app.add_subcommand("roc", "SI-vs-alpha curve and AUC");
  std::string rc_model, rc_id, rc_ood;
  int rc_T = 50, rc_grid = 101;
  rc->add_option("--model", rc_model)->required();
  rc->add_option("--id-dataset", rc_id)->required();
  rc->add_option("--ood-dataset", rc_ood)->required();
  rc->add_option("--T", rc_T);
  rc->add_option("--grid", rc_grid, "alpha grid points");
  rc->add_option("--seed", seed);
  rc->add_option("--jobs", jobs);
  rc->add_option("--out", out_dir)->required();

  auto* gt = app.add_subcommand("gan-train", "Train the GAN baseline");
  std::string gt_dataset;
  int gt_epochs = 40, gt_batch = 64, gt_latent = 64;
  double gt_lr = 1e-4;
  gt->add_option("--dataset", gt_dataset)->required();
  gt->add_option("--epochs", gt_epochs);
  gt->add_option("--batch", gt_batch);
  gt->add_option("--lr", gt_lr);
  gt->add_option("--latent", gt_latent);
  gt->add_option("--seed", seed);
  gt->add_option("--out", out_dir)->required();

  auto* gs = app.add_subcommand("gan-score", "Score a dataset with the GAN discriminator");
  std::string gs_gan, gs_dataset, gs_validation;
  double gs_alpha = 0.05;
  gs->add_option("--gan", gs_gan)->required();
  gs->add_option("--dataset", gs_dataset)->required();
  gs->add_option("--validation", gs_validation, "iD validation set for threshold fitting");
  gs->add_option("--alpha", gs_alpha);
  gs->add_option("--out", out_dir)->required();

  auto* sw = app.add_subcommand("sweep", "Run a configured, resumable sweep");
  std::string sw_config, sw_profile, sw_out;
  std::uint64_t sw_seed = 0;
  sw->add_option("--config", sw_config, "sweep config JSON")->required();
  sw->add_option("--profile", sw_profile, "desk|paper (overrides config)");
  sw->add_option("--out", sw_out, "output directory (overrides config)");
  sw->add_option("--jobs", jobs);
  auto* sw_seed_opt = sw->add_option("--seed", sw_seed, "base seed (overrides config)");

  auto* ap = app.add_subcommand("appendix", "Run an appendix study");
  std::string ap_which, ap_profile = "desk";
  ap->add_option("--which", ap_which, "a|b|c")->required();
  ap->add_option("--profile", ap_profile, "desk|paper");
  ap->add_option("--seed", seed);
  ap->add_option("--jobs", jobs);
  ap->add_option("--out", out_dir)->required();

  auto* rp = app.add_subcommand("report", "Aggregate a record store into CSV/SVG");
  std::string rp_records;
  rp->add_option("--records", rp_records, "record directory")->required();
  rp->add_option("--out", out_dir)->required();

  std::vector<const char*> argv;
  argv.push_back("bood");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), const_cast<char**>(argv.data()));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help() << "\n";
      return 0;
    }
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (*dg)
      return cli::run_datagen(out_dir, dg_kind, dg_n, dg_fraction, dg_noise_min,
                              dg_noise_max < 0 ? dg_noise_min : dg_noise_max, seed, dg_name);
    if (*tr) {
      TrainConfig tc;
      tc.batch_size = tr_batch;
      tc.lr = tr_lr;
      tc.epochs = tr_epochs;
      tc.seed = seed;
      tc.mode = tr_mode == "reparameterization" ? SamplingMode::Reparameterization
                                                : SamplingMode::Flipout;
      return cli::run_train(tr_dataset, out_dir,
                            cli::arch_from_flags(tr_arch, tr_f1, tr_f2, tr_hidden, tr_mode), tc);
    }
    if (*pr) return cli::run_predict(pr_model, pr_dataset, out_dir, pr_T, seed, jobs);
    if (*of) return cli::run_ood_fit(of_model, of_dataset, out_dir, of_alpha, of_T, seed, jobs);
    if (*os)
      return cli::run_ood_score(os_detector, os_dataset, out_dir, os_model, os_T, seed, jobs);
    if (*rc) return cli::run_roc(rc_model, rc_id, rc_ood, out_dir, rc_T, rc_grid, seed, jobs);
    if (*gt) {
      GanTrainConfig gc;
      gc.batch_size = gt_batch;
      gc.lr = gt_lr;
      gc.epochs = gt_epochs;
      gc.seed = seed;
      return cli::run_gan_train(gt_dataset, out_dir, gc, gt_latent);
    }
    if (*gs) return cli::run_gan_score(gs_gan, gs_dataset, out_dir, gs_validation, gs_alpha);
    if (*sw) {
      std::ifstream in(sw_config);
      detail::require(in.good(), "cannot open config " + sw_config);
      nlohmann::json j = nlohmann::json::parse(in);
      if (!sw_profile.empty()) j["profile"] = sw_profile;
      ExperimentConfig cfg;
      from_json_with_defaults(j, cfg);
      if (!sw_out.empty()) cfg.out_dir = sw_out;
      if (sw_seed_opt->count() > 0) cfg.base_seed = sw_seed;
      cfg.jobs = jobs;
      return cli::run_sweep_cmd(cfg);
    }
    if (*ap) {
      ExperimentConfig cfg;
      cfg.profile = ap_profile;
      cfg.base_seed = seed;
      cfg.out_dir = out_dir;
      cfg.jobs = jobs;
      return cli::run_appendix(ap_which, cfg);
    }
    if (*rp) return cli::run_report(rp_records, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace bood
