#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "bood/bnn.hpp"
#include "bood/datagen.hpp"
#include "bood/gan.hpp"
#include "bood/image_io.hpp"
#include "bood/io.hpp"
#include "bood/ood.hpp"
#include "bood/svg.hpp"

namespace bood {

/// One resumable study. Desk profile trades axis resolution and replicate
/// count for CPU-scale runtimes; paper profile restores the full grids.
struct ExperimentConfig {
  std::string sweep;  // training_size | epochs | filters | gan_comparison |
                      // appendix_a | appendix_b | appendix_c | scatter
  std::string profile = "desk";
  std::vector<double> axis_values;                 // scalar axes
  std::vector<std::pair<int, int>> filter_grid;    // filters axis
  int seeds = 3;
  std::uint64_t base_seed = 1234;
  int train_n = 4000;
  int epochs = 100;
  int batch_size = 64;
  double lr = 1e-4;
  SamplingMode mode = SamplingMode::Flipout;
  int resamples = 50;
  int eval_n = 500;
  int val_n = 500;
  double alpha = 0.05;
  double noise_level = 512.0;
  double sp40 = 0.4;
  std::string external_dir;
  std::string out_dir = "out";
  int jobs = 2;
};

/// Twenty geometrically spaced sizes from 100 to 60000 (ratio 600^(1/19)).
inline std::vector<double> paper_training_sizes() {
  std::vector<double> v;
  for (int k = 0; k < 20; ++k)
    v.push_back(std::round(100.0 * std::pow(600.0, static_cast<double>(k) / 19.0)));
  return v;
}

inline void apply_profile(ExperimentConfig& cfg) {
  const bool paper = cfg.profile == "paper";
  cfg.seeds = paper ? 5 : 3;
  cfg.train_n = paper ? 10000 : 4000;
  cfg.epochs = paper ? 600 : 100;
  cfg.resamples = paper ? 100 : 50;
  cfg.eval_n = paper ? 500 : 400;
  cfg.val_n = paper ? 500 : 400;
  if (cfg.sweep == "training_size" && cfg.axis_values.empty()) {
    cfg.axis_values = paper ? paper_training_sizes()
                            : std::vector<double>{250, 707, 2000, 5657, 16000};
    if (!paper) cfg.epochs = 60;
  }
  if (cfg.sweep == "epochs" && cfg.axis_values.empty())
    cfg.axis_values = paper ? std::vector<double>{10, 30, 100, 300, 600}
                            : std::vector<double>{10, 30, 100, 300};
  if (cfg.sweep == "filters") {
    if (cfg.filter_grid.empty())
      cfg.filter_grid = paper ? std::vector<std::pair<int, int>>{{2, 4}, {4, 8}, {8, 16},
                                                                 {16, 32}, {32, 64}, {64, 128}}
                              : std::vector<std::pair<int, int>>{{2, 4}, {8, 16}, {32, 64}};
    cfg.epochs = paper ? 300 : 100;
  }
  if (cfg.sweep == "gan_comparison" && cfg.axis_values.empty()) {
    // axis doubles as the salt-and-pepper grid; blend grid is fixed 0..1 by 0.1
    for (int p = 0; p <= 100; p += paper ? 5 : 10) cfg.axis_values.push_back(p / 100.0);
    cfg.train_n = paper ? 10000 : 2000;
    cfg.epochs = paper ? 600 : 40;
    cfg.eval_n = paper ? 500 : 300;
  }
  if (cfg.sweep == "appendix_a") {
    cfg.train_n = 5000;
    cfg.epochs = 150;
    cfg.lr = 0.01;
    cfg.resamples = 100;
  }
  if (cfg.sweep == "appendix_b") {
    cfg.lr = 5e-4;
    cfg.epochs = paper ? 600 : 150;
    cfg.train_n = paper ? 10000 : 4000;
    cfg.eval_n = paper ? 2000 : 1500;
  }
  if (cfg.sweep == "appendix_c") {
    cfg.train_n = paper ? 15000 : 6000;
    cfg.epochs = paper ? 600 : 80;
    cfg.eval_n = paper ? 500 : 250;
  }
  if (cfg.sweep == "scatter") cfg.eval_n = 2000;
}

inline void from_json_with_defaults(const nlohmann::json& j, ExperimentConfig& c) {
  c.sweep = j.at("sweep");
  c.profile = j.value("profile", c.profile);
  apply_profile(c);
  if (j.contains("axis_values")) c.axis_values = j.at("axis_values").get<std::vector<double>>();
  if (j.contains("filter_grid"))
    c.filter_grid = j.at("filter_grid").get<std::vector<std::pair<int, int>>>();
  c.seeds = j.value("seeds", c.seeds);
  c.base_seed = j.value("base_seed", c.base_seed);
  c.train_n = j.value("train_n", c.train_n);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  if (j.contains("mode"))
    c.mode = j.at("mode") == "reparameterization" ? SamplingMode::Reparameterization
                                                  : SamplingMode::Flipout;
  c.resamples = j.value("resamples", c.resamples);
  c.eval_n = j.value("eval_n", c.eval_n);
  c.val_n = j.value("val_n", c.val_n);
  c.alpha = j.value("alpha", c.alpha);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.external_dir = j.value("external_dir", c.external_dir);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.jobs = j.value("jobs", c.jobs);
}

inline nlohmann::json to_json_config(const ExperimentConfig& c) {
  nlohmann::json j{{"sweep", c.sweep},
                   {"profile", c.profile},
                   {"axis_values", c.axis_values},
                   {"seeds", c.seeds},
                   {"base_seed", c.base_seed},
                   {"train_n", c.train_n},
                   {"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"lr", c.lr},
                   {"mode", c.mode == SamplingMode::Flipout ? "flipout" : "reparameterization"},
                   {"resamples", c.resamples},
                   {"eval_n", c.eval_n},
                   {"val_n", c.val_n},
                   {"alpha", c.alpha},
                   {"noise_level", c.noise_level},
                   {"external_dir", c.external_dir},
                   {"out_dir", c.out_dir}};
  if (!c.filter_grid.empty()) j["filter_grid"] = c.filter_grid;
  return j;
}

/// One sweep point: config cell x seed, with everything the figures need.
struct ExperimentRecord {
  std::string sweep;
  double axis_value = 0;
  int f1 = 0, f2 = 0;
  std::uint64_t seed = 0;
  double test_rms = -1;
  std::map<std::string, double> si;
  std::map<std::string, double> mean_sigma_e;
  std::map<std::string, double> mean_sigma_a;
  double wall_seconds = 0;
  std::string config_hash;
};

inline void to_json(nlohmann::json& j, const ExperimentRecord& r) {
  j = nlohmann::json{{"sweep", r.sweep},       {"axis_value", r.axis_value},
                     {"f1", r.f1},             {"f2", r.f2},
                     {"seed", r.seed},         {"test_rms", r.test_rms},
                     {"si", r.si},             {"mean_sigma_e", r.mean_sigma_e},
                     {"mean_sigma_a", r.mean_sigma_a},
                     {"wall_seconds", r.wall_seconds},
                     {"config_hash", r.config_hash}};
}

inline void from_json(const nlohmann::json& j, ExperimentRecord& r) {
  j.at("sweep").get_to(r.sweep);
  j.at("axis_value").get_to(r.axis_value);
  j.at("f1").get_to(r.f1);
  j.at("f2").get_to(r.f2);
  j.at("seed").get_to(r.seed);
  j.at("test_rms").get_to(r.test_rms);
  r.si = j.at("si").get<std::map<std::string, double>>();
  r.mean_sigma_e = j.at("mean_sigma_e").get<std::map<std::string, double>>();
  r.mean_sigma_a = j.at("mean_sigma_a").get<std::map<std::string, double>>();
  j.at("wall_seconds").get_to(r.wall_seconds);
  j.at("config_hash").get_to(r.config_hash);
}

/// Directory of per-cell JSON records; a rerun with the same config hash
/// skips completed cells, which is what makes sweeps resumable.
class RecordStore {
 public:
  explicit RecordStore(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::string cell_path(const std::string& name) const { return dir_ + "/" + name + ".json"; }

  std::optional<ExperimentRecord> load_if_done(const std::string& name,
                                               const std::string& config_hash) const {
    if (auto j = load_json_if(name, config_hash)) {
      try {
        return j->get<ExperimentRecord>();
      } catch (const std::exception&) {
      }
    }
    return std::nullopt;
  }

  std::optional<nlohmann::json> load_json_if(const std::string& name,
                                             const std::string& config_hash) const {
    std::ifstream in(cell_path(name));
    if (!in.good()) return std::nullopt;
    try {
      nlohmann::json j = nlohmann::json::parse(in);
      if (j.value("config_hash", "") == config_hash) return j;
    } catch (const std::exception&) {
    }
    return std::nullopt;
  }

  void save(const std::string& name, const nlohmann::json& j) const {
    std::ofstream out(cell_path(name), std::ios::trunc);
    detail::require(out.good(), "cannot write record " + cell_path(name));
    out << j.dump(2) << "\n";
  }

  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return Rng(base).split(tag).key();
}

inline std::string hash_of(const nlohmann::json& j) {
  const std::string s = j.dump();
  return fingerprint_of(std::vector<unsigned char>(s.begin(), s.end()));
}

inline void run_pool(int jobs, int count, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          int i = next.fetch_add(1);
          if (i >= count) break;
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Shared evaluation corpus for one sweep: fixed iD validation/test sets, the
/// salt-and-pepper corrupted twin of the test set, and (optionally) the
/// ingested external corpus.
struct EvalSets {
  Tensor<float> validation;                       // [val_n, H, W, 1]
  Tensor<float> id_test;                          // [eval_n, ...]
  std::vector<float> id_test_labels;
  std::map<std::string, Tensor<float>> ood_sets;  // name -> stack
};

inline EvalSets make_eval_sets(const ExperimentConfig& cfg) {
  EvalSets ev;
  DatasetHeader vh;
  vh.count = static_cast<std::uint32_t>(cfg.val_n);
  vh.noise_min = vh.noise_max = cfg.noise_level;
  vh.seed = detail::derive_seed(cfg.base_seed, 9001);
  ev.validation = stack_images<float>(generate_amplitude_dataset(vh).images);

  DatasetHeader th = vh;
  th.count = static_cast<std::uint32_t>(cfg.eval_n);
  th.seed = detail::derive_seed(cfg.base_seed, 9002);
  Dataset test = generate_amplitude_dataset(th);
  ev.id_test = stack_images<float>(test.images);
  ev.id_test_labels = test.labels;

  Rng sp_rng(detail::derive_seed(cfg.base_seed, 9003));
  std::vector<std::vector<float>> corrupted;
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    Rng r = sp_rng.split(i);
    corrupted.push_back(salt_pepper(test.images[i].pixels, cfg.sp40, r));
  }
  ev.ood_sets["sp40"] = stack_pixel_planes<float>(corrupted, th.height, th.width);

  if (!cfg.external_dir.empty()) {
    auto planes = ingest_external_images(cfg.external_dir);
    Rng pick(detail::derive_seed(cfg.base_seed, 9004));
    std::vector<std::vector<float>> chosen;
    for (int i = 0; i < cfg.eval_n; ++i)
      chosen.push_back(planes[pick.below(planes.size())]);
    ev.ood_sets["external"] = stack_pixel_planes<float>(chosen, 40, 40);
  } else {
    std::cerr << "warning: no external image directory configured; running salt-and-pepper "
                 "OoD sets only\n";
  }
  return ev;
}

/// Train one model for a sweep cell and score it against the shared sets.
inline ExperimentRecord run_si_cell(const ExperimentConfig& cfg, const EvalSets& ev,
                                    const NetworkSpec& spec, int n_train, int epochs,
                                    double axis_value, int seed_index,
                                    const std::string& config_hash, int jobs = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t cell_tag =
      static_cast<std::uint64_t>(seed_index) * 100000 + static_cast<std::uint64_t>(axis_value);
  ExperimentRecord rec;
  rec.sweep = cfg.sweep;
  rec.axis_value = axis_value;
  rec.seed = detail::derive_seed(cfg.base_seed, 70000 + cell_tag);
  rec.config_hash = config_hash;

  DatasetHeader h;
  h.count = static_cast<std::uint32_t>(n_train);
  h.noise_min = h.noise_max = cfg.noise_level;
  h.seed = detail::derive_seed(cfg.base_seed, 10000 + cell_tag);
  Dataset train_set = generate_amplitude_dataset(h);
  auto X = stack_images<float>(train_set.images);

  Rng init_rng(detail::derive_seed(cfg.base_seed, 20000 + cell_tag));
  auto net = BayesNet<float>::init(spec, init_rng);
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.epochs = epochs;
  tc.mode = cfg.mode;
  tc.seed = detail::derive_seed(cfg.base_seed, 30000 + cell_tag);
  train(net, X, train_set.labels, tc);

  Rng eval_rng(detail::derive_seed(cfg.base_seed, 40000 + cell_tag));
  auto val_bundles = predict_all(net, ev.validation, cfg.resamples, eval_rng.split(0), jobs);
  auto det = fit_rejection_mark(sigma_e_of(val_bundles), cfg.alpha);

  auto id_bundles = predict_all(net, ev.id_test, cfg.resamples, eval_rng.split(1), jobs);
  rec.test_rms = test_rms(id_bundles, ev.id_test_labels);
  rec.mean_sigma_e["id"] = mean_of(sigma_e_of(id_bundles));
  rec.mean_sigma_a["id"] = mean_of(sigma_a_of(id_bundles));

  std::uint64_t lane = 2;
  for (const auto& [name, stack] : ev.ood_sets) {
    auto bundles = predict_all(net, stack, cfg.resamples, eval_rng.split(lane++), jobs);
    auto se = sigma_e_of(bundles);
    rec.si[name] = separation_index(se, det);
    rec.mean_sigma_e[name] = mean_of(se);
    rec.mean_sigma_a[name] = mean_of(sigma_a_of(bundles));
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct SweepResult {
  std::vector<ExperimentRecord> records;
  int cached = 0;
};

/// Generic axis x seed sweep with per-cell resumability.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  detail::require(!cfg.axis_values.empty() || !cfg.filter_grid.empty(),
                  "sweep: axis values must be nonempty");
  detail::require(cfg.seeds >= 1, "sweep: replicate count must be >= 1");
  RecordStore store(cfg.out_dir + "/records");
  const std::string config_hash = detail::hash_of(to_json_config(cfg));
  EvalSets ev = make_eval_sets(cfg);

  struct Cell {
    double axis;
    int f1 = 0, f2 = 0;
    int seed_index;
    std::string name;
  };
  std::vector<Cell> cells;
  const bool filters = cfg.sweep == "filters";
  const std::size_t n_axis = filters ? cfg.filter_grid.size() : cfg.axis_values.size();
  for (std::size_t ai = 0; ai < n_axis; ++ai)
    for (int si = 0; si < cfg.seeds; ++si) {
      Cell c;
      c.seed_index = si;
      if (filters) {
        c.f1 = cfg.filter_grid[ai].first;
        c.f2 = cfg.filter_grid[ai].second;
        c.axis = c.f1;
        c.name = cfg.sweep + "_f" + std::to_string(c.f1) + "x" + std::to_string(c.f2) + "_s" +
                 std::to_string(si);
      } else {
        c.axis = cfg.axis_values[ai];
        c.name = cfg.sweep + "_v" + format_g(c.axis) + "_s" + std::to_string(si);
      }
      cells.push_back(std::move(c));
    }

  SweepResult result;
  result.records.resize(cells.size());
  std::atomic<int> cached{0};
  const int inner_jobs = static_cast<int>(cells.size()) >= cfg.jobs ? 1 : cfg.jobs;
  detail::run_pool(cfg.jobs, static_cast<int>(cells.size()), [&](int i) {
    const Cell& c = cells[i];
    if (auto done = store.load_if_done(c.name, config_hash)) {
      result.records[i] = *done;
      cached.fetch_add(1);
      return;
    }
    int n_train = cfg.train_n, epochs = cfg.epochs;
    NetworkSpec spec = model1_spec(cfg.mode);
    if (cfg.sweep == "training_size") n_train = static_cast<int>(c.axis);
    if (cfg.sweep == "epochs") epochs = static_cast<int>(c.axis);
    if (filters) spec = model2_spec(c.f1, c.f2, cfg.mode);
    ExperimentRecord rec = run_si_cell(cfg, ev, spec, n_train, epochs,
                                       filters ? c.f1 : c.axis, c.seed_index, config_hash,
                                       inner_jobs);
    if (filters) {
      rec.f1 = c.f1;
      rec.f2 = c.f2;
    }
    store.save(c.name, nlohmann::json(rec));
    result.records[i] = rec;
  });
  result.cached = cached.load();
  return result;
}

// ---------------------------------------------------------------------------
// GAN vs epistemic-uncertainty comparison
// ---------------------------------------------------------------------------

/// One (level, method, proportion, seed) curve point.
struct OodCurvePoint {
  std::string curve;  // "sp" or "blend"
  double level;
  std::string method;  // "bnn" or "gan"
  double proportion;
  std::uint64_t seed;
};

struct GanComparisonResult {
  std::vector<OodCurvePoint> points;
  int cached = 0;
};

/// Trains a BNN and a GAN per seed on the same dataset, then sweeps
/// salt-and-pepper fractions and blend levels, reporting the proportion each
/// method flags as OoD. Resumable at seed granularity.
inline GanComparisonResult gan_comparison(const ExperimentConfig& cfg) {
  RecordStore store(cfg.out_dir + "/records");
  const std::string config_hash = detail::hash_of(to_json_config(cfg));
  EvalSets ev = make_eval_sets(cfg);

  DatasetHeader th;
  th.count = static_cast<std::uint32_t>(cfg.eval_n);
  th.noise_min = th.noise_max = cfg.noise_level;
  th.seed = detail::derive_seed(cfg.base_seed, 9002);
  Dataset test = generate_amplitude_dataset(th);

  std::vector<double> blend_grid;
  for (int i = 0; i <= 10; ++i) blend_grid.push_back(i / 10.0);

  std::vector<std::vector<float>> external;
  std::vector<int> pairing;
  if (!cfg.external_dir.empty()) {
    external = ingest_external_images(cfg.external_dir);
    Rng pr(detail::derive_seed(cfg.base_seed, 9005));
    pairing = make_blend_pairing(test.images.size(), external.size(), pr);
  }

  GanComparisonResult result;
  std::mutex mu;
  std::atomic<int> cached{0};
  detail::run_pool(cfg.jobs, cfg.seeds, [&](int si) {
    const std::string name = "gan_comparison_s" + std::to_string(si);
    if (auto done = store.load_json_if(name, config_hash)) {
      std::vector<OodCurvePoint> pts;
      for (const auto& p : done->at("points"))
        pts.push_back({p.at("curve"), p.at("level"), p.at("method"), p.at("proportion"),
                       p.at("seed")});
      std::lock_guard<std::mutex> lk(mu);
      result.points.insert(result.points.end(), pts.begin(), pts.end());
      cached.fetch_add(1);
      return;
    }

    const std::uint64_t tag = static_cast<std::uint64_t>(si);
    DatasetHeader h;
    h.count = static_cast<std::uint32_t>(cfg.train_n);
    h.noise_min = h.noise_max = cfg.noise_level;
    h.seed = detail::derive_seed(cfg.base_seed, 10000 + tag);
    Dataset train_set = generate_amplitude_dataset(h);
    auto X = stack_images<float>(train_set.images);

    // the BNN and the GAN share the training dataset
    Rng init_rng(detail::derive_seed(cfg.base_seed, 20000 + tag));
    auto net = BayesNet<float>::init(model1_spec(cfg.mode), init_rng);
    TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.epochs = cfg.epochs;
    tc.mode = cfg.mode;
    tc.seed = detail::derive_seed(cfg.base_seed, 30000 + tag);
    train(net, X, train_set.labels, tc);

    GanTrainConfig gc;
    gc.batch_size = cfg.batch_size;
    gc.lr = cfg.lr;
    gc.epochs = cfg.epochs;
    gc.seed = detail::derive_seed(cfg.base_seed, 31000 + tag);
    Gan gan = gan_train(X, default_gan_spec(), gc);

    Rng eval_rng(detail::derive_seed(cfg.base_seed, 40000 + tag));
    auto det = fit_rejection_mark(
        sigma_e_of(predict_all(net, ev.validation, cfg.resamples, eval_rng.split(0))), cfg.alpha);
    auto disc_th = fit_disc_threshold(disc_scores(ev.validation, gan.discriminator), cfg.alpha);

    std::vector<OodCurvePoint> pts;
    const std::uint64_t seed_val = detail::derive_seed(cfg.base_seed, 70000 + tag);
    auto score_set = [&](const std::string& curve, double level,
                         const std::vector<std::vector<float>>& planes, std::uint64_t lane) {
      auto stack = stack_pixel_planes<float>(planes, th.height, th.width);
      auto se = sigma_e_of(predict_all(net, stack, cfg.resamples, eval_rng.split(lane)));
      pts.push_back({curve, level, "bnn",
                     proportion_ood(se, [&](double s) { return classify_ood(s, det); }),
                     seed_val});
      auto scores = disc_scores(stack, gan.discriminator);
      pts.push_back({curve, level, "gan",
                     proportion_ood(scores, [&](double s) { return classify_gan(s, disc_th); }),
                     seed_val});
    };

    std::uint64_t lane = 10;
    Rng sp_rng(detail::derive_seed(cfg.base_seed, 50000));
    for (double frac : cfg.axis_values) {
      std::vector<std::vector<float>> planes;
      for (std::size_t i = 0; i < test.images.size(); ++i) {
        Rng r = sp_rng.split(static_cast<std::uint64_t>(frac * 1000) * 100000 + i);
        planes.push_back(salt_pepper(test.images[i].pixels, frac, r));
      }
      score_set("sp", frac, planes, lane++);
    }
    if (!external.empty()) {
      for (double lambda : blend_grid) {
        std::vector<std::vector<float>> planes;
        for (std::size_t i = 0; i < test.images.size(); ++i)
          planes.push_back(blend(test.images[i].pixels, external[pairing[i]], lambda));
        score_set("blend", lambda, planes, lane++);
      }
    }

    nlohmann::json rec{{"config_hash", config_hash}, {"points", nlohmann::json::array()}};
    for (const auto& p : pts)
      rec["points"].push_back({{"curve", p.curve},
                               {"level", p.level},
                               {"method", p.method},
                               {"proportion", p.proportion},
                               {"seed", p.seed}});
    store.save(name, rec);
    std::lock_guard<std::mutex> lk(mu);
    result.points.insert(result.points.end(), pts.begin(), pts.end());
  });
  result.cached = cached.load();

  std::sort(result.points.begin(), result.points.end(), [](const auto& a, const auto& b) {
    return std::tie(a.curve, a.level, a.method, a.seed) <
           std::tie(b.curve, b.level, b.method, b.seed);
  });
  return result;
}

inline void write_gan_comparison_csv(const std::string& dir, const GanComparisonResult& res) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/gan_comparison.csv", std::ios::trunc);
  out << "curve,corruption_or_blend_level,method,proportion_ood,seed\n";
  for (const auto& p : res.points)
    out << p.curve << "," << format_g(p.level) << "," << p.method << ","
        << format_g(p.proportion) << "," << p.seed << "\n";
  // seed-averaged overlay plots
  for (const std::string curve : {"sp", "blend"}) {
    std::map<std::string, std::map<double, std::pair<double, int>>> agg;
    for (const auto& p : res.points)
      if (p.curve == curve) {
        auto& slot = agg[p.method][p.level];
        slot.first += p.proportion;
        slot.second += 1;
      }
    if (agg.empty()) continue;
    SvgPlot plot("Proportion flagged OoD vs " + curve + " level", curve + " level",
                 "proportion OoD");
    for (const auto& [method, series] : agg) {
      std::vector<double> x, y;
      for (const auto& [level, sum_n] : series) {
        x.push_back(level);
        y.push_back(sum_n.first / sum_n.second);
      }
      plot.add_series(method, x, y);
    }
    plot.write(dir + "/gan_comparison_" + curve + ".svg");
  }
}

// ---------------------------------------------------------------------------
// Appendix studies
// ---------------------------------------------------------------------------

struct AppendixAResult {
  std::vector<double> density, sigma_e, sigma_a;
  std::vector<double> bin_centers, bin_mean_sigma_e;
};

/// Beta(2,2) 2x2 study: trains the small dense BNN and relates exact joint
/// density to epistemic uncertainty on the interior grid sample.
inline AppendixAResult appendix_a(const ExperimentConfig& cfg) {
  Rng data_rng(detail::derive_seed(cfg.base_seed, 1));
  auto train_images = generate_beta_dataset(data_rng, cfg.train_n);
  auto X = stack_beta_images<float>(train_images);
  auto y = labels_of<float>(train_images);

  NetworkSpec spec = dense_spec({2, 2, 1}, {16, 16}, cfg.mode);
  Rng init_rng(detail::derive_seed(cfg.base_seed, 2));
  auto net = BayesNet<float>::init(spec, init_rng);
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.epochs = cfg.epochs;
  tc.mode = cfg.mode;
  tc.seed = detail::derive_seed(cfg.base_seed, 3);
  train(net, X, y, tc);

  Rng grid_rng(detail::derive_seed(cfg.base_seed, 4));
  auto grid = grid_beta_testset(20, 3000, grid_rng);
  auto Xg = stack_beta_images<float>(grid);
  auto bundles = predict_all(net, Xg, cfg.resamples,
                             Rng(detail::derive_seed(cfg.base_seed, 5)), cfg.jobs);

  AppendixAResult res;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    res.density.push_back(grid[i].joint_density);
    res.sigma_e.push_back(bundles[i].sigma_e);
    res.sigma_a.push_back(bundles[i].sigma_a);
  }
  // ten equal-width density bins
  const double dmax = *std::max_element(res.density.begin(), res.density.end());
  const int nbins = 10;
  std::vector<double> sums(nbins, 0);
  std::vector<int> counts(nbins, 0);
  for (std::size_t i = 0; i < res.density.size(); ++i) {
    int b = std::min(nbins - 1, static_cast<int>(res.density[i] / dmax * nbins));
    sums[b] += res.sigma_e[i];
    counts[b] += 1;
  }
  for (int b = 0; b < nbins; ++b) {
    res.bin_centers.push_back((b + 0.5) * dmax / nbins);
    res.bin_mean_sigma_e.push_back(counts[b] ? sums[b] / counts[b] : 0.0);
  }

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream table(cfg.out_dir + "/appendix_a_table.csv", std::ios::trunc);
  table << "joint_density,sigma_e,sigma_a\n";
  for (std::size_t i = 0; i < res.density.size(); ++i)
    table << format_g(res.density[i]) << "," << format_g(res.sigma_e[i]) << ","
          << format_g(res.sigma_a[i]) << "\n";
  std::ofstream bins(cfg.out_dir + "/appendix_a_bins.csv", std::ios::trunc);
  bins << "density_bin_center,mean_sigma_e,count\n";
  for (int b = 0; b < nbins; ++b)
    bins << format_g(res.bin_centers[b]) << "," << format_g(res.bin_mean_sigma_e[b]) << ","
         << counts[b] << "\n";
  SvgPlot plot("Mean epistemic uncertainty vs joint density", "joint density bin",
               "mean sigma_e");
  plot.add_series("binned mean", res.bin_centers, res.bin_mean_sigma_e);
  plot.write(cfg.out_dir + "/appendix_a_bins.svg");
  return res;
}

/// Heteroscedastic calibration with the dense architecture.
inline CalibrationCurve appendix_b(const ExperimentConfig& cfg) {
  DatasetHeader h;
  h.count = static_cast<std::uint32_t>(cfg.train_n);
  h.noise_min = h.noise_max = cfg.noise_level;
  h.seed = detail::derive_seed(cfg.base_seed, 11);
  Dataset train_set = generate_amplitude_dataset(h);
  auto X = stack_images<float>(train_set.images);

  NetworkSpec spec = dense_spec({40, 40, 1}, {128, 64}, cfg.mode);
  Rng init_rng(detail::derive_seed(cfg.base_seed, 12));
  auto net = BayesNet<float>::init(spec, init_rng);
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.epochs = cfg.epochs;
  tc.mode = cfg.mode;
  tc.seed = detail::derive_seed(cfg.base_seed, 13);
  train(net, X, train_set.labels, tc);

  DatasetHeader th = h;
  th.count = static_cast<std::uint32_t>(cfg.eval_n);
  th.seed = detail::derive_seed(cfg.base_seed, 14);
  Dataset test = generate_amplitude_dataset(th);
  auto bundles = predict_all(net, stack_images<float>(test.images), cfg.resamples,
                             Rng(detail::derive_seed(cfg.base_seed, 15)), cfg.jobs);

  std::vector<double> labels(test.labels.begin(), test.labels.end());
  auto curve = calibration_curve(y_mean_of(bundles), sigma_a_of(bundles), labels,
                                 default_levels());
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/appendix_b_calibration.csv", std::ios::trunc);
  out << "level,coverage\n";
  for (std::size_t i = 0; i < curve.levels.size(); ++i)
    out << format_g(curve.levels[i]) << "," << format_g(curve.coverage[i]) << "\n";
  SvgPlot plot("Calibration", "nominal confidence level", "empirical coverage");
  plot.add_series("coverage", curve.levels, curve.coverage);
  plot.add_series("ideal", {0.05, 0.95}, {0.05, 0.95});
  plot.write(cfg.out_dir + "/appendix_b_calibration.svg");
  return curve;
}

struct NoiseLevelSummary {
  double level;
  double mean_sigma_a, q25_sigma_a, q50_sigma_a, q75_sigma_a;
  double mean_sigma_e, q25_sigma_e, q50_sigma_e, q75_sigma_e;
};

/// Background-noise study: train across the full noise range, evaluate at
/// fixed levels.
inline std::vector<NoiseLevelSummary> appendix_c(const ExperimentConfig& cfg) {
  DatasetHeader h;
  h.count = static_cast<std::uint32_t>(cfg.train_n);
  h.noise_min = 1.0;
  h.noise_max = 2048.0;
  h.seed = detail::derive_seed(cfg.base_seed, 21);
  Dataset train_set = generate_amplitude_dataset(h);
  auto X = stack_images<float>(train_set.images);

  Rng init_rng(detail::derive_seed(cfg.base_seed, 22));
  auto net = BayesNet<float>::init(model1_spec(cfg.mode), init_rng);
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.epochs = cfg.epochs;
  tc.mode = cfg.mode;
  tc.seed = detail::derive_seed(cfg.base_seed, 23);
  train(net, X, train_set.labels, tc);

  auto quartiles = [](std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - i;
    return i + 1 < v.size() ? v[i] * (1 - frac) + v[i + 1] * frac : v.back();
  };

  const std::vector<double> levels = {1, 256, 512, 768, 1024, 1280, 1536, 1792, 2048};
  std::vector<NoiseLevelSummary> out;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    DatasetHeader th;
    th.count = static_cast<std::uint32_t>(cfg.eval_n);
    th.noise_min = th.noise_max = levels[li];
    th.seed = detail::derive_seed(cfg.base_seed, 30 + li);
    Dataset test = generate_amplitude_dataset(th);
    auto bundles = predict_all(net, stack_images<float>(test.images), cfg.resamples,
                               Rng(detail::derive_seed(cfg.base_seed, 50 + li)), cfg.jobs);
    auto sa = sigma_a_of(bundles);
    auto se = sigma_e_of(bundles);
    NoiseLevelSummary s;
    s.level = levels[li];
    s.mean_sigma_a = mean_of(sa);
    s.q25_sigma_a = quartiles(sa, 0.25);
    s.q50_sigma_a = quartiles(sa, 0.5);
    s.q75_sigma_a = quartiles(sa, 0.75);
    s.mean_sigma_e = mean_of(se);
    s.q25_sigma_e = quartiles(se, 0.25);
    s.q50_sigma_e = quartiles(se, 0.5);
    s.q75_sigma_e = quartiles(se, 0.75);
    out.push_back(s);
  }

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir + "/appendix_c_noise.csv", std::ios::trunc);
  csv << "noise_level,mean_sigma_a,q25_sigma_a,q50_sigma_a,q75_sigma_a,"
      << "mean_sigma_e,q25_sigma_e,q50_sigma_e,q75_sigma_e\n";
  for (const auto& s : out)
    csv << format_g(s.level) << "," << format_g(s.mean_sigma_a) << "," << format_g(s.q25_sigma_a)
        << "," << format_g(s.q50_sigma_a) << "," << format_g(s.q75_sigma_a) << ","
        << format_g(s.mean_sigma_e) << "," << format_g(s.q25_sigma_e) << ","
        << format_g(s.q50_sigma_e) << "," << format_g(s.q75_sigma_e) << "\n";
  SvgPlot plot("Uncertainty vs background noise level", "noise level", "uncertainty");
  {
    std::vector<double> x, ya, ye;
    for (const auto& s : out) {
      x.push_back(s.level);
      ya.push_back(s.mean_sigma_a);
      ye.push_back(s.mean_sigma_e);
    }
    plot.add_series("mean sigma_a", x, ya);
    plot.add_series("mean sigma_e", x, ye);
  }
  plot.write(cfg.out_dir + "/appendix_c_noise.svg");
  return out;
}

struct ScatterRow {
  double amplitude, y_mean, sigma_a, sigma_e;
};

/// Per-image uncertainty table for a trained model on a labeled test stack.
template <class T>
std::vector<ScatterRow> uncertainty_scatter(const BayesNet<T>& net, const Tensor<T>& X,
                                            const std::vector<T>& labels, int resamples,
                                            const Rng& rng, int jobs = 1) {
  auto bundles = predict_all(net, X, resamples, rng, jobs);
  std::vector<ScatterRow> rows(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i)
    rows[i] = {static_cast<double>(labels[i]), bundles[i].y_mean, bundles[i].sigma_a,
               bundles[i].sigma_e};
  return rows;
}

inline void write_scatter_csv(const std::string& dir, const std::vector<ScatterRow>& rows) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/uncertainty_scatter.csv", std::ios::trunc);
  out << "amplitude,y_mean,sigma_a,sigma_e\n";
  for (const auto& r : rows)
    out << format_g(r.amplitude) << "," << format_g(r.y_mean) << "," << format_g(r.sigma_a)
        << "," << format_g(r.sigma_e) << "\n";
  // histogram summaries of the two uncertainty distributions
  auto histogram = [](std::vector<double> v, int nbins) {
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    std::vector<int> counts(nbins, 0);
    std::vector<double> centers(nbins);
    const double w = (hi > lo) ? (hi - lo) / nbins : 1.0;
    for (int b = 0; b < nbins; ++b) centers[b] = lo + (b + 0.5) * w;
    for (double x : v)
      counts[std::min(nbins - 1, static_cast<int>((x - lo) / w))] += 1;
    return std::pair(centers, counts);
  };
  std::vector<double> sa, se;
  for (const auto& r : rows) {
    sa.push_back(r.sigma_a);
    se.push_back(r.sigma_e);
  }
  std::ofstream hist(dir + "/uncertainty_histograms.csv", std::ios::trunc);
  hist << "quantity,bin_center,count\n";
  for (const auto& [name, values] : {std::pair{std::string("sigma_a"), sa},
                                     std::pair{std::string("sigma_e"), se}}) {
    auto [centers, counts] = histogram(values, 20);
    for (std::size_t b = 0; b < centers.size(); ++b)
      hist << name << "," << format_g(centers[b]) << "," << counts[b] << "\n";
  }
}

/// Per-seed rows plus seed-averaged summary; the summary means are exact
/// means of the per-seed rows.
inline void write_sweep_csv(const std::string& dir, const std::string& sweep,
                            const std::vector<ExperimentRecord>& records) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> set_names;
  for (const auto& [k, v] : records.front().si) set_names.push_back(k);

  std::ofstream rows(dir + "/" + sweep + "_records.csv", std::ios::trunc);
  rows << "axis_value,f1,f2,seed,test_rms";
  for (const auto& s : set_names) rows << ",si_" << s;
  for (const auto& s : set_names) rows << ",mean_sigma_e_" << s;
  rows << ",mean_sigma_e_id,mean_sigma_a_id\n";
  for (const auto& r : records) {
    rows << format_g(r.axis_value) << "," << r.f1 << "," << r.f2 << "," << r.seed << ","
         << format_g(r.test_rms);
    for (const auto& s : set_names) rows << "," << format_g(r.si.at(s));
    for (const auto& s : set_names) rows << "," << format_g(r.mean_sigma_e.at(s));
    rows << "," << format_g(r.mean_sigma_e.at("id")) << "," << format_g(r.mean_sigma_a.at("id"))
         << "\n";
  }

  // group by axis (f1/f2 pairs keep distinct axis via f1; disambiguate with f2)
  std::map<std::pair<double, int>, std::vector<const ExperimentRecord*>> by_axis;
  for (const auto& r : records) by_axis[{r.axis_value, r.f2}].push_back(&r);
  std::ofstream avg(dir + "/" + sweep + "_summary.csv", std::ios::trunc);
  avg << "axis_value,f1,f2,n_seeds,mean_test_rms";
  for (const auto& s : set_names) avg << ",mean_si_" << s;
  avg << "\n";
  for (const auto& [key, group] : by_axis) {
    double rms_sum = 0;
    std::map<std::string, double> si_sum;
    for (const auto* r : group) {
      rms_sum += r->test_rms;
      for (const auto& s : set_names) si_sum[s] += r->si.at(s);
    }
    const double n = static_cast<double>(group.size());
    avg << format_g(key.first) << "," << group.front()->f1 << "," << group.front()->f2 << ","
        << group.size() << "," << format_g(rms_sum / n);
    for (const auto& s : set_names) avg << "," << format_g(si_sum.at(s) / n);
    avg << "\n";
  }
}

inline void write_sweep_svg(const std::string& dir, const std::string& sweep,
                            const std::vector<ExperimentRecord>& records) {
  std::map<double, std::vector<const ExperimentRecord*>> by_axis;
  for (const auto& r : records) by_axis[r.axis_value].push_back(&r);
  std::vector<double> axis;
  std::map<std::string, std::vector<double>> si_series;
  std::vector<double> rms_series;
  for (const auto& [a, group] : by_axis) {
    axis.push_back(a);
    double rms_sum = 0;
    std::map<std::string, double> si_sum;
    for (const auto* r : group) {
      rms_sum += r->test_rms;
      for (const auto& [k, v] : r->si) si_sum[k] += v;
    }
    for (const auto& [k, v] : si_sum) si_series[k].push_back(v / group.size());
    rms_series.push_back(rms_sum / group.size());
  }
  SvgPlot si_plot("Separation index vs " + sweep, sweep, "separation index");
  for (const auto& [k, v] : si_series) si_plot.add_series(k, axis, v);
  si_plot.write(dir + "/" + sweep + "_si.svg");
  SvgPlot rms_plot("Test RMS vs " + sweep, sweep, "test RMS");
  rms_plot.add_series("test_rms", axis, rms_series);
  rms_plot.write(dir + "/" + sweep + "_rms.svg");
}

}  // namespace bood
