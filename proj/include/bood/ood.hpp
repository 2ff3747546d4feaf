#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bood/stats.hpp"
#include "bood/tensor.hpp"

namespace bood {

/// Epistemic-uncertainty rejection threshold. RM is the nearest-rank-above
/// 100(1-alpha) percentile of the validation sigma_e sample, so alpha = 0 is
/// exactly the sample maximum. Immutable after fit.
struct OoDDetector {
  double rm = 0.0;
  double alpha = 0.05;
  std::size_t validation_size = 0;
  std::string model_fingerprint;
  std::string percentile_rule = "nearest-rank-above";
};

inline OoDDetector fit_rejection_mark(const std::vector<double>& validation_sigma_e, double alpha,
                                      std::string model_fingerprint = "") {
  detail::require(!validation_sigma_e.empty(), "fit_rejection_mark: empty validation sample");
  detail::require(validation_sigma_e.size() >= 20, "fit_rejection_mark: need at least 20 values");
  detail::require(alpha >= 0.0 && alpha <= 1.0, "fit_rejection_mark: alpha must be in [0,1]");
  OoDDetector det;
  det.rm = percentile_nearest_rank(validation_sigma_e, alpha);
  det.alpha = alpha;
  det.validation_size = validation_sigma_e.size();
  det.model_fingerprint = std::move(model_fingerprint);
  return det;
}

/// Flag as OoD iff sigma_e > RM (strict inequality).
inline bool classify_ood(double sigma_e, const OoDDetector& det) { return sigma_e > det.rm; }

/// Proportion of the OoD evaluation set flagged OoD; 1.0 means perfect
/// detection at the detector's alpha.
inline double separation_index(const std::vector<double>& ood_sigma_e, const OoDDetector& det) {
  detail::require(!ood_sigma_e.empty(), "separation_index: empty sample");
  std::size_t flagged = 0;
  for (double s : ood_sigma_e)
    if (classify_ood(s, det)) ++flagged;
  return static_cast<double>(flagged) / static_cast<double>(ood_sigma_e.size());
}

struct RocCurve {
  std::vector<double> alphas;
  std::vector<double> si;
  double auc = 0.0;
};

inline std::vector<double> default_alpha_grid(int points = 101) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i) / (points - 1);
  return g;
}

/// SI as a function of alpha: refit RM on the iD sample at each grid point
/// and score the OoD sample. AUC over alpha by the trapezoidal rule; 0.5 is
/// a random detector, 1.0 a perfect one.
inline RocCurve roc_curve(const std::vector<double>& id_sigma_e,
                          const std::vector<double>& ood_sigma_e,
                          const std::vector<double>& alpha_grid) {
  detail::require(!id_sigma_e.empty() && !ood_sigma_e.empty(), "roc_curve: empty sample");
  detail::require(alpha_grid.size() >= 2, "roc_curve: need at least 2 grid points");
  for (std::size_t i = 1; i < alpha_grid.size(); ++i)
    detail::require(alpha_grid[i] >= alpha_grid[i - 1], "roc_curve: alpha grid must be sorted");
  RocCurve rc;
  rc.alphas = alpha_grid;
  rc.si.reserve(alpha_grid.size());
  for (double a : alpha_grid) {
    auto det = fit_rejection_mark(id_sigma_e, a);
    rc.si.push_back(separation_index(ood_sigma_e, det));
  }
  rc.auc = trapezoid_auc(rc.alphas, rc.si);
  return rc;
}

/// Symmetric Gaussian interval yhat +- z * sigma_a with z from the inverse
/// standard-normal CDF at (1+level)/2.
inline std::pair<double, double> confidence_interval(double yhat, double sigma_a, double level) {
  detail::require(level > 0.0 && level < 1.0, "confidence_interval: level must be in (0,1)");
  detail::require(sigma_a > 0.0, "confidence_interval: sigma_a must be positive");
  const double z = normal_quantile(0.5 * (1.0 + level));
  return {yhat - z * sigma_a, yhat + z * sigma_a};
}

struct CalibrationCurve {
  std::vector<double> levels;
  std::vector<double> coverage;

  double mean_abs_gap() const {
    double s = 0;
    for (std::size_t i = 0; i < levels.size(); ++i) s += std::abs(coverage[i] - levels[i]);
    return s / static_cast<double>(levels.size());
  }
};

/// Empirical coverage of the Gaussian intervals at each nominal level.
inline CalibrationCurve calibration_curve(const std::vector<double>& yhat,
                                          const std::vector<double>& sigma_a,
                                          const std::vector<double>& labels,
                                          const std::vector<double>& levels) {
  detail::require(yhat.size() == sigma_a.size() && yhat.size() == labels.size(),
                  "calibration_curve: length mismatch");
  detail::require(!yhat.empty() && !levels.empty(), "calibration_curve: empty input");
  CalibrationCurve cc;
  cc.levels = levels;
  for (std::size_t li = 1; li < levels.size(); ++li)
    detail::require(levels[li] > levels[li - 1], "calibration_curve: levels must increase");
  for (double level : levels) {
    detail::require(level > 0.0 && level < 1.0, "calibration_curve: level must be in (0,1)");
    const double z = normal_quantile(0.5 * (1.0 + level));
    std::size_t inside = 0;
    for (std::size_t i = 0; i < yhat.size(); ++i)
      if (std::abs(labels[i] - yhat[i]) <= z * sigma_a[i]) ++inside;
    cc.coverage.push_back(static_cast<double>(inside) / static_cast<double>(yhat.size()));
  }
  return cc;
}

inline std::vector<double> default_levels() {
  std::vector<double> v;
  for (int i = 1; i <= 19; ++i) v.push_back(0.05 * i);
  return v;
}

// --- serialization ---

inline void to_json(nlohmann::json& j, const OoDDetector& d) {
  j = nlohmann::json{{"rm", d.rm},
                     {"alpha", d.alpha},
                     {"validation_size", d.validation_size},
                     {"model_fingerprint", d.model_fingerprint},
                     {"percentile_rule", d.percentile_rule}};
}

inline void from_json(const nlohmann::json& j, OoDDetector& d) {
  j.at("rm").get_to(d.rm);
  j.at("alpha").get_to(d.alpha);
  j.at("validation_size").get_to(d.validation_size);
  j.at("model_fingerprint").get_to(d.model_fingerprint);
  j.at("percentile_rule").get_to(d.percentile_rule);
}

inline void save_detector(const std::string& path, const OoDDetector& d,
                          const std::string& model_path = "") {
  nlohmann::json j(d);
  if (!model_path.empty()) j["model_path"] = model_path;
  std::ofstream out(path, std::ios::trunc);
  detail::require(out.good(), "cannot open " + path);
  out << j.dump(2) << "\n";
}

inline OoDDetector load_detector(const std::string& path, std::string* model_path = nullptr) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (model_path) *model_path = j.value("model_path", "");
  return j.get<OoDDetector>();
}

}  // namespace bood
