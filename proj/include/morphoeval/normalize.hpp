#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "morphoeval/log.hpp"
#include "morphoeval/pipeline_config.hpp"
#include "morphoeval/types.hpp"

namespace morphoeval {

// Fixed normalization pipeline, applied in this order when enabled:
//   1. per-plate center-scale (z-score, sample std)
//   2. PCA fit on the entire dataset
//   3. per-plate MAD robustize (control- or all-well referenced)
//   4. per-batch ZCA sphering fit on negative controls
// Fit parameters are captured in FittedPipeline so a fitted transform can be
// serialized and re-applied.

struct PlateScale {
  Eigen::VectorXd mean;
  Eigen::VectorXd divisor;  // sample std, or 1 where std < epsilon
};

struct PcaModel {
  Eigen::VectorXd mean;               // d
  Eigen::MatrixXd loadings;           // d x k, orthonormal columns
  Eigen::VectorXd explained_variance; // k
};

struct PlateRobust {
  Eigen::VectorXd median;
  Eigen::VectorXd scale;  // 1.4826 * MAD + epsilon
};

struct BatchSphere {
  Eigen::VectorXd mean;       // control mean
  Eigen::MatrixXd transform;  // (cov + eps I)^(-1/2), symmetric
  bool identity = false;      // too few controls: batch left untransformed
};

struct FittedPipeline {
  PipelineConfig config;
  std::map<std::string, PlateScale> center_scale;
  std::optional<PcaModel> pca;
  std::map<std::string, PlateRobust> mad;
  std::map<std::string, BatchSphere> sphere;
};

namespace detail {

inline double column_median(std::vector<double>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  const std::size_t n = scratch.size();
  return n % 2 == 1 ? scratch[n / 2] : 0.5 * (scratch[n / 2 - 1] + scratch[n / 2]);
}

// Deterministic sign: the largest-magnitude entry of each loading column is
// positive; ties resolved by the earliest index.
inline void fix_loading_signs(Eigen::MatrixXd& loadings) {
  for (Eigen::Index c = 0; c < loadings.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < loadings.rows(); ++r) {
      const double mag = std::abs(loadings(r, c));
      if (mag > best) {
        best = mag;
        arg = r;
      }
    }
    if (loadings(arg, c) < 0.0) loadings.col(c) *= -1.0;
  }
}

}  // namespace detail

inline std::map<std::string, PlateScale> fit_center_scale(const ProfileSet& ps,
                                                          double epsilon = 1e-6) {
  std::map<std::string, PlateScale> out;
  for (const auto& [plate, rows] : rows_by_plate(ps)) {
    if (rows.size() < 2)
      throw std::runtime_error("plate '" + plate + "' has a single well; cannot center-scale");
    PlateScale s;
    s.mean = Eigen::VectorXd::Zero(ps.dim());
    for (int i : rows) s.mean += ps.features.row(i).transpose();
    s.mean /= static_cast<double>(rows.size());
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(ps.dim());
    for (int i : rows) {
      const Eigen::VectorXd d = ps.features.row(i).transpose() - s.mean;
      ss += d.cwiseProduct(d);
    }
    const Eigen::VectorXd std_dev = (ss / static_cast<double>(rows.size() - 1)).cwiseSqrt();
    s.divisor = std_dev.unaryExpr([&](double v) { return v < epsilon ? 1.0 : v; });
    out[plate] = std::move(s);
  }
  return out;
}

inline ProfileSet apply_center_scale(const ProfileSet& ps,
                                     const std::map<std::string, PlateScale>& scales) {
  ProfileSet out = ps;
  for (const auto& [plate, rows] : rows_by_plate(ps)) {
    const auto it = scales.find(plate);
    if (it == scales.end())
      throw std::runtime_error("plate '" + plate + "' missing from fitted center-scale");
    for (int i : rows)
      out.features.row(i) = (ps.features.row(i).transpose() - it->second.mean)
                                .cwiseQuotient(it->second.divisor)
                                .transpose();
  }
  return out;
}

// Per plate, per feature: x' = (x - mean) / std (sample std). Features with
// std below epsilon are centered only.
inline ProfileSet center_scale_per_plate(const ProfileSet& ps, double epsilon = 1e-6) {
  return apply_center_scale(ps, fit_center_scale(ps, epsilon));
}

// Loadings are the top-k right singular vectors of the centered data. When
// n > d the covariance eigendecomposition is used instead of a full SVD;
// both routes agree up to the deterministic sign convention.
inline PcaModel fit_pca(const ProfileSet& ps, int k) {
  if (k <= 0) throw std::invalid_argument("PCA component count must be positive");
  const Eigen::Index n = ps.features.rows();
  const Eigen::Index d = ps.features.cols();
  if (n < 2) throw std::runtime_error("PCA needs at least 2 rows");

  const auto k_cap = static_cast<int>(std::min<Eigen::Index>(d, n - 1));
  int k_eff = std::min(k, k_cap);
  if (k_eff < k)
    log_warn("PCA components capped at " + std::to_string(k_eff) + " (requested " +
             std::to_string(k) + ", d=" + std::to_string(d) + ", n=" + std::to_string(n) + ")");

  PcaModel model;
  model.mean = ps.features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = ps.features.rowwise() - model.mean.transpose();

  if (n > d) {
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    model.loadings.resize(d, k_eff);
    model.explained_variance.resize(k_eff);
    for (int c = 0; c < k_eff; ++c) {
      const Eigen::Index src = d - 1 - c;  // eigenvalues come back ascending
      model.loadings.col(c) = solver.eigenvectors().col(src);
      model.explained_variance(c) = std::max(0.0, solver.eigenvalues()(src));
    }
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    model.loadings = svd.matrixV().leftCols(k_eff);
    model.explained_variance.resize(k_eff);
    for (int c = 0; c < k_eff; ++c) {
      const double s = svd.singularValues()(c);
      model.explained_variance(c) = s * s / static_cast<double>(n - 1);
    }
  }
  detail::fix_loading_signs(model.loadings);
  return model;
}

inline ProfileSet apply_pca(const ProfileSet& ps, const PcaModel& model) {
  ProfileSet out = ps;
  out.features = (ps.features.rowwise() - model.mean.transpose()) * model.loadings;
  out.feature_names.clear();
  for (Eigen::Index j = 0; j < out.features.cols(); ++j)
    out.feature_names.push_back("pc" + std::to_string(j + 1));
  return out;
}

inline std::map<std::string, PlateRobust> fit_mad_robustize(const ProfileSet& ps, MadMode mode,
                                                            double epsilon = 1e-6) {
  if (mode == MadMode::none) return {};
  std::map<std::string, PlateRobust> out;
  for (const auto& [plate, rows] : rows_by_plate(ps)) {
    std::vector<int> reference;
    if (mode == MadMode::per_plate_controls) {
      for (int i : rows)
        if (ps.meta[static_cast<std::size_t>(i)].is_negative_control) reference.push_back(i);
      if (reference.size() < 2) {
        log_warn("plate '" + plate + "' has <2 negative controls; MAD falls back to all wells");
        reference = rows;
      }
    } else {
      reference = rows;
    }
    PlateRobust r;
    r.median.resize(ps.dim());
    r.scale.resize(ps.dim());
    std::vector<double> scratch(reference.size());
    for (Eigen::Index j = 0; j < ps.dim(); ++j) {
      for (std::size_t t = 0; t < reference.size(); ++t)
        scratch[t] = ps.features(reference[t], j);
      const double med = detail::column_median(scratch);
      for (std::size_t t = 0; t < reference.size(); ++t)
        scratch[t] = std::abs(ps.features(reference[t], j) - med);
      const double mad = detail::column_median(scratch);
      r.median(j) = med;
      r.scale(j) = 1.4826 * mad + epsilon;
    }
    out[plate] = std::move(r);
  }
  return out;
}

inline ProfileSet apply_mad_robustize(const ProfileSet& ps,
                                      const std::map<std::string, PlateRobust>& fitted) {
  ProfileSet out = ps;
  for (const auto& [plate, rows] : rows_by_plate(ps)) {
    const auto it = fitted.find(plate);
    if (it == fitted.end())
      throw std::runtime_error("plate '" + plate + "' missing from fitted MAD robustize");
    for (int i : rows)
      out.features.row(i) = (ps.features.row(i).transpose() - it->second.median)
                                .cwiseQuotient(it->second.scale)
                                .transpose();
  }
  return out;
}

// x' = (x - median_ref) / (1.4826 * MAD_ref + epsilon), per plate/feature.
inline ProfileSet mad_robustize_per_plate(const ProfileSet& ps, MadMode mode,
                                          double epsilon = 1e-6) {
  return apply_mad_robustize(ps, fit_mad_robustize(ps, mode, epsilon));
}

// ZCA whitening per batch, fit on that batch's negative controls:
// W = (cov + eps I)^(-1/2), x' = W (x - control_mean).
inline std::map<std::string, BatchSphere> fit_sphere(const ProfileSet& ps,
                                                     double epsilon = 1e-6) {
  std::map<std::string, BatchSphere> out;
  for (const auto& [batch, rows] : rows_by_batch(ps)) {
    std::vector<int> controls;
    for (int i : rows)
      if (ps.meta[static_cast<std::size_t>(i)].is_negative_control) controls.push_back(i);
    BatchSphere s;
    if (controls.size() < 2) {
      log_warn("batch '" + batch + "' has <2 negative controls; sphering skipped for it");
      s.identity = true;
      out[batch] = std::move(s);
      continue;
    }
    s.mean = Eigen::VectorXd::Zero(ps.dim());
    for (int i : controls) s.mean += ps.features.row(i).transpose();
    s.mean /= static_cast<double>(controls.size());
    Eigen::MatrixXd centered(controls.size(), ps.dim());
    for (std::size_t t = 0; t < controls.size(); ++t)
      centered.row(static_cast<Eigen::Index>(t)) =
          ps.features.row(controls[t]) - s.mean.transpose();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(controls.size() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const Eigen::VectorXd inv_sqrt =
        (solver.eigenvalues().array().max(0.0) + epsilon).rsqrt().matrix();
    s.transform = solver.eigenvectors() * inv_sqrt.asDiagonal() *
                  solver.eigenvectors().transpose();
    out[batch] = std::move(s);
  }
  return out;
}

inline ProfileSet apply_sphere(const ProfileSet& ps,
                               const std::map<std::string, BatchSphere>& fitted) {
  ProfileSet out = ps;
  for (const auto& [batch, rows] : rows_by_batch(ps)) {
    const auto it = fitted.find(batch);
    if (it == fitted.end())
      throw std::runtime_error("batch '" + batch + "' missing from fitted sphering");
    if (it->second.identity) continue;
    for (int i : rows)
      out.features.row(i) =
          ((ps.features.row(i).transpose() - it->second.mean).transpose() *
           it->second.transform);
  }
  return out;
}

inline ProfileSet sphere_per_batch(const ProfileSet& ps, double epsilon = 1e-6) {
  return apply_sphere(ps, fit_sphere(ps, epsilon));
}

inline std::pair<ProfileSet, FittedPipeline> run_pipeline(const ProfileSet& ps,
                                                          const PipelineConfig& cfg) {
  FittedPipeline fitted;
  fitted.config = cfg;
  ProfileSet current = ps;
  if (cfg.center_scale == CenterScaleMode::per_plate) {
    fitted.center_scale = fit_center_scale(current, cfg.epsilon);
    current = apply_center_scale(current, fitted.center_scale);
  }
  if (cfg.pca_components) {
    fitted.pca = fit_pca(current, *cfg.pca_components);
    current = apply_pca(current, *fitted.pca);
  }
  if (cfg.mad != MadMode::none) {
    fitted.mad = fit_mad_robustize(current, cfg.mad, cfg.epsilon);
    current = apply_mad_robustize(current, fitted.mad);
  }
  if (cfg.sphere == SphereMode::per_batch_controls) {
    fitted.sphere = fit_sphere(current, cfg.epsilon);
    current = apply_sphere(current, fitted.sphere);
  }
  current.provenance = ps.provenance + " | " + cfg.render();
  return {std::move(current), std::move(fitted)};
}

// Re-applies a fitted pipeline; every plate/batch in the input must have
// been present at fit time.
inline ProfileSet apply_pipeline(const ProfileSet& ps, const FittedPipeline& fitted) {
  ProfileSet current = ps;
  if (fitted.config.center_scale == CenterScaleMode::per_plate)
    current = apply_center_scale(current, fitted.center_scale);
  if (fitted.pca) current = apply_pca(current, *fitted.pca);
  if (fitted.config.mad != MadMode::none)
    current = apply_mad_robustize(current, fitted.mad);
  if (fitted.config.sphere == SphereMode::per_batch_controls)
    current = apply_sphere(current, fitted.sphere);
  current.provenance = ps.provenance + " | " + fitted.config.render();
  return current;
}

namespace detail {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

}  // namespace detail

inline void save_fitted_pipeline(const FittedPipeline& fitted, const std::string& path) {
  nlohmann::ordered_json j;
  j["config"] = fitted.config.render();
  j["epsilon"] = fitted.config.epsilon;
  for (const auto& [plate, s] : fitted.center_scale) {
    j["center_scale"][plate]["mean"] = detail::vector_to_json(s.mean);
    j["center_scale"][plate]["divisor"] = detail::vector_to_json(s.divisor);
  }
  if (fitted.pca) {
    j["pca"]["mean"] = detail::vector_to_json(fitted.pca->mean);
    j["pca"]["loadings"] = detail::matrix_to_json(fitted.pca->loadings);
    j["pca"]["explained_variance"] = detail::vector_to_json(fitted.pca->explained_variance);
  }
  for (const auto& [plate, r] : fitted.mad) {
    j["mad"][plate]["median"] = detail::vector_to_json(r.median);
    j["mad"][plate]["scale"] = detail::vector_to_json(r.scale);
  }
  for (const auto& [batch, s] : fitted.sphere) {
    j["sphere"][batch]["identity"] = s.identity;
    if (!s.identity) {
      j["sphere"][batch]["mean"] = detail::vector_to_json(s.mean);
      j["sphere"][batch]["transform"] = detail::matrix_to_json(s.transform);
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << '\n';
}

inline FittedPipeline load_fitted_pipeline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  FittedPipeline fitted;
  fitted.config = PipelineConfig::parse(j.at("config").get<std::string>());
  fitted.config.epsilon = j.at("epsilon").get<double>();
  if (j.contains("center_scale"))
    for (const auto& [plate, s] : j["center_scale"].items())
      fitted.center_scale[plate] = {detail::vector_from_json(s["mean"]),
                                    detail::vector_from_json(s["divisor"])};
  if (j.contains("pca"))
    fitted.pca = PcaModel{detail::vector_from_json(j["pca"]["mean"]),
                          detail::matrix_from_json(j["pca"]["loadings"]),
                          detail::vector_from_json(j["pca"]["explained_variance"])};
  if (j.contains("mad"))
    for (const auto& [plate, r] : j["mad"].items())
      fitted.mad[plate] = {detail::vector_from_json(r["median"]),
                           detail::vector_from_json(r["scale"])};
  if (j.contains("sphere"))
    for (const auto& [batch, s] : j["sphere"].items()) {
      BatchSphere b;
      b.identity = s.at("identity").get<bool>();
      if (!b.identity) {
        b.mean = detail::vector_from_json(s["mean"]);
        b.transform = detail::matrix_from_json(s["transform"]);
      }
      fitted.sphere[batch] = std::move(b);
    }
  return fitted;
}

}  // namespace morphoeval
