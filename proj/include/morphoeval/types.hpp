#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphoeval {

enum class PerturbationType { compound, crispr, control };

inline std::string to_string(PerturbationType t) {
  switch (t) {
    case PerturbationType::compound: return "compound";
    case PerturbationType::crispr: return "crispr";
    default: return "control";
  }
}

inline PerturbationType parse_perturbation_type(const std::string& s) {
  if (s == "compound") return PerturbationType::compound;
  if (s == "crispr") return PerturbationType::crispr;
  if (s == "control") return PerturbationType::control;
  throw std::runtime_error("unknown perturbation_type: '" + s + "'");
}

// One well of one plate: the unit the metrics operate on. The
// source > batch > plate > well_position hierarchy drives every
// stringency level.
struct WellMeta {
  std::string well_id;
  std::string source;
  std::string batch;
  std::string plate;
  std::string well_position;
  std::string perturbation_id;
  PerturbationType perturbation_type = PerturbationType::compound;
  bool is_negative_control = false;
  std::optional<std::int64_t> cell_count;  // only needed for cell-count QC
};

// Feature matrix plus aligned per-well metadata. Immutable by convention
// once loaded; every pipeline stage produces a new ProfileSet.
struct ProfileSet {
  Eigen::MatrixXd features;  // n_wells x d
  std::vector<WellMeta> meta;
  std::vector<std::string> feature_names;  // empty = unnamed columns
  std::string dataset_name;
  std::string provenance;

  std::int64_t n_wells() const { return features.rows(); }
  std::int64_t dim() const { return features.cols(); }

  ProfileSet subset(const std::vector<int>& row_indices) const {
    ProfileSet out;
    out.features.resize(static_cast<Eigen::Index>(row_indices.size()), features.cols());
    out.meta.reserve(row_indices.size());
    for (std::size_t i = 0; i < row_indices.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = features.row(row_indices[i]);
      out.meta.push_back(meta[static_cast<std::size_t>(row_indices[i])]);
    }
    out.feature_names = feature_names;
    out.dataset_name = dataset_name;
    out.provenance = provenance;
    return out;
  }
};

inline std::map<std::string, std::vector<int>> group_rows(
    const ProfileSet& ps, const std::string& (*key)(const WellMeta&)) {
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(ps.meta.size()); ++i)
    groups[key(ps.meta[static_cast<std::size_t>(i)])].push_back(i);
  return groups;
}

inline const std::string& batch_key(const WellMeta& m) { return m.batch; }
inline const std::string& plate_key(const WellMeta& m) { return m.plate; }
inline const std::string& source_key(const WellMeta& m) { return m.source; }

inline std::map<std::string, std::vector<int>> rows_by_batch(const ProfileSet& ps) {
  return group_rows(ps, batch_key);
}
inline std::map<std::string, std::vector<int>> rows_by_plate(const ProfileSet& ps) {
  return group_rows(ps, plate_key);
}
inline std::map<std::string, std::vector<int>> rows_by_source(const ProfileSet& ps) {
  return group_rows(ps, source_key);
}

inline std::set<std::string> unique_sources(const ProfileSet& ps) {
  std::set<std::string> out;
  for (const auto& m : ps.meta) out.insert(m.source);
  return out;
}

inline std::set<std::string> unique_batches(const ProfileSet& ps) {
  std::set<std::string> out;
  for (const auto& m : ps.meta) out.insert(m.batch);
  return out;
}

// Perturbation ids of non-control wells, sorted.
inline std::set<std::string> treated_perturbations(const ProfileSet& ps) {
  std::set<std::string> out;
  for (const auto& m : ps.meta)
    if (!m.is_negative_control) out.insert(m.perturbation_id);
  return out;
}

enum class StringencyLevel { NR, NSB, NSS, NSL };

inline std::string to_string(StringencyLevel level) {
  switch (level) {
    case StringencyLevel::NR: return "NR";
    case StringencyLevel::NSB: return "NSB";
    case StringencyLevel::NSS: return "NSS";
    default: return "NSL";
  }
}

inline StringencyLevel parse_stringency(const std::string& s) {
  if (s == "NR") return StringencyLevel::NR;
  if (s == "NSB") return StringencyLevel::NSB;
  if (s == "NSS") return StringencyLevel::NSS;
  if (s == "NSL") return StringencyLevel::NSL;
  throw std::runtime_error("unknown stringency level: '" + s + "'");
}

}  // namespace morphoeval
