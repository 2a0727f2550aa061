#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "morphoeval/csv.hpp"
#include "morphoeval/log.hpp"
#include "morphoeval/rng.hpp"
#include "morphoeval/stats.hpp"
#include "morphoeval/types.hpp"

namespace morphoeval {

struct QcConfig {
  double batch_deviation_threshold = 0.2;  // cosine-distance units
  double cell_count_percentile = 5.0;
  std::int64_t count_sample_size = 5000;
  // Alternative reading of the threshold: drop batches whose mean distance
  // exceeds the threshold outright instead of deviating from the baseline.
  bool absolute_threshold = false;
};

struct QcRemoval {
  std::string kind;  // "batch" or "well"
  std::string id;
  std::string reason;
  double statistic = 0.0;
};

// Filters return the fitted decision rule alongside the filtered set;
// re-applying the same rule to its own output is the identity.
struct BatchFilterResult {
  ProfileSet filtered;
  std::vector<std::string> removed_batches;
  std::vector<QcRemoval> report;
  std::map<std::string, double> batch_means;  // batches with assessable controls
  double baseline = 0.0;
};

struct CellCountFilterResult {
  ProfileSet filtered;
  std::vector<std::string> removed_wells;
  std::vector<QcRemoval> report;
  double threshold = 0.0;
};

namespace detail {

inline double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;  // zero vectors treated as fully dissimilar
  return 1.0 - a.dot(b) / (na * nb);
}

}  // namespace detail

// Mean-over-wells of the cosine distance to the nearest same-batch negative
// control, per batch. Batches deviating from the dataset baseline (median of
// per-batch means) by more than the threshold are removed. Batches without
// assessable controls are retained with a warning.
inline BatchFilterResult batch_control_filter(const ProfileSet& ps, const QcConfig& cfg) {
  if (cfg.batch_deviation_threshold <= 0.0)
    throw std::invalid_argument("batch_deviation_threshold must be positive");

  BatchFilterResult result;
  const auto batches = rows_by_batch(ps);
  for (const auto& [batch, rows] : batches) {
    std::vector<int> controls;
    for (int i : rows)
      if (ps.meta[static_cast<std::size_t>(i)].is_negative_control) controls.push_back(i);
    if (controls.empty()) {
      log_warn("batch '" + batch + "' has no negative controls; retained unassessed");
      continue;
    }
    double sum = 0.0;
    std::int64_t counted = 0;
    for (int i : rows) {
      double best = std::numeric_limits<double>::infinity();
      for (int c : controls) {
        if (c == i) continue;  // a control's nearest control is another control
        best = std::min(best, detail::cosine_distance(ps.features.row(i).transpose(),
                                                      ps.features.row(c).transpose()));
      }
      if (std::isfinite(best)) {
        sum += best;
        ++counted;
      }
    }
    if (counted == 0) {
      log_warn("batch '" + batch + "' has no wells assessable against controls; retained");
      continue;
    }
    result.batch_means[batch] = sum / static_cast<double>(counted);
  }

  std::set<std::string> removed;
  if (!result.batch_means.empty()) {
    std::vector<double> means;
    for (const auto& [batch, m] : result.batch_means) means.push_back(m);
    result.baseline = median(means);
    for (const auto& [batch, m] : result.batch_means) {
      const double stat = cfg.absolute_threshold ? m : std::abs(m - result.baseline);
      if (stat > cfg.batch_deviation_threshold) {
        removed.insert(batch);
        result.removed_batches.push_back(batch);
        result.report.push_back({"batch", batch,
                                 cfg.absolute_threshold ? "mean control distance above threshold"
                                                        : "control distance deviates from baseline",
                                 stat});
      }
    }
  }

  std::vector<int> kept;
  for (int i = 0; i < static_cast<int>(ps.meta.size()); ++i)
    if (!removed.count(ps.meta[static_cast<std::size_t>(i)].batch)) kept.push_back(i);
  result.filtered = ps.subset(kept);
  return result;
}

// Threshold = seeded-sample percentile of cell counts (sorted-order linear
// interpolation); wells strictly below the threshold are removed.
inline CellCountFilterResult cell_count_filter(const ProfileSet& ps, const QcConfig& cfg,
                                               std::uint64_t seed) {
  if (cfg.cell_count_percentile <= 0.0 || cfg.cell_count_percentile >= 100.0)
    throw std::invalid_argument("cell_count_percentile must be in (0,100)");
  for (const auto& m : ps.meta)
    if (!m.cell_count)
      throw std::runtime_error("well " + m.well_id +
                               " lacks cell_count; disable the cell-count filter "
                               "or provide counts for all wells");

  const auto n = static_cast<std::size_t>(ps.n_wells());
  std::vector<std::size_t> sampled;
  if (cfg.count_sample_size > 0 && static_cast<std::size_t>(cfg.count_sample_size) < n) {
    Rng rng = derive_rng(seed, "qc.cell_count_sample");
    sampled = rng.sample_indices(n, static_cast<std::size_t>(cfg.count_sample_size));
  } else {
    sampled.resize(n);
    for (std::size_t i = 0; i < n; ++i) sampled[i] = i;
  }

  std::vector<double> counts;
  counts.reserve(sampled.size());
  for (std::size_t i : sampled)
    counts.push_back(static_cast<double>(*ps.meta[i].cell_count));

  CellCountFilterResult result;
  result.threshold = percentile_linear(std::move(counts), cfg.cell_count_percentile);

  std::vector<int> kept;
  for (int i = 0; i < static_cast<int>(n); ++i) {
    const auto& m = ps.meta[static_cast<std::size_t>(i)];
    if (static_cast<double>(*m.cell_count) < result.threshold) {
      result.removed_wells.push_back(m.well_id);
      result.report.push_back({"well", m.well_id, "cell count below percentile threshold",
                               static_cast<double>(*m.cell_count)});
    } else {
      kept.push_back(i);
    }
  }
  result.filtered = ps.subset(kept);
  return result;
}

inline void write_qc_report(const std::string& path, const std::vector<QcRemoval>& removals) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv_row(out, {"kind", "id", "reason", "statistic"});
  for (const auto& r : removals)
    write_csv_row(out, {r.kind, r.id, r.reason, format_double(r.statistic)});
}

}  // namespace morphoeval
