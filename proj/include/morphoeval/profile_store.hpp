#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "morphoeval/csv.hpp"
#include "morphoeval/log.hpp"
#include "morphoeval/types.hpp"

namespace morphoeval {

// On-disk layout: a manifest of key=value lines naming a metadata CSV and a
// feature CSV that share well_id keys.
//
//   meta_table=meta.csv
//   feature_table=features.csv
//   dataset_name=my-dataset
//
// Paths are resolved relative to the manifest's directory. The metadata
// header must carry exactly the WellMeta field names; the feature table is
// well_id plus one column per feature.

struct LoadOptions {
  // Fraction of rows allowed to miss their join partner before load fails.
  double mismatch_tolerance = 0.0;
};

namespace detail {

inline const std::vector<std::string>& well_meta_fields() {
  static const std::vector<std::string> fields = {
      "well_id",         "source",           "batch",
      "plate",           "well_position",    "perturbation_id",
      "perturbation_type", "is_negative_control", "cell_count"};
  return fields;
}

inline bool parse_bool(const std::string& s, const std::string& context) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::runtime_error("invalid boolean '" + s + "' in " + context);
}

inline std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace detail

inline ProfileSet load_profile_set(const std::string& manifest_path,
                                   const LoadOptions& options = {}) {
  namespace fs = std::filesystem;
  const auto kv = detail::read_manifest(manifest_path);
  const auto dir = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& rel) { return (dir / rel).string(); };

  auto require = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error(std::string("manifest missing key '") + key + "'");
    return it->second;
  };

  const CsvTable meta_table = read_csv(resolve(require("meta_table")));
  const CsvTable feat_table = read_csv(resolve(require("feature_table")));

  // Metadata header must contain exactly the WellMeta field names.
  {
    std::set<std::string> got(meta_table.header.begin(), meta_table.header.end());
    std::set<std::string> want(detail::well_meta_fields().begin(),
                               detail::well_meta_fields().end());
    if (got != want) {
      std::string msg = "metadata header must contain exactly the WellMeta fields; got:";
      for (const auto& h : meta_table.header) msg += " " + h;
      throw std::runtime_error(msg);
    }
  }

  std::map<std::string, int> col;
  for (const auto& name : detail::well_meta_fields()) col[name] = meta_table.column(name);

  std::map<std::string, WellMeta> meta_by_id;
  std::vector<std::string> meta_order;
  for (const auto& row : meta_table.rows) {
    WellMeta m;
    m.well_id = row[static_cast<std::size_t>(col["well_id"])];
    m.source = row[static_cast<std::size_t>(col["source"])];
    m.batch = row[static_cast<std::size_t>(col["batch"])];
    m.plate = row[static_cast<std::size_t>(col["plate"])];
    m.well_position = row[static_cast<std::size_t>(col["well_position"])];
    m.perturbation_id = row[static_cast<std::size_t>(col["perturbation_id"])];
    m.perturbation_type = parse_perturbation_type(
        row[static_cast<std::size_t>(col["perturbation_type"])]);
    m.is_negative_control = detail::parse_bool(
        row[static_cast<std::size_t>(col["is_negative_control"])], "well " + m.well_id);
    const std::string& count = row[static_cast<std::size_t>(col["cell_count"])];
    if (!count.empty()) {
      const auto v = parse_int(count, "cell_count of well " + m.well_id);
      if (v < 0) throw std::runtime_error("negative cell_count for well " + m.well_id);
      m.cell_count = v;
    }
    if (m.is_negative_control && m.perturbation_type != PerturbationType::control)
      throw std::runtime_error("well " + m.well_id +
                               ": is_negative_control requires perturbation_type=control");
    if (!meta_by_id.emplace(m.well_id, m).second)
      throw std::runtime_error("duplicate well_id in metadata: " + m.well_id);
    meta_order.push_back(m.well_id);
  }

  if (feat_table.column("well_id") != 0)
    throw std::runtime_error("feature table must start with a well_id column");
  const std::size_t d = feat_table.header.size() - 1;

  std::map<std::string, std::vector<double>> feats_by_id;
  for (const auto& row : feat_table.rows) {
    const std::string& id = row[0];
    std::vector<double> values(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = parse_double(row[j + 1], "features of well " + id);
      if (!std::isfinite(v))
        throw std::runtime_error("non-finite feature value for well " + id);
      values[j] = v;
    }
    if (!feats_by_id.emplace(id, std::move(values)).second)
      throw std::runtime_error("duplicate well_id in feature table: " + id);
  }

  // Join; unmatched rows beyond the tolerance are an error.
  std::size_t unmatched_features = 0;
  for (const auto& [id, values] : feats_by_id)
    if (!meta_by_id.count(id)) ++unmatched_features;
  std::size_t unmatched_meta = 0;
  std::vector<std::string> joined_ids;
  for (const auto& id : meta_order) {
    if (feats_by_id.count(id)) joined_ids.push_back(id);
    else ++unmatched_meta;
  }

  const auto frac = [](std::size_t k, std::size_t n) {
    return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
  };
  if (frac(unmatched_features, feats_by_id.size()) > options.mismatch_tolerance)
    throw std::runtime_error("unmatched feature rows: " + std::to_string(unmatched_features) +
                             " well_ids have features but no metadata");
  if (frac(unmatched_meta, meta_order.size()) > options.mismatch_tolerance)
    throw std::runtime_error("unmatched metadata rows: " + std::to_string(unmatched_meta) +
                             " well_ids have metadata but no features");
  if (unmatched_features + unmatched_meta > 0)
    log_warn("dropped " + std::to_string(unmatched_features + unmatched_meta) +
             " unmatched rows while joining " + manifest_path);
  if (joined_ids.empty()) throw std::runtime_error("no joined rows in " + manifest_path);

  ProfileSet ps;
  ps.dataset_name = kv.count("dataset_name") ? kv.at("dataset_name")
                                             : fs::path(manifest_path).stem().string();
  ps.provenance = kv.count("provenance") ? kv.at("provenance") : ps.dataset_name;
  ps.feature_names.assign(feat_table.header.begin() + 1, feat_table.header.end());
  ps.features.resize(static_cast<Eigen::Index>(joined_ids.size()),
                     static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < joined_ids.size(); ++i) {
    ps.meta.push_back(meta_by_id.at(joined_ids[i]));
    const auto& values = feats_by_id.at(joined_ids[i]);
    for (std::size_t j = 0; j < d; ++j)
      ps.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[j];
  }

  // Batch ids must be unique across sources; prefix with the source on collision.
  std::map<std::string, std::set<std::string>> batch_sources;
  for (const auto& m : ps.meta) batch_sources[m.batch].insert(m.source);
  bool collision = false;
  for (const auto& [batch, sources] : batch_sources)
    if (sources.size() > 1) collision = true;
  if (collision) {
    log_warn("batch ids shared across sources in " + ps.dataset_name +
             "; prefixing batches with their source");
    for (auto& m : ps.meta) m.batch = m.source + ":" + m.batch;
  }
  return ps;
}

inline void save_profile_set(const ProfileSet& ps, const std::string& dir,
                             const std::string& manifest_name = "manifest.txt") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto base = fs::path(dir);

  {
    std::ofstream out(base / "meta.csv");
    write_csv_row(out, detail::well_meta_fields());
    for (const auto& m : ps.meta) {
      write_csv_row(out, {m.well_id, m.source, m.batch, m.plate, m.well_position,
                          m.perturbation_id, to_string(m.perturbation_type),
                          m.is_negative_control ? "true" : "false",
                          m.cell_count ? std::to_string(*m.cell_count) : ""});
    }
  }
  {
    std::ofstream out(base / "features.csv");
    std::vector<std::string> header = {"well_id"};
    for (Eigen::Index j = 0; j < ps.features.cols(); ++j)
      header.push_back(ps.feature_names.empty() ? "f" + std::to_string(j)
                                                : ps.feature_names[static_cast<std::size_t>(j)]);
    write_csv_row(out, header);
    for (Eigen::Index i = 0; i < ps.features.rows(); ++i) {
      std::vector<std::string> row = {ps.meta[static_cast<std::size_t>(i)].well_id};
      for (Eigen::Index j = 0; j < ps.features.cols(); ++j)
        row.push_back(format_double(ps.features(i, j)));
      write_csv_row(out, row);
    }
  }
  {
    std::ofstream out(base / manifest_name);
    out << "meta_table=meta.csv\n";
    out << "feature_table=features.csv\n";
    out << "dataset_name=" << ps.dataset_name << "\n";
    out << "provenance=" << ps.provenance << "\n";
  }
}

enum class LabelKind { class_sets, pair_relations };

inline LabelKind parse_label_kind(const std::string& s) {
  if (s == "class_sets") return LabelKind::class_sets;
  if (s == "pair_relations") return LabelKind::pair_relations;
  throw std::runtime_error("unknown label kind: '" + s + "'");
}

// Ground-truth biological relations: either named classes of perturbations
// (MoA-style) or unordered related pairs (gene-database-style).
struct LabelStore {
  LabelKind kind = LabelKind::class_sets;
  std::string database_name;
  std::map<std::string, std::set<std::string>> class_sets;
  std::set<std::pair<std::string, std::string>> pair_relations;  // normalized first<second
  std::set<std::string> skipped_classes;  // <2 members after dataset restriction

  std::set<std::string> universe() const {
    std::set<std::string> out;
    if (kind == LabelKind::class_sets) {
      for (const auto& [cls, members] : class_sets) out.insert(members.begin(), members.end());
    } else {
      for (const auto& [a, b] : pair_relations) {
        out.insert(a);
        out.insert(b);
      }
    }
    return out;
  }

  // Perturbations biologically related to the query: union of the query's
  // classes minus the query itself, or all pair partners. Classes flagged
  // as too small are skipped here, at query time.
  std::set<std::string> related_set(const std::string& query) const {
    std::set<std::string> out;
    bool known = false;
    if (kind == LabelKind::class_sets) {
      for (const auto& [cls, members] : class_sets) {
        if (!members.count(query)) continue;
        known = true;
        if (skipped_classes.count(cls)) continue;
        out.insert(members.begin(), members.end());
      }
      out.erase(query);
    } else {
      for (const auto& [a, b] : pair_relations) {
        if (a == query) {
          out.insert(b);
          known = true;
        } else if (b == query) {
          out.insert(a);
          known = true;
        }
      }
    }
    if (!known) log_warn("query '" + query + "' unknown to label database " + database_name);
    return out;
  }

  // Restrict to perturbations present in a dataset; classes left with fewer
  // than 2 members are flagged and skipped at query time.
  LabelStore restricted_to(const std::set<std::string>& present) const {
    LabelStore out;
    out.kind = kind;
    out.database_name = database_name;
    if (kind == LabelKind::class_sets) {
      for (const auto& [cls, members] : class_sets) {
        std::set<std::string> kept;
        for (const auto& p : members)
          if (present.count(p)) kept.insert(p);
        if (kept.empty()) continue;
        if (kept.size() < 2) out.skipped_classes.insert(cls);
        out.class_sets[cls] = std::move(kept);
      }
    } else {
      for (const auto& [a, b] : pair_relations)
        if (present.count(a) && present.count(b)) out.pair_relations.insert({a, b});
    }
    return out;
  }
};

inline LabelStore load_label_store(const std::string& path, LabelKind kind,
                                   const std::set<std::string>* present = nullptr) {
  const CsvTable table = read_csv(path);
  if (table.header.size() != 2)
    throw std::runtime_error(path + ": label file must have exactly two columns");
  if (table.rows.empty()) throw std::runtime_error(path + ": label file has no rows");

  LabelStore store;
  store.kind = kind;
  store.database_name = std::filesystem::path(path).stem().string();
  for (const auto& row : table.rows) {
    if (kind == LabelKind::class_sets) {
      store.class_sets[row[0]].insert(row[1]);
    } else {
      if (row[0] == row[1]) {
        log_warn(path + ": dropping self-pair " + row[0]);
        continue;
      }
      auto pair = std::minmax(row[0], row[1]);
      store.pair_relations.insert({pair.first, pair.second});
    }
  }
  if (present) return store.restricted_to(*present);
  // Flag globally tiny classes even without a dataset restriction.
  for (const auto& [cls, members] : store.class_sets)
    if (members.size() < 2) store.skipped_classes.insert(cls);
  return store;
}

}  // namespace morphoeval
