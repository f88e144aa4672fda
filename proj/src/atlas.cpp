#include "perfvox/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "perfvox/features.hpp"

namespace perfvox {

AtlasVolume::AtlasVolume(Volume3D labels, std::map<int, std::string> lookup)
    : labels_(std::move(labels)), lookup_(std::move(lookup)) {
  for (double v : labels_.data()) {
    if (v < 0.0 || v != std::floor(v) || v > 2147483647.0) {
      throw Error(ErrorCode::Parse, "atlas ids must be non-negative integers");
    }
    int id = static_cast<int>(v);
    if (id != 0 && !lookup_.contains(id)) {
      throw Error(ErrorCode::Parse, "atlas id " + std::to_string(id) + " has no entry in the lookup table");
    }
  }
}

std::string AtlasVolume::name_of(int roi_id) const {
  if (roi_id == 0) return "unassigned";
  auto it = lookup_.find(roi_id);
  return it == lookup_.end() ? std::to_string(roi_id) : it->second;
}

std::map<int, std::string> load_roi_lookup(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"roi_id", "name"}) {
    throw Error(ErrorCode::Parse, path.string() + ": header must be 'roi_id,name'");
  }
  std::map<int, std::string> out;
  for (const auto& row : table.rows) {
    auto id = static_cast<int>(parse_int(row[0], "roi_id"));
    if (!out.emplace(id, row[1]).second) {
      throw Error(ErrorCode::Parse, path.string() + ": duplicate roi_id " + row[0]);
    }
  }
  return out;
}

std::string RoiAssignmentEntry::flag() const {
  if (cluster_voxels == 0) return "empty";
  if (roi_id == 0) return "unassigned";
  if (low_confidence) return "low_confidence";
  return "ok";
}

std::string RoiAssignment::to_csv() const {
  std::ostringstream out;
  out << "cluster_id,roi_id,roi_name,vote_fraction,flag\n";
  for (const auto& e : entries) {
    out << e.cluster_id << ',' << e.roi_id << ',' << e.roi_name << ',' << format_double(e.vote_fraction) << ','
        << e.flag() << '\n';
  }
  return out.str();
}

RoiAssignment majority_label(const SupervoxelLabeling& labeling, const AtlasVolume& atlas) {
  require_same_dims(labeling.dims, atlas.labels().dims(),
                    "majority_label (resample the atlas onto the labeling grid first)");
  const auto k = static_cast<std::size_t>(labeling.k());
  std::vector<std::map<int, std::int64_t>> votes(k);
  RoiAssignment out;
  out.entries.resize(k);
  for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
    std::int32_t lab = labeling.labels[i];
    if (lab < 0) continue;
    auto& entry = out.entries[static_cast<std::size_t>(lab)];
    ++entry.cluster_voxels;
    int roi = atlas.roi_at(i);
    if (roi == 0) continue;
    ++entry.labeled_voxels;
    ++votes[static_cast<std::size_t>(lab)][roi];
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto& e = out.entries[c];
    e.cluster_id = static_cast<int>(c);
    std::int64_t best = 0;
    for (const auto& [roi, count] : votes[c]) {  // ascending ids: strict > keeps the lowest on ties
      if (count > best) {
        best = count;
        e.roi_id = roi;
      }
    }
    e.roi_name = atlas.name_of(e.roi_id);
    if (e.labeled_voxels > 0) e.vote_fraction = static_cast<double>(best) / static_cast<double>(e.labeled_voxels);
    e.low_confidence = e.cluster_voxels > 0 && static_cast<double>(e.labeled_voxels) <
                                                   kLowConfidenceLabeledFraction * static_cast<double>(e.cluster_voxels);
  }
  return out;
}

std::vector<RoiComparison> roi_sex_compare(const FeatureMatrix& features, const RoiAssignment& assignment,
                                           std::span<const int> significant_clusters, TTestVariant variant) {
  if (significant_clusters.empty()) throw Error(ErrorCode::EmptySelection, "no significant clusters to compare");
  std::map<int, std::vector<int>> by_roi;
  for (int c : significant_clusters) {
    if (c < 0 || c >= features.k || static_cast<std::size_t>(c) >= assignment.entries.size()) {
      throw Error(ErrorCode::Domain, "cluster id " + std::to_string(c) + " out of range");
    }
    int roi = assignment.entries[static_cast<std::size_t>(c)].roi_id;
    if (roi != 0) by_roi[roi].push_back(c);
  }
  if (by_roi.empty()) throw Error(ErrorCode::EmptySelection, "no selected cluster maps to an atlas ROI");

  std::vector<RoiComparison> out;
  for (auto& [roi, clusters] : by_roi) {
    std::sort(clusters.begin(), clusters.end());
    std::vector<double> female, male;
    for (std::size_t r = 0; r < features.rows.size(); ++r) {
      double sum = 0.0;
      for (int c : clusters) sum += features.rows[r].cluster_means[static_cast<std::size_t>(c)];
      const double v = sum / static_cast<double>(clusters.size());
      (features.meta[r].sex == Sex::F ? female : male).push_back(v);
    }
    RoiComparison cmp;
    cmp.roi_id = roi;
    cmp.roi_name = assignment.entries[static_cast<std::size_t>(clusters.front())].roi_name;
    cmp.clusters = clusters;
    cmp.test = ttest_two_sample(female, male, variant);
    cmp.test.id = std::to_string(roi);
    out.push_back(std::move(cmp));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RoiComparison& a, const RoiComparison& b) { return a.test.p_two_sided < b.test.p_two_sided; });
  return out;
}

std::string roi_comparisons_to_csv(const std::vector<RoiComparison>& rows) {
  std::ostringstream out;
  out << "roi_id,roi_name,n_clusters,t,df,p,mean_F,mean_M,n_F,n_M\n";
  for (const auto& r : rows) {
    out << r.roi_id << ',' << r.roi_name << ',' << r.clusters.size() << ',' << format_double(r.test.t) << ','
        << format_double(r.test.df) << ',' << format_double(r.test.p_two_sided) << ','
        << format_double(r.test.mean_a) << ',' << format_double(r.test.mean_b) << ',' << r.test.n_a << ','
        << r.test.n_b << '\n';
  }
  return out.str();
}

}  // namespace perfvox
