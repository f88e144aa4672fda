#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "perfvox/slic.hpp"
#include "perfvox/stats.hpp"
#include "perfvox/volume.hpp"

namespace perfvox {

struct FeatureMatrix;

// Integer ROI ids >= 0 (0 = unlabeled) with names for every nonzero id present.
class AtlasVolume {
 public:
  AtlasVolume(Volume3D labels, std::map<int, std::string> lookup);

  const Volume3D& labels() const { return labels_; }
  const std::map<int, std::string>& lookup() const { return lookup_; }
  int roi_at(std::size_t i) const { return static_cast<int>(labels_[i]); }
  std::string name_of(int roi_id) const;

 private:
  Volume3D labels_;
  std::map<int, std::string> lookup_;
};

// CSV `roi_id,name`.
std::map<int, std::string> load_roi_lookup(const std::filesystem::path& path);

inline constexpr double kLowConfidenceLabeledFraction = 0.10;

struct RoiAssignmentEntry {
  int cluster_id = 0;
  int roi_id = 0;  // 0 = unassigned
  std::string roi_name;
  double vote_fraction = 0.0;  // plurality count / labeled voxels of the cluster
  std::int64_t cluster_voxels = 0;
  std::int64_t labeled_voxels = 0;
  bool low_confidence = false;  // fewer than 10% of the cluster's voxels carry an atlas id

  std::string flag() const;
};

struct RoiAssignment {
  std::vector<RoiAssignmentEntry> entries;  // indexed by cluster id

  std::string to_csv() const;
};

// Plurality of nonzero atlas ids per cluster; ties go to the lowest id.
RoiAssignment majority_label(const SupervoxelLabeling& labeling, const AtlasVolume& atlas);

struct RoiComparison {
  int roi_id = 0;
  std::string roi_name;
  std::vector<int> clusters;
  TTestResult test;  // a = female, b = male
};

// Groups the selected clusters by assigned ROI, averages each participant's member
// cluster means, and compares sexes per ROI. Sorted by ascending p.
std::vector<RoiComparison> roi_sex_compare(const FeatureMatrix& features, const RoiAssignment& assignment,
                                           std::span<const int> significant_clusters,
                                           TTestVariant variant = TTestVariant::Pooled);

std::string roi_comparisons_to_csv(const std::vector<RoiComparison>& rows);

}  // namespace perfvox
