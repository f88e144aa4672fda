#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "perfvox/manifest.hpp"
#include "perfvox/slic.hpp"
#include "perfvox/volume.hpp"

namespace perfvox {

inline const std::vector<double> kDefaultMarginsMm{0.2, 0.5, 1.0, 5.0};

// K x M peri-regional means, cluster-major.
struct ShellMatrix {
  std::size_t k = 0;
  std::size_t margins = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> empty;  // 1 where the shell had no voxels (value 0)

  double at(std::size_t cluster, std::size_t margin) const { return values[cluster * margins + margin]; }
};

struct FeatureVector {
  std::string participant_id;
  std::vector<double> cluster_means;
  std::vector<std::int64_t> cluster_sizes;  // empty when loaded from CSV
  ShellMatrix shells;
};

// Mean intensity per label; 0 for empty clusters.
std::vector<double> supervoxel_means(const Volume3D& volume, const SupervoxelLabeling& labeling);

// For each cluster, the bounding box expanded by ceil(r / spacing) voxels per axis,
// intersected with the mask, minus the cluster's own voxels.
ShellMatrix shell_means(const Volume3D& volume, const SupervoxelLabeling& labeling, const BrainMask& mask,
                        std::span<const double> margins_mm);

// Voxels with a label >= 0.
BrainMask mask_from_labeling(const SupervoxelLabeling& labeling);

FeatureVector extract_features(const std::string& id, const Volume3D& volume, const SupervoxelLabeling& labeling,
                               std::span<const double> margins_mm);

struct FeatureMatrix {
  int k = 0;
  std::vector<double> margins_mm;
  std::vector<ParticipantMeta> meta;
  std::vector<FeatureVector> rows;

  std::size_t size() const { return rows.size(); }
  std::vector<std::string> column_names() const;
  std::vector<double> cluster_column(int cluster) const;
  // Participants x K cluster means, row-major.
  std::vector<double> cluster_matrix() const;
  std::vector<Sex> sexes() const;

  std::string to_csv() const;
  static FeatureMatrix from_csv(const std::filesystem::path& path);
};

std::string margin_label(double margin_mm);

// Rows follow manifest order; labelings and volumes are indexed like the manifest.
FeatureMatrix build_feature_matrix(const CohortManifest& manifest, std::span<const SupervoxelLabeling> labelings,
                                   std::span<const Volume3D> volumes, std::span<const double> margins_mm);

}  // namespace perfvox
