#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "perfvox/volume.hpp"

namespace perfvox {

enum class Connectivity { Six = 6, TwentySix = 26 };

Connectivity parse_connectivity(int value);

struct SlicParams {
  int k = 100;
  double compactness = 10.0;
  double smoothing_sigma_mm = 1.0;
  int max_iters = 10;
  double tol = 1e-3;  // mean centroid movement, voxels
  Connectivity connectivity = Connectivity::Six;
  bool perturb_seeds = true;
  bool enforce_connectivity = true;
};

// Throws ConfigError naming the offending field.
void validate(const SlicParams& params);

struct Centroid {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

// Identity of a seed: its grid cell (z-major linear index) and, for cells that
// received extra seeds, the order in which they were added.
struct SeedKey {
  std::int64_t grid_index = 0;
  int split = 0;
  auto operator<=>(const SeedKey&) const = default;
};

struct SeedGrid {
  std::vector<Centroid> seeds;
  std::vector<SeedKey> keys;
  double step = 0.0;
};

struct SupervoxelLabeling {
  Dims dims;
  std::vector<std::int32_t> labels;  // -1 outside the mask
  std::vector<Centroid> centroids;
  std::vector<std::int64_t> sizes;
  std::vector<SeedKey> seed_keys;
  double grid_step = 0.0;
  std::vector<double> cost_history;  // total assignment cost after each assignment step
  int iterations = 0;

  int k() const { return static_cast<int>(sizes.size()); }
};

inline constexpr std::int32_t kBackground = -1;

// Separable Gaussian blur with per-axis sigma = sigma_mm / spacing, truncated at
// 3 sigma. Only masked voxels contribute and the kernel is renormalized over them,
// so constants are preserved at mask and volume borders. Voxels outside the mask
// keep their input value.
Volume3D gaussian_smooth(const Volume3D& volume, double sigma_mm, const BrainMask& mask);

// Regular grid of step S = cbrt(masked / k); one seed per cell with masked voxels,
// snapped to the masked voxel nearest the cell center. Surplus seeds are dropped
// from the cells with the fewest masked voxels (ties: lowest grid index first);
// missing seeds are added to the cells with the most masked voxels per seed.
SeedGrid init_centroids(const Volume3D& volume, const BrainMask& mask, int k);

SupervoxelLabeling run_slic(const Volume3D& volume, const BrainMask& mask, const SlicParams& params);

// Keeps the largest component of each label and merges every other fragment into
// the most frequent adjacent foreign label (ties: lowest label). A fragment that is
// a whole mask island with no foreign neighbors takes the lowest empty label, if
// any. Updates labels and sizes; centroids are left untouched.
SupervoxelLabeling enforce_connectivity(const SupervoxelLabeling& labeling, const BrainMask& mask,
                                        Connectivity connectivity);

// perm[old_label] = new_label, ordered by seed key.
std::vector<std::int32_t> cluster_ordering(const SupervoxelLabeling& labeling);
SupervoxelLabeling apply_ordering(const SupervoxelLabeling& labeling, const std::vector<std::int32_t>& perm);

// Recomputes sizes and centroid means (position and intensity) from labels.
// Empty clusters keep their position and get intensity 0.
void recompute_centroids(SupervoxelLabeling& labeling, const Volume3D& volume);

// Number of connected components of each label under the given connectivity.
std::vector<int> count_components(const SupervoxelLabeling& labeling, Connectivity connectivity);

}  // namespace perfvox
