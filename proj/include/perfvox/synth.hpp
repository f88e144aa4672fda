#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "perfvox/age_bins.hpp"
#include "perfvox/manifest.hpp"
#include "perfvox/preprocess.hpp"
#include "perfvox/slic.hpp"
#include "perfvox/volume.hpp"

namespace perfvox {

struct PhantomSpec {
  Dims dims{32, 32, 32};
  Spacing spacing;
  double base_mean = 50.0;
  double radial_decay = 0.0;  // intensity drop per mm from the volume center
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

void validate(const PhantomSpec& spec);

// max(0, base - decay * r_mm) with the center at ((n-1)/2) voxels per axis.
Volume3D phantom_mean(const PhantomSpec& spec);

// phantom_mean plus N(0, noise_sigma) drawn voxel by voxel in storage order.
Volume3D generate_phantom(const PhantomSpec& spec);

struct CohortSpec {
  int n_per_group = 10;  // per (sex, age bin) cell
  AgeBins age_bins = AgeBins::standard();
  std::vector<int> effect_clusters;
  double effect_size = 0.0;  // multiplicative female uplift inside the effect footprint
  double age_slope = 0.0;    // fractional decline per year above the youngest bin edge
  std::uint64_t seed = 0;
  // Optional sex totals spread over the bins (the first bins take the remainder);
  // they replace n_per_group for that sex.
  std::optional<int> n_female_total;
  std::optional<int> n_male_total;
  SlicParams reference_slic;
  double mask_fraction = kDefaultMaskFraction;
};

void validate(const CohortSpec& spec);

struct SyntheticCohort {
  CohortManifest manifest;
  std::vector<Volume3D> volumes;
  // SLIC of the z-scored noise-free phantom; defines where the effect lives.
  SupervoxelLabeling reference;
  SlicParams reference_params;
  BrainMask reference_mask;
  std::vector<std::uint8_t> footprint;
};

// Participants are ordered by bin, then F before M. Participant i draws its age
// jitter and noise from substream i, so generation parallelizes without changing
// the output.
SyntheticCohort generate_cohort(const CohortSpec& spec, const PhantomSpec& phantom, int jobs = 1);

// 32^3 volumes at 1 mm, base 50, radial decay 1 per mm, noise 0.05 * base.
PhantomSpec canonical_phantom(std::uint64_t seed = 0);
// 97 F / 89 M over the standard bins, effect 0.10 in 15 of 100 clusters spread
// evenly over the cluster order.
CohortSpec canonical_cohort(std::uint64_t seed = 0);
std::vector<int> spread_clusters(int count, int k);

// Writes <id>.nii.gz per participant, manifest.csv, the reference mask
// (mask.nii.gz) and reference labeling (reference_labels.nii.gz / .json).
void write_cohort(const SyntheticCohort& cohort, const std::filesystem::path& dir, int jobs = 1);

}  // namespace perfvox
