#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "perfvox/atlas.hpp"
#include "perfvox/classify.hpp"
#include "perfvox/config.hpp"
#include "perfvox/features.hpp"
#include "perfvox/manifest.hpp"
#include "perfvox/stats.hpp"
#include "perfvox/vrs.hpp"

namespace perfvox {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineOptions {
  std::optional<BrainMask> mask;  // takes precedence over mask_path
  std::optional<std::filesystem::path> mask_path;
  std::optional<std::filesystem::path> atlas_path;
  std::optional<std::filesystem::path> atlas_lut_path;
  bool write_labelings = true;
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct PipelineResult {
  BrainMask mask;
  std::vector<SupervoxelLabeling> labelings;
  FeatureMatrix features;
  StatsReport stats;
  std::vector<CvReport> cv;
  std::vector<double> participant_cbf;
  NormativeTable normative;
  std::vector<VrsResult> vrs;
  std::optional<RoiAssignment> atlas_assignment;
  std::vector<RoiComparison> roi_tests;
  std::vector<StageTiming> timings;
  std::size_t nan_replaced = 0;  // non-finite voxels zeroed at load, summed over the cohort
};

// Cohort-mean volume and its auto-mask, shared by every participant when no mask
// is supplied so that cluster k covers the same tissue across the cohort.
Volume3D cohort_template(std::span<const Volume3D> volumes);

std::string feature_schema_json(const FeatureMatrix& features, const RunConfig& config);

// Loads the manifest volumes and runs segment, features, stats, classify, normfit
// and score, writing every artifact under config.out. A failing stage leaves a
// FAILED marker naming it, keeps earlier outputs, and rethrows.
PipelineResult run_pipeline(const CohortManifest& manifest, const RunConfig& config,
                            const PipelineOptions& options = {});

// Same, with volumes already in memory (indexed like the manifest).
PipelineResult run_pipeline(const CohortManifest& manifest, std::vector<Volume3D> volumes, const RunConfig& config,
                            const PipelineOptions& options = {});

// Loads every manifest volume (in parallel); the message of a missing file names its path.
std::vector<Volume3D> load_cohort_volumes(const CohortManifest& manifest, int jobs,
                                         std::size_t* nan_replaced = nullptr);

// Segments one participant: normalize within the mask, then SLIC.
SupervoxelLabeling segment_volume(const Volume3D& volume, const BrainMask& mask, const RunConfig& config);

}  // namespace perfvox
