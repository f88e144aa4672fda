#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perfvox/age_bins.hpp"
#include "perfvox/features.hpp"
#include "perfvox/manifest.hpp"

namespace perfvox {

enum class CbfWeighting { ClusterMean, VoxelWeighted };
CbfWeighting parse_cbf_weighting(std::string_view text);
std::string_view to_string(CbfWeighting w);

// ClusterMean: unweighted mean over nonempty clusters. VoxelWeighted: size-weighted
// mean, i.e. the masked-volume mean (needs cluster sizes).
double participant_mean_cbf(const FeatureVector& fv, CbfWeighting weighting = CbfWeighting::VoxelWeighted);

double masked_mean(const Volume3D& volume, const BrainMask& mask);

struct NormativeCell {
  AgeBin bin;
  Sex sex = Sex::F;
  double mu = 0.0;
  double sigma = 0.0;  // sample standard deviation, ddof 1
  int n = 0;
  bool usable = false;  // n >= 2
};

struct NormativeTable {
  AgeBins bins;
  std::vector<NormativeCell> cells;  // bin-major, F then M
  std::string normalization = "raw";

  const NormativeCell& cell(std::size_t bin, Sex sex) const;
  std::string to_json() const;
  static NormativeTable from_json(std::string_view text);
};

// Throws BinCoverage for ages outside every bin, LengthMismatch for ragged input.
NormativeTable fit_normative(std::span<const double> cbf, std::span<const int> ages, std::span<const Sex> sexes,
                             const AgeBins& bins);

// Identical cells to fit_normative, kept under its own name for plotting callers.
std::vector<NormativeCell> age_trend(std::span<const double> cbf, std::span<const int> ages,
                                     std::span<const Sex> sexes, const AgeBins& bins);
std::string trend_to_csv(const std::vector<NormativeCell>& cells);
std::vector<NormativeCell> trend_from_csv(const std::filesystem::path& path);

enum class VrsStatus { Normal, AtRisk };
std::string_view to_string(VrsStatus status);

struct VrsResult {
  std::string id;
  double cbf = 0.0;
  int age = 0;
  std::size_t bin = 0;
  Sex sex = Sex::F;
  double lower_bound = 0.0;  // mu - sigma
  VrsStatus status = VrsStatus::Normal;
  double deficit = 0.0;  // max(0, lower_bound - cbf)
  double vrs = 0.0;      // k * deficit
  double k = 1.0;
};

// Normal iff cbf >= mu - sigma. Throws InvalidK, BinCoverage, UnusableCell.
VrsResult score(double cbf, int age, Sex sex, const NormativeTable& table, double k = 1.0);

// Scores every participant; with `leave_one_out` the participant's cell is recomputed
// from the other scored participants in it (the table then only supplies bins).
std::vector<VrsResult> score_cohort(std::span<const ParticipantMeta> meta, std::span<const double> cbf,
                                    const NormativeTable& table, double k = 1.0, bool leave_one_out = false);

std::string vrs_to_csv(const std::vector<VrsResult>& results);

}  // namespace perfvox
