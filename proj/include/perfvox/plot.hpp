#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "perfvox/vrs.hpp"

namespace perfvox {

// Per-sex mean line over age bins with +/-1 sd error bars.
std::string trend_svg(const std::vector<NormativeCell>& cells, const std::string& title = "Mean CBF by age bin");

struct ClusterPValue {
  int cluster_id = 0;
  double p_raw = 1.0;
  bool significant = false;
};

std::vector<ClusterPValue> stats_from_csv(const std::filesystem::path& path);

// -log10(p) per cluster with the Bonferroni threshold drawn as a dashed line.
std::string stats_svg(const std::vector<ClusterPValue>& rows, double alpha = 0.05);

// Dispatches on the CSV header (trend or stats file). Throws ParseError otherwise.
std::string plot_csv(const std::filesystem::path& path);

}  // namespace perfvox
