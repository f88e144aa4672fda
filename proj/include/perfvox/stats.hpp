#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace perfvox {

struct FeatureMatrix;

struct AnovaOutcome {
  double F = 0.0;
  double p = 1.0;
  double df_between = 0.0;
  double df_within = 0.0;
  bool degenerate = false;  // zero within-group variance: F infinite, p = 0
};

// One-way ANOVA. Throws DegenerateInput when all values are equal.
AnovaOutcome anova_oneway(std::span<const std::vector<double>> groups);

struct AnovaResult {
  int cluster_id = 0;
  double F = 0.0;
  double p_raw = 1.0;
  double p_bonferroni = 1.0;
  bool significant = false;
};

// p_adj = min(1, p * n); significant iff p_adj < alpha.
std::vector<AnovaResult> bonferroni(std::span<const double> p_values, double alpha = 0.05);

enum class TTestVariant { Pooled, Welch };

TTestVariant parse_ttest_variant(std::string_view text);

struct TTestResult {
  std::string id;
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

TTestResult ttest_two_sample(std::span<const double> a, std::span<const double> b,
                             TTestVariant variant = TTestVariant::Pooled);

struct LeveneOutcome {
  double W = 0.0;
  double p = 1.0;
};

// Brown-Forsythe variant: ANOVA on absolute deviations from group medians.
LeveneOutcome levene_brown_forsythe(std::span<const std::vector<double>> groups);

double mean(std::span<const double> v);
double sample_variance(std::span<const double> v);  // ddof 1
double median(std::vector<double> v);
double skewness(std::span<const double> v);         // moment estimator g1
double excess_kurtosis(std::span<const double> v);  // moment estimator g2

struct ClusterStats {
  int cluster_id = 0;
  double F = 0.0;
  double p_raw = 1.0;
  double p_bonferroni = 1.0;
  bool significant = false;
  bool degenerate = false;
  bool excluded = false;  // no variance across the cohort; not counted as a test
  double mean_F = 0.0;
  double mean_M = 0.0;
  std::size_t n_F = 0;
  std::size_t n_M = 0;
  double levene_W = 0.0;
  double levene_p = 1.0;
  bool levene_valid = false;
  double skew_F = 0.0, skew_M = 0.0, kurt_F = 0.0, kurt_M = 0.0;
};

struct StatsReport {
  double alpha = 0.05;
  int n_tests = 0;
  std::vector<ClusterStats> clusters;

  std::vector<int> significant_ids() const;
  std::vector<int> excluded_ids() const;
  std::string to_csv() const;
  nlohmann::json summary() const;
};

// Per-cluster female vs male ANOVA on cluster means with Bonferroni correction.
StatsReport analyze_clusters(const FeatureMatrix& features, double alpha = 0.05);

}  // namespace perfvox
