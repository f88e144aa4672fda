#include "perfvox/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "perfvox/features.hpp"
#include "perfvox/special.hpp"

namespace perfvox {

double mean(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::DegenerateInput, "mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw Error(ErrorCode::DegenerateInput, "variance needs at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorCode::DegenerateInput, "median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

struct CentralMoments {
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
};

CentralMoments central_moments(std::span<const double> v) {
  const double m = mean(v);
  CentralMoments out;
  for (double x : v) {
    const double d = x - m;
    out.m2 += d * d;
    out.m3 += d * d * d;
    out.m4 += d * d * d * d;
  }
  const auto n = static_cast<double>(v.size());
  out.m2 /= n;
  out.m3 /= n;
  out.m4 /= n;
  return out;
}

}  // namespace

double skewness(std::span<const double> v) {
  const auto m = central_moments(v);
  return m.m2 > 0.0 ? m.m3 / std::pow(m.m2, 1.5) : 0.0;
}

double excess_kurtosis(std::span<const double> v) {
  const auto m = central_moments(v);
  return m.m2 > 0.0 ? m.m4 / (m.m2 * m.m2) - 3.0 : 0.0;
}

AnovaOutcome anova_oneway(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw Error(ErrorCode::DegenerateInput, "ANOVA needs at least 2 groups");
  std::size_t total_n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error(ErrorCode::DegenerateInput, "every ANOVA group needs at least 2 values");
    total_n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(total_n);

  double ss_between = 0.0, ss_within = 0.0;
  for (const auto& g : groups) {
    const double gm = mean(g);
    ss_between += static_cast<double>(g.size()) * (gm - grand) * (gm - grand);
    for (double x : g) ss_within += (x - gm) * (x - gm);
  }
  AnovaOutcome out;
  out.df_between = static_cast<double>(groups.size() - 1);
  out.df_within = static_cast<double>(total_n - groups.size());
  if (ss_between + ss_within == 0.0) {
    throw Error(ErrorCode::DegenerateInput, "all ANOVA values are identical");
  }
  if (ss_within == 0.0) {
    out.F = std::numeric_limits<double>::infinity();
    out.p = 0.0;
    out.degenerate = true;
    return out;
  }
  out.F = (ss_between / out.df_between) / (ss_within / out.df_within);
  out.p = f_sf(out.F, out.df_between, out.df_within);
  return out;
}

std::vector<AnovaResult> bonferroni(std::span<const double> p_values, double alpha) {
  const auto n = static_cast<double>(p_values.size());
  std::vector<AnovaResult> out;
  out.reserve(p_values.size());
  for (std::size_t i = 0; i < p_values.size(); ++i) {
    const double p = p_values[i];
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::Domain, "p-value outside [0, 1]");
    AnovaResult r;
    r.cluster_id = static_cast<int>(i);
    r.p_raw = p;
    r.p_bonferroni = std::min(1.0, p * n);
    r.significant = r.p_bonferroni < alpha;
    out.push_back(r);
  }
  return out;
}

TTestVariant parse_ttest_variant(std::string_view text) {
  if (text == "pooled") return TTestVariant::Pooled;
  if (text == "welch") return TTestVariant::Welch;
  throw Error(ErrorCode::Parse, "unknown t-test variant '" + std::string(text) + "' (expected pooled|welch)");
}

TTestResult ttest_two_sample(std::span<const double> a, std::span<const double> b, TTestVariant variant) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::DegenerateInput, "t-test needs at least 2 values per group");
  TTestResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = mean(a);
  r.mean_b = mean(b);
  const double va = sample_variance(a), vb = sample_variance(b);
  const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double diff = r.mean_a - r.mean_b;
  double se2;
  if (variant == TTestVariant::Pooled) {
    r.df = na + nb - 2.0;
    const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    se2 = sp2 * (1.0 / na + 1.0 / nb);
  } else {
    const double qa = va / na, qb = vb / nb;
    se2 = qa + qb;
    r.df = se2 > 0.0 ? se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)) : na + nb - 2.0;
  }
  if (se2 == 0.0) {
    if (diff == 0.0) throw Error(ErrorCode::DegenerateInput, "both groups constant and equal");
    r.t = diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p_two_sided = 0.0;
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.p_two_sided = t_two_sided_p(r.t, r.df);
  return r;
}

LeveneOutcome levene_brown_forsythe(std::span<const std::vector<double>> groups) {
  std::vector<std::vector<double>> deviations;
  deviations.reserve(groups.size());
  for (const auto& g : groups) {
    const double med = median(g);
    std::vector<double> dev;
    dev.reserve(g.size());
    for (double x : g) dev.push_back(std::fabs(x - med));
    deviations.push_back(std::move(dev));
  }
  AnovaOutcome a = anova_oneway(deviations);
  return {a.F, a.p};
}

std::vector<int> StatsReport::significant_ids() const {
  std::vector<int> out;
  for (const auto& c : clusters) {
    if (c.significant) out.push_back(c.cluster_id);
  }
  return out;
}

std::vector<int> StatsReport::excluded_ids() const {
  std::vector<int> out;
  for (const auto& c : clusters) {
    if (c.excluded) out.push_back(c.cluster_id);
  }
  return out;
}

std::string StatsReport::to_csv() const {
  std::ostringstream out;
  out << "cluster_id,F,p_raw,p_bonf,significant,mean_F,mean_M,n_F,n_M\n";
  for (const auto& c : clusters) {
    out << c.cluster_id << ',' << format_double(c.F) << ',' << format_double(c.p_raw) << ','
        << format_double(c.p_bonferroni) << ',' << (c.significant ? 1 : 0) << ',' << format_double(c.mean_F) << ','
        << format_double(c.mean_M) << ',' << c.n_F << ',' << c.n_M << '\n';
  }
  return out.str();
}

nlohmann::json StatsReport::summary() const {
  nlohmann::json diagnostics = nlohmann::json::array();
  std::vector<int> degenerate;
  for (const auto& c : clusters) {
    if (c.degenerate) degenerate.push_back(c.cluster_id);
    if (c.excluded) continue;
    nlohmann::json d{{"cluster_id", c.cluster_id},
                     {"skew_F", c.skew_F},
                     {"skew_M", c.skew_M},
                     {"excess_kurtosis_F", c.kurt_F},
                     {"excess_kurtosis_M", c.kurt_M}};
    if (c.levene_valid) {
      d["levene_W"] = c.levene_W;
      d["levene_p"] = c.levene_p;
    }
    diagnostics.push_back(d);
  }
  return nlohmann::json{{"alpha", alpha},
                        {"correction", "bonferroni"},
                        {"n_tests", n_tests},
                        {"n_significant", significant_ids().size()},
                        {"significant_clusters", significant_ids()},
                        {"excluded_clusters", excluded_ids()},
                        {"degenerate_clusters", degenerate},
                        {"diagnostics", diagnostics}};
}

StatsReport analyze_clusters(const FeatureMatrix& features, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::Config, "alpha must lie in (0, 1)");
  StatsReport report;
  report.alpha = alpha;
  const auto sexes = features.sexes();
  for (int c = 0; c < features.k; ++c) {
    ClusterStats cs;
    cs.cluster_id = c;
    const auto column = features.cluster_column(c);
    std::vector<std::vector<double>> groups(2);  // 0 = F, 1 = M
    for (std::size_t r = 0; r < column.size(); ++r) groups[sexes[r] == Sex::F ? 0 : 1].push_back(column[r]);
    cs.n_F = groups[0].size();
    cs.n_M = groups[1].size();
    if (cs.n_F < 2 || cs.n_M < 2) {
      throw Error(ErrorCode::DegenerateInput, "each sex needs at least 2 participants for the cluster ANOVA");
    }
    cs.mean_F = mean(groups[0]);
    cs.mean_M = mean(groups[1]);
    try {
      AnovaOutcome a = anova_oneway(groups);
      cs.F = a.F;
      cs.p_raw = a.p;
      cs.degenerate = a.degenerate;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateInput) throw;
      cs.excluded = true;
    }
    if (!cs.excluded) {
      try {
        LeveneOutcome lv = levene_brown_forsythe(groups);
        cs.levene_W = lv.W;
        cs.levene_p = lv.p;
        cs.levene_valid = true;
      } catch (const Error&) {
      }
      cs.skew_F = skewness(groups[0]);
      cs.skew_M = skewness(groups[1]);
      cs.kurt_F = excess_kurtosis(groups[0]);
      cs.kurt_M = excess_kurtosis(groups[1]);
      ++report.n_tests;
    }
    report.clusters.push_back(cs);
  }
  for (auto& cs : report.clusters) {
    if (cs.excluded) continue;
    cs.p_bonferroni = std::min(1.0, cs.p_raw * report.n_tests);
    cs.significant = cs.p_bonferroni < alpha;
  }
  return report;
}

}  // namespace perfvox
