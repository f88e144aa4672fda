// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 on any FAIL.
#include <CLI11.hpp>
#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "perfvox/classify.hpp"
#include "perfvox/csv.hpp"
#include "perfvox/features.hpp"
#include "perfvox/pipeline.hpp"
#include "perfvox/preprocess.hpp"
#include "perfvox/rng.hpp"
#include "perfvox/slic.hpp"
#include "perfvox/stats.hpp"
#include "perfvox/synth.hpp"
#include "perfvox/vrs.hpp"

namespace fs = std::filesystem;
using namespace perfvox;

namespace {

// Pinned tolerances.
constexpr int kSlicPhantoms = 20;
constexpr double kSlicSecondsPerVolume = 5.0;
constexpr int kStatsDatasets = 1000;
constexpr double kMaxPDiff = 1e-9;
constexpr double kFtSquaredRel = 1e-10;
constexpr int kNullSims = 2000;
constexpr int kNullClusters = 100;
constexpr double kMaxFwer = 0.05 + 0.01;
constexpr double kMinConvAccuracy = 0.90;
constexpr double kMinLogisticAccuracy = 0.80;
constexpr double kPermutationBand = 0.15;
constexpr double kMaxGradientRelErr = 1e-4;
constexpr double kMinRecovered = 0.80;
constexpr std::size_t kMaxFalsePositives = 2;
constexpr double kNullAtRisk = 0.159;
constexpr double kNullAtRiskBand = 0.03;
constexpr int kNullPerCell = 200;
constexpr double kMaxWallSeconds = 300.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Gate {
  int failed = 0;
  void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failed;
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Breadth-first component count per label, written without the library's helpers.
std::map<int, int> flood_components(const Dims& d, const std::vector<std::int32_t>& labels, int conn) {
  std::map<int, int> count;
  std::vector<char> seen(labels.size(), 0);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || seen[s]) continue;
    ++count[labels[s]];
    std::deque<std::size_t> q{s};
    seen[s] = 1;
    while (!q.empty()) {
      const std::size_t i = q.front();
      q.pop_front();
      const long x = static_cast<long>(i % d.nx), y = static_cast<long>((i / d.nx) % d.ny),
                 z = static_cast<long>(i / (d.nx * d.ny));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int m = std::abs(dx) + std::abs(dy) + std::abs(dz);
            if (m == 0 || (conn == 6 && m != 1)) continue;
            const long qx = x + dx, qy = y + dy, qz = z + dz;
            if (qx < 0 || qy < 0 || qz < 0 || qx >= static_cast<long>(d.nx) || qy >= static_cast<long>(d.ny) ||
                qz >= static_cast<long>(d.nz))
              continue;
            const std::size_t j = d.index(static_cast<std::size_t>(qx), static_cast<std::size_t>(qy),
                                          static_cast<std::size_t>(qz));
            if (!seen[j] && labels[j] == labels[s]) {
              seen[j] = 1;
              q.push_back(j);
            }
          }
    }
  }
  return count;
}

void slic_invariants(Gate& gate) {
  Rng rng(2024);
  int bad = 0;
  double slowest = 0.0;
  std::string first_problem;
  for (int t = 0; t < kSlicPhantoms; ++t) {
    PhantomSpec ps;
    ps.dims = {32 + rng.below(33), 32 + rng.below(33), 32 + rng.below(33)};
    ps.radial_decay = 1.0 + 2.0 * rng.uniform();
    ps.noise_sigma = 1.0 + 4.0 * rng.uniform();
    ps.seed = static_cast<std::uint64_t>(t);
    const Volume3D v = generate_phantom(ps);
    const BrainMask mask = auto_mask(phantom_mean(ps), kDefaultMaskFraction);
    SlicParams p;
    p.k = 50 + static_cast<int>(rng.below(251));
    p.connectivity = t % 2 ? Connectivity::TwentySix : Connectivity::Six;

    const auto t0 = Clock::now();
    const SupervoxelLabeling l = run_slic(normalize_intensity(v, mask, NormalizationMode::ZScore), mask, p);
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);

    std::vector<std::string> problems;
    std::int64_t total = 0;
    for (auto s : l.sizes) total += s;
    if (total != static_cast<std::int64_t>(mask.count())) problems.push_back("sum of sizes != mask count");
    std::vector<std::int64_t> counted(l.sizes.size(), 0);
    for (std::size_t i = 0; i < l.labels.size(); ++i) {
      if (mask[i]) {
        if (l.labels[i] < 0 || l.labels[i] >= l.k()) {
          problems.push_back("masked voxel unlabeled");
          break;
        }
        ++counted[static_cast<std::size_t>(l.labels[i])];
      } else if (l.labels[i] != kBackground) {
        problems.push_back("label outside mask");
        break;
      }
    }
    if (counted != l.sizes) problems.push_back("sizes disagree with labels");
    const auto comps = flood_components(l.dims, l.labels, static_cast<int>(p.connectivity));
    for (const auto& [label, n] : comps) {
      if (n != 1) {
        problems.push_back("label " + std::to_string(label) + " has " + std::to_string(n) + " components");
        break;
      }
    }
    for (std::size_t i = 1; i < l.cost_history.size(); ++i) {
      if (l.cost_history[i] > l.cost_history[i - 1]) {
        problems.push_back("cost rose at step " + std::to_string(i));
        break;
      }
    }
    if (secs >= kSlicSecondsPerVolume) problems.push_back(fmt("took %.2f s", secs));
    if (!problems.empty()) {
      ++bad;
      if (first_problem.empty()) {
        first_problem = "phantom " + std::to_string(t) + ": " + problems.front();
      }
    }
  }
  gate.report("slic_invariants", bad == 0,
              std::to_string(kSlicPhantoms - bad) + "/" + std::to_string(kSlicPhantoms) +
                  " phantoms (32^3-64^3) clean, slowest " + fmt("%.2f s", slowest) +
                  (first_problem.empty() ? "" : "; " + first_problem));
}

double ref_anova_p(const std::vector<std::vector<double>>& groups, double* f_out) {
  double grand = 0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    for (double x : g) grand += x;
    n += g.size();
  }
  grand /= static_cast<double>(n);
  double ssb = 0, ssw = 0;
  for (const auto& g : groups) {
    double m = 0;
    for (double x : g) m += x;
    m /= static_cast<double>(g.size());
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  const double d1 = static_cast<double>(groups.size() - 1), d2 = static_cast<double>(n - groups.size());
  const double f = (ssb / d1) / (ssw / d2);
  if (f_out) *f_out = f;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(d1, d2), f));
}

double ref_t_p(double t, double df) {
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::fabs(t)));
}

void stats_oracle(Gate& gate) {
  std::vector<std::string> problems;

  // {1,2,3} vs {4,5,6}: SSB 13.5, SSW 4, F 13.5 on (1, 4); t = -3 / sqrt(2/3).
  {
    const std::vector<std::vector<double>> g{{1, 2, 3}, {4, 5, 6}};
    const AnovaOutcome a = anova_oneway(g);
    if (a.F != 13.5 || a.df_between != 1 || a.df_within != 4) problems.push_back("two-group ANOVA example");
    const TTestResult t = ttest_two_sample(g[0], g[1], TTestVariant::Pooled);
    if (std::fabs(t.t - (-3.0 / std::sqrt(2.0 / 3.0))) > 1e-15 || t.df != 4) problems.push_back("t example");
  }
  // {1,2}, {3,4}, {5,6}: SSB 16, SSW 1.5, F = 8 / 0.5 = 16 on (2, 3).
  {
    const std::vector<std::vector<double>> g{{1, 2}, {3, 4}, {5, 6}};
    const AnovaOutcome a = anova_oneway(g);
    if (a.F != 16.0 || a.df_between != 2 || a.df_within != 3) problems.push_back("three-group ANOVA example");
  }

  Rng rng(99);
  double max_dp = 0, max_ft = 0;
  for (int d = 0; d < kStatsDatasets; ++d) {
    const std::size_t ng = 2 + rng.below(4);
    std::vector<std::vector<double>> groups(ng);
    for (auto& g : groups) {
      const std::size_t n = 2 + rng.below(14);
      const double shift = rng.normal(0.0, 1.0), sd = 0.2 + 3.0 * rng.uniform();
      for (std::size_t i = 0; i < n; ++i) g.push_back(rng.normal(shift, sd));
    }
    double f_ref = 0;
    const double p_ref = ref_anova_p(groups, &f_ref);
    const AnovaOutcome a = anova_oneway(groups);
    max_dp = std::max(max_dp, std::fabs(a.p - p_ref));

    const TTestResult pooled = ttest_two_sample(groups[0], groups[1], TTestVariant::Pooled);
    max_dp = std::max(max_dp, std::fabs(pooled.p_two_sided - ref_t_p(pooled.t, pooled.df)));
    const TTestResult welch = ttest_two_sample(groups[0], groups[1], TTestVariant::Welch);
    const double na = static_cast<double>(groups[0].size()), nb = static_cast<double>(groups[1].size());
    double va = 0, vb = 0, ma = 0, mb = 0;
    for (double x : groups[0]) ma += x;
    for (double x : groups[1]) mb += x;
    ma /= na;
    mb /= nb;
    for (double x : groups[0]) va += (x - ma) * (x - ma);
    for (double x : groups[1]) vb += (x - mb) * (x - mb);
    va /= na - 1;
    vb /= nb - 1;
    const double qa = va / na, qb = vb / nb;
    const double t_ref = (ma - mb) / std::sqrt(qa + qb);
    const double df_ref = (qa + qb) * (qa + qb) / (qa * qa / (na - 1) + qb * qb / (nb - 1));
    max_dp = std::max(max_dp, std::fabs(welch.p_two_sided - ref_t_p(t_ref, df_ref)));

    const std::vector<std::vector<double>> two{groups[0], groups[1]};
    const AnovaOutcome a2 = anova_oneway(two);
    max_ft = std::max(max_ft, std::fabs(a2.F - pooled.t * pooled.t) / std::max(a2.F, 1e-300));
  }
  if (max_dp >= kMaxPDiff) problems.push_back(fmt("max |dp| %.3g", max_dp));
  if (max_ft >= kFtSquaredRel) problems.push_back(fmt("max F vs t^2 rel %.3g", max_ft));

  Rng null_rng(7);
  int family_errors = 0;
  std::vector<double> ps(kNullClusters);
  std::vector<std::vector<double>> groups(2, std::vector<double>(10));
  for (int s = 0; s < kNullSims; ++s) {
    for (int c = 0; c < kNullClusters; ++c) {
      for (auto& g : groups)
        for (auto& x : g) x = null_rng.normal(50.0, 5.0);
      ps[static_cast<std::size_t>(c)] = anova_oneway(groups).p;
    }
    const auto corrected = bonferroni(ps, 0.05);
    if (std::any_of(corrected.begin(), corrected.end(), [](const AnovaResult& r) { return r.significant; })) {
      ++family_errors;
    }
  }
  const double fwer = family_errors / static_cast<double>(kNullSims);
  if (fwer > kMaxFwer) problems.push_back(fmt("FWER %.4f", fwer));

  std::ostringstream detail;
  detail << "hand examples exact; " << kStatsDatasets << " datasets max |dp| " << fmt("%.3g", max_dp)
         << ", F vs t^2 rel " << fmt("%.3g", max_ft) << "; Bonferroni FWER " << fmt("%.4f", fwer) << " over "
         << kNullSims << "x" << kNullClusters;
  for (const auto& p : problems) detail << "; " << p;
  gate.report("stats_oracle", problems.empty(), detail.str());
}

void gradient_correctness(Gate& gate) {
  std::vector<NetConfig> grid;
  NetConfig base;
  grid.push_back(base);
  for (const std::vector<ConvLayerSpec>& conv :
       {std::vector<ConvLayerSpec>{}, {{3, 4}}, {{5, 8}}, {{5, 8}, {5, 16}}, {{5, 8}, {5, 16}, {3, 8}}}) {
    for (const std::vector<int>& dense : {std::vector<int>{}, {16}, {32}, {32, 8}}) {
      NetConfig c = base;
      c.conv = conv;
      c.dense = dense;
      grid.push_back(c);
    }
  }
  Rng rng(5);
  const std::size_t rows = 10;
  std::vector<double> values(rows * 100);
  for (auto& v : values) v = rng.normal();
  const Matrix x(rows, 100, values);
  std::vector<int> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<int>(i % 2);

  double worst = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    GradientCheckOptions opt;
    opt.seed = g;
    worst = std::max(worst, gradient_check(grid[g], x, y, opt));
  }

  GradientCheckOptions faulty;
  faulty.corrupt = [](std::span<double> grad) {
    for (auto& v : grad) v *= 1.01;
  };
  const double scaled = gradient_check(base, x, y, faulty);
  faulty.corrupt = [](std::span<double> grad) { grad[grad.size() / 2] += 1e-3; };
  faulty.n_params = std::numeric_limits<std::size_t>::max();
  const double single = gradient_check(base, x, y, faulty);
  const bool pass = worst < kMaxGradientRelErr && scaled > kMaxGradientRelErr && single > kMaxGradientRelErr;
  gate.report("gradient", pass,
              std::to_string(grid.size()) + " architectures max rel err " + fmt("%.3g", worst) +
                  "; injected faults measure " + fmt("%.3g", scaled) + " and " + fmt("%.3g", single));
}

void vrs_equivalence(Gate& gate) {
  std::vector<std::string> problems;
  const AgeBins bins = AgeBins::standard();
  const double eps = std::numeric_limits<double>::epsilon();
  double worst_k = 0, worst_shift = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t n = 200 + rng.below(400);
    std::vector<ParticipantMeta> meta;
    std::vector<double> cbf;
    std::vector<int> ages;
    std::vector<Sex> sexes;
    for (std::size_t i = 0; i < n; ++i) {
      ParticipantMeta m;
      m.id = "p" + std::to_string(i);
      m.age = 8 + static_cast<int>(rng.below(85));
      m.sex = rng.below(2) ? Sex::F : Sex::M;
      meta.push_back(m);
      ages.push_back(m.age);
      sexes.push_back(m.sex);
      cbf.push_back(rng.normal(55.0 - 0.12 * m.age, 4.0 + 4.0 * rng.uniform()));
    }
    const NormativeTable table = fit_normative(cbf, ages, sexes, bins);
    const auto res = score_cohort(meta, cbf, table, 1.0);

    // oracle: first pass cell means, second pass squared deviations
    std::map<std::pair<std::size_t, int>, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[{bins.index_of(ages[i]), sexes[i] == Sex::F ? 0 : 1}];
      s.first += cbf[i];
      ++s.second;
    }
    std::map<std::pair<std::size_t, int>, double> ss;
    for (std::size_t i = 0; i < n; ++i) {
      const auto key = std::make_pair(bins.index_of(ages[i]), sexes[i] == Sex::F ? 0 : 1);
      const double m = sums[key].first / static_cast<double>(sums[key].second);
      ss[key] += (cbf[i] - m) * (cbf[i] - m);
    }
    std::set<std::string> oracle, got;
    for (std::size_t i = 0; i < n; ++i) {
      const auto key = std::make_pair(bins.index_of(ages[i]), sexes[i] == Sex::F ? 0 : 1);
      const double cnt = static_cast<double>(sums[key].second);
      const double bound = sums[key].first / cnt - std::sqrt(ss[key] / (cnt - 1));
      if (cbf[i] < bound) oracle.insert(meta[i].id);
      if (res[i].status == VrsStatus::AtRisk) got.insert(res[i].id);
    }
    if (got != oracle && problems.empty()) problems.push_back("AtRisk set differs for cohort " + std::to_string(seed));

    const double kc = 0.5 + 4.0 * rng.uniform();
    const auto scaled = score_cohort(meta, cbf, table, kc);
    for (std::size_t i = 0; i < n; ++i) {
      const double expect = kc * res[i].vrs;
      worst_k = std::max(worst_k, std::fabs(scaled[i].vrs - expect) / std::max(std::fabs(expect), 1e-300));
      if (scaled[i].status != res[i].status && problems.empty()) problems.push_back("k changed a status");
    }

    const double delta = rng.normal(0.0, 20.0);
    std::vector<double> shifted(cbf);
    for (auto& v : shifted) v += delta;
    const auto sres = score_cohort(meta, shifted, fit_normative(shifted, ages, sexes, bins), 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double scale = std::max(std::fabs(cbf[i]), std::fabs(shifted[i]));
      worst_shift = std::max(worst_shift, std::fabs(sres[i].deficit - res[i].deficit) / (scale * eps));
      if (std::fabs(sres[i].lower_bound - (res[i].lower_bound + delta)) > 64 * eps * scale && problems.empty()) {
        problems.push_back("shifted lower bound off");
      }
      if (sres[i].status != res[i].status && problems.empty()) problems.push_back("shift changed a status");
    }
  }
  // one rounding per product
  if (worst_k > 2 * eps) problems.push_back(fmt("k-homogeneity rel err %.3g", worst_k));
  // summation of up to a few hundred shifted values
  if (worst_shift > 64) problems.push_back(fmt("shift error %.1f ulp", worst_shift));

  Rng rng(4242);
  std::map<std::pair<std::size_t, int>, std::pair<int, int>> flagged;
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<ParticipantMeta> meta;
    std::vector<double> cbf;
    std::vector<int> ages;
    std::vector<Sex> sexes;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      for (Sex s : {Sex::F, Sex::M}) {
        for (int i = 0; i < kNullPerCell; ++i) {
          ParticipantMeta m{"q" + std::to_string(meta.size()), bins[b].lo + static_cast<int>(rng.below(
                                                                                static_cast<std::uint64_t>(bins[b].hi - bins[b].lo + 1))),
                            s, ""};
          meta.push_back(m);
          ages.push_back(m.age);
          sexes.push_back(s);
          cbf.push_back(rng.normal(40.0 + 2.0 * static_cast<double>(b), 6.0));
        }
      }
    }
    const auto res = score_cohort(meta, cbf, fit_normative(cbf, ages, sexes, bins), 1.0);
    for (const auto& r : res) {
      auto& f = flagged[{r.bin, r.sex == Sex::F ? 0 : 1}];
      f.first += r.status == VrsStatus::AtRisk;
      ++f.second;
    }
  }
  double lo = 1, hi = 0;
  for (const auto& [key, f] : flagged) {
    const double frac = f.first / static_cast<double>(f.second);
    lo = std::min(lo, frac);
    hi = std::max(hi, frac);
  }
  if (lo < kNullAtRisk - kNullAtRiskBand || hi > kNullAtRisk + kNullAtRiskBand) {
    problems.push_back("null fraction outside band");
  }

  std::ostringstream detail;
  detail << "AtRisk matches two-pass oracle on 50 cohorts; k-homogeneity rel err " << fmt("%.3g", worst_k)
         << ", shift error " << fmt("%.1f", worst_shift) << " ulp; null AtRisk per cell " << fmt("%.4f", lo) << "-"
         << fmt("%.4f", hi) << " (" << kNullPerCell << "/cell x 25)";
  for (const auto& p : problems) detail << "; " << p;
  gate.report("vrs_equivalence", problems.empty(), detail.str());
}

void shell_gradient(Gate& gate) {
  PhantomSpec ps = canonical_phantom();
  ps.noise_sigma = 0.0;
  const Volume3D v = generate_phantom(ps);
  const BrainMask mask = auto_mask(v, kDefaultMaskFraction);
  const SupervoxelLabeling l = run_slic(normalize_intensity(v, mask, NormalizationMode::ZScore), mask, SlicParams{});
  const ShellMatrix s = shell_means(v, l, mask, kDefaultMarginsMm);
  const double cx = (static_cast<double>(ps.dims.nx) - 1) / 2, cy = (static_cast<double>(ps.dims.ny) - 1) / 2,
               cz = (static_cast<double>(ps.dims.nz) - 1) / 2;
  int core = 0, ok = 0;
  for (int c = 0; c < l.k(); ++c) {
    if (l.sizes[static_cast<std::size_t>(c)] == 0) continue;
    const auto& cen = l.centroids[static_cast<std::size_t>(c)];
    const double r = std::sqrt((cen.x - cx) * (cen.x - cx) + (cen.y - cy) * (cen.y - cy) + (cen.z - cz) * (cen.z - cz));
    if (r > 6.0) continue;  // core: centroid within 6 mm of the center
    ++core;
    ok += s.at(static_cast<std::size_t>(c), 3) <= s.at(static_cast<std::size_t>(c), 0);
  }
  gate.report("shell_gradient", core > 0 && ok == core,
              std::to_string(ok) + "/" + std::to_string(core) + " core clusters have 5 mm shell <= 0.2 mm shell");
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  }
  return files;
}

std::string compare_runs(const fs::path& a, const fs::path& b) {
  const auto sa = snapshot(a), sb = snapshot(b);
  if (sa.size() != sb.size()) return "file sets differ";
  for (const auto& [name, bytes] : sa) {
    auto it = sb.find(name);
    if (it == sb.end()) return name + " missing";
    if (it->second != bytes) return name + " differs";
  }
  return {};
}

void canonical(Gate& gate, const fs::path& work) {
  const CohortSpec spec = canonical_cohort();
  const fs::path cohort_dir = work / "canonical";
  fs::remove_all(work);

  RunConfig cfg;
  cfg.out = (work / "run_a").string();
  PipelineOptions opt;
  opt.mask_path = cohort_dir / "mask.nii.gz";

  const auto t0 = Clock::now();
  write_cohort(generate_cohort(spec, canonical_phantom()), cohort_dir);
  const CohortManifest manifest = load_manifest(cohort_dir / "manifest.csv");
  const PipelineResult res = run_pipeline(manifest, cfg, opt);
  const double wall = seconds_since(t0);

  std::size_t n_f = 0;
  for (const auto& m : manifest.rows) n_f += m.sex == Sex::F;
  double conv = -1, logistic = -1;
  for (const auto& r : res.cv) (r.kind == ModelKind::ConvNet ? conv : logistic) = r.aggregate.accuracy;

  // permutation control: same features and training, shuffled sex labels
  const auto labels = sex_labels(res.features.sexes());
  std::vector<int> shuffled(labels);
  Rng rng(31337);
  shuffle(std::span<int>(shuffled), rng);
  const Matrix x(res.features.size(), static_cast<std::size_t>(res.features.k), res.features.cluster_matrix());
  CvOptions cv;
  cv.net = cfg.net;
  cv.net.input_len = res.features.k;
  cv.logreg_l2 = cfg.logreg_l2;
  cv.folds = cfg.folds;
  cv.seed = cfg.seed;
  cv.kind = ModelKind::ConvNet;
  const double perm_conv = cross_validate(x, shuffled, cv).aggregate.accuracy;
  cv.kind = ModelKind::Logistic;
  const double perm_log = cross_validate(x, shuffled, cv).aggregate.accuracy;

  const bool cls_ok = conv >= kMinConvAccuracy && logistic >= kMinLogisticAccuracy &&
                      std::fabs(perm_conv - 0.5) <= kPermutationBand && std::fabs(perm_log - 0.5) <= kPermutationBand;
  std::ostringstream cls;
  cls << "n=" << manifest.rows.size() << " (" << n_f << " F / " << manifest.rows.size() - n_f
      << " M), 5-fold CV accuracy conv " << fmt("%.4f", conv) << ", logistic " << fmt("%.4f", logistic)
      << "; shuffled-label control conv " << fmt("%.4f", perm_conv) << ", logistic " << fmt("%.4f", perm_log);
  gate.report("classifier", cls_ok, cls.str());

  const std::set<int> truth(spec.effect_clusters.begin(), spec.effect_clusters.end());
  std::size_t hits = 0, false_pos = 0;
  for (int c : res.stats.significant_ids()) (truth.count(c) ? hits : false_pos) += 1;
  const double recovered = hits / static_cast<double>(truth.size());
  gate.report("cluster_recovery", recovered >= kMinRecovered && false_pos <= kMaxFalsePositives,
              std::to_string(hits) + "/" + std::to_string(truth.size()) + " effect clusters significant, " +
                  std::to_string(false_pos) + " false positives after Bonferroni");

  const NormativeTable& t = res.normative;
  bool f_above = true, decreasing = true;
  std::ostringstream trend;
  trend << "bin means F/M:";
  for (std::size_t b = 0; b < t.bins.size(); ++b) {
    const auto& f = t.cell(b, Sex::F);
    const auto& m = t.cell(b, Sex::M);
    f_above = f_above && f.mu > m.mu;
    if (b > 0) {
      decreasing = decreasing && f.mu < t.cell(b - 1, Sex::F).mu && m.mu < t.cell(b - 1, Sex::M).mu;
    }
    trend << ' ' << t.bins[b].lo << '-' << t.bins[b].hi << ' ' << fmt("%.2f", f.mu) << '/' << fmt("%.2f", m.mu);
  }
  gate.report("age_sex_trend", f_above && decreasing,
              std::string(f_above ? "F above M in every bin" : "F not above M in some bin") + ", " +
                  (decreasing ? "strictly decreasing" : "not strictly decreasing") + "; " + trend.str());

  gate.report("wall_time", wall < kMaxWallSeconds,
              fmt("%.1f s", wall) + " for synthesis plus pipeline on the canonical cohort (limit " +
                  fmt("%.0f s", kMaxWallSeconds) + ")");

  RunConfig again = cfg;
  again.out = (work / "run_b").string();
  run_pipeline(manifest, again, opt);
  RunConfig parallel = cfg;
  parallel.out = (work / "run_c").string();
  parallel.jobs = 8;
  run_pipeline(manifest, parallel, opt);
  const std::string repeat = compare_runs(work / "run_a", work / "run_b");
  const std::string jobs = compare_runs(work / "run_a", work / "run_c");
  const std::size_t n_files = snapshot(work / "run_a").size();
  gate.report("determinism", repeat.empty() && jobs.empty(),
              std::to_string(n_files) + " artifacts compared; repeat run " +
                  (repeat.empty() ? "identical" : repeat) + ", jobs 1 vs 8 " + (jobs.empty() ? "identical" : jobs));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = "acceptance_work";
  app.add_option("--work", work, "scratch directory for the canonical runs");
  CLI11_PARSE(app, argc, argv);

  Gate gate;
  const std::vector<std::pair<const char*, std::function<void()>>> checks{
      {"slic_invariants", [&] { slic_invariants(gate); }},
      {"stats_oracle", [&] { stats_oracle(gate); }},
      {"gradient", [&] { gradient_correctness(gate); }},
      {"vrs_equivalence", [&] { vrs_equivalence(gate); }},
      {"shell_gradient", [&] { shell_gradient(gate); }},
      {"canonical", [&] { canonical(gate, work); }},
  };
  for (const auto& [name, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      gate.report(name, false, std::string("threw ") + e.what());
    }
  }
  std::printf("%d criteria failed\n", gate.failed);
  return gate.failed == 0 ? 0 : 1;
}
