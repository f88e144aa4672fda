#include <doctest.h>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>

#include "perfvox/error.hpp"
#include "perfvox/features.hpp"
#include "perfvox/rng.hpp"
#include "perfvox/special.hpp"
#include "perfvox/stats.hpp"

using namespace perfvox;

namespace {

double boost_f_sf(double f, double d1, double d2) {
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(d1, d2), f));
}

double boost_t_two_sided(double t, double df) {
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::fabs(t)));
}

std::vector<double> normals(Rng& rng, std::size_t n, double mu = 0.0, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(mu, sd);
  return v;
}

// Sums of squares computed directly from the definition.
double anova_f_oracle(const std::vector<std::vector<double>>& groups) {
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
  const double k = static_cast<double>(groups.size());
  return (ssb / (k - 1)) / (ssw / (static_cast<double>(n) - k));
}

FeatureMatrix matrix_of(const std::vector<std::vector<double>>& columns, const std::vector<Sex>& sexes) {
  FeatureMatrix fm;
  fm.k = static_cast<int>(columns.size());
  for (std::size_t r = 0; r < sexes.size(); ++r) {
    fm.meta.push_back({"p" + std::to_string(r), 30, sexes[r], ""});
    FeatureVector fv;
    fv.participant_id = fm.meta.back().id;
    for (const auto& col : columns) fv.cluster_means.push_back(col[r]);
    fv.shells.k = columns.size();
    fm.rows.push_back(fv);
  }
  return fm;
}

}  // namespace

TEST_CASE("special function examples") {
  CHECK(ln_gamma(1.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(std::abs(ln_gamma(1.0)) < 1e-14);
  CHECK(ln_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-14));
  CHECK(ln_gamma(0.5) == doctest::Approx(0.5 * std::log(std::numbers::pi)).epsilon(1e-14));
  CHECK(reg_inc_beta(1, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(reg_inc_beta(1, 1, 0.3) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(reg_inc_beta(2, 2, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(reg_inc_beta(2, 3, 0.0) == 0.0);
  CHECK(reg_inc_beta(2, 3, 1.0) == 1.0);
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("special functions agree with Boost") {
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const double x = 0.05 + 60 * rng.uniform();
    CHECK(std::abs(ln_gamma(x) - std::lgamma(x)) <= 1e-12 * std::max(1.0, std::abs(std::lgamma(x))));
    const double a = 0.2 + 40 * rng.uniform(), b = 0.2 + 40 * rng.uniform(), z = rng.uniform();
    CHECK(std::abs(reg_inc_beta(a, b, z) - boost::math::ibeta(a, b, z)) < 1e-12);
    const double f = 10 * rng.uniform() * rng.uniform();
    const double d1 = 1 + static_cast<double>(rng.below(10)), d2 = 1 + static_cast<double>(rng.below(200));
    CHECK(std::abs(f_sf(f, d1, d2) - boost_f_sf(f, d1, d2)) < 1e-12);
    const double t = rng.normal(0, 3), df = 1 + 80 * rng.uniform();
    CHECK(std::abs(t_two_sided_p(t, df) - boost_t_two_sided(t, df)) < 1e-12);
  }
}

TEST_CASE("ANOVA hand examples") {
  const std::vector<std::vector<double>> same{{1, 2, 3}, {1, 2, 3}};
  const AnovaOutcome z = anova_oneway(same);
  CHECK(z.F == 0.0);
  CHECK(z.p == 1.0);

  const std::vector<std::vector<double>> g{{1, 2}, {5, 6}};
  // grand mean 3.5; SSB = 2*4 + 2*4 = 16 on 1 df; SSW = 4*0.25 = 1 on 2 df
  const AnovaOutcome a = anova_oneway(g);
  CHECK(a.df_between == 1.0);
  CHECK(a.df_within == 2.0);
  CHECK(a.F == doctest::Approx(32.0).epsilon(1e-14));
  CHECK(std::abs(a.p - boost_f_sf(32.0, 1, 2)) < 1e-9);
  CHECK_FALSE(a.degenerate);

  const std::vector<std::vector<double>> flat{{4, 4}, {4, 4}};
  CHECK_THROWS_AS(anova_oneway(flat), Error);
  const std::vector<std::vector<double>> separated{{1, 1}, {2, 2}};
  const AnovaOutcome d = anova_oneway(separated);
  CHECK(d.degenerate);
  CHECK(d.p == 0.0);
  const std::vector<std::vector<double>> tiny{{1}, {2, 3}};
  CHECK_THROWS_AS(anova_oneway(tiny), Error);
}

TEST_CASE("t-test hand examples") {
  const std::vector<double> a{1, 2}, b{5, 6};
  const TTestResult r = ttest_two_sample(a, b);
  CHECK(r.t == doctest::Approx(-4.0 / std::sqrt(0.5)).epsilon(1e-14));
  CHECK(r.df == 2.0);
  CHECK(std::abs(r.p_two_sided - boost_t_two_sided(r.t, 2)) < 1e-9);
  const TTestResult s = ttest_two_sample(b, a);
  CHECK(s.t == -r.t);
  CHECK(s.p_two_sided == r.p_two_sided);
  const std::vector<double> c{3, 4, 8};
  const TTestResult same = ttest_two_sample(c, c);
  CHECK(same.t == 0.0);
  CHECK(same.p_two_sided == doctest::Approx(1.0));
  const std::vector<double> k{2, 2};
  CHECK_THROWS_AS(ttest_two_sample(k, k), Error);
  CHECK(parse_ttest_variant("welch") == TTestVariant::Welch);
  CHECK_THROWS_AS(parse_ttest_variant("paired"), Error);
}

TEST_CASE("ANOVA and t-tests match Boost on 1000 random datasets") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    std::vector<std::vector<double>> groups;
    for (int g = 0; g < k; ++g) {
      groups.push_back(normals(rng, 2 + rng.below(9), rng.normal(0, 1), 0.5 + rng.uniform()));
    }
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    const AnovaOutcome a = anova_oneway(groups);
    const double f = anova_f_oracle(groups);
    CHECK(std::abs(a.F - f) <= 1e-10 * std::max(1.0, f));
    CHECK(std::abs(a.p - boost_f_sf(f, k - 1, static_cast<double>(n) - k)) < 1e-9);

    const auto& x = groups[0];
    const auto& y = groups[1];
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double mx = mean(x), my = mean(y), vx = sample_variance(x), vy = sample_variance(y);
    const TTestResult pooled = ttest_two_sample(x, y, TTestVariant::Pooled);
    const double sp2 = ((nx - 1) * vx + (ny - 1) * vy) / (nx + ny - 2);
    const double t = (mx - my) / std::sqrt(sp2 * (1 / nx + 1 / ny));
    CHECK(pooled.t == doctest::Approx(t).epsilon(1e-12));
    CHECK(std::abs(pooled.p_two_sided - boost_t_two_sided(t, nx + ny - 2)) < 1e-9);

    const TTestResult welch = ttest_two_sample(x, y, TTestVariant::Welch);
    const double qa = vx / nx, qb = vy / ny;
    const double df = (qa + qb) * (qa + qb) / (qa * qa / (nx - 1) + qb * qb / (ny - 1));
    CHECK(welch.df == doctest::Approx(df).epsilon(1e-12));
    CHECK(std::abs(welch.p_two_sided - boost_t_two_sided((mx - my) / std::sqrt(qa + qb), df)) < 1e-9);

    const std::vector<std::vector<double>> two{x, y};
    const AnovaOutcome a2 = anova_oneway(two);
    CHECK(std::abs(a2.F - pooled.t * pooled.t) <= 1e-10 * std::max(1.0, a2.F));
    CHECK(std::abs(a2.p - pooled.p_two_sided) <= 1e-10);
  }
}

TEST_CASE("ANOVA F is invariant to shift and scale") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> g{normals(rng, 6), normals(rng, 7, 0.5), normals(rng, 5, -0.3)};
    const double f = anova_oneway(g).F;
    const double shift = rng.normal(0, 100), scale = rng.uniform() < 0.5 ? -3.7 : 0.01;
    for (auto& grp : g)
      for (auto& x : grp) x = scale * (x + shift);
    CHECK(anova_oneway(g).F == doctest::Approx(f).epsilon(1e-8));
  }
}

TEST_CASE("Bonferroni examples and monotonicity") {
  std::vector<double> p(100, 0.5);
  p[0] = 0.0004;
  p[1] = 0.02;
  const auto r = bonferroni(p);
  CHECK(r[0].p_bonferroni == doctest::Approx(0.04));
  CHECK(r[0].significant);
  CHECK(r[1].p_bonferroni == 1.0);
  CHECK_FALSE(r[1].significant);
  for (const auto& x : r) CHECK(x.p_bonferroni >= x.p_raw);
  const std::vector<double> ones(10, 1.0);
  for (const auto& x : bonferroni(ones)) CHECK_FALSE(x.significant);

  Rng rng(1);
  std::vector<double> q(60);
  for (auto& x : q) x = std::pow(rng.uniform(), 4) + 1e-12;
  std::size_t prev = q.size() + 1;
  for (double alpha : {0.5, 0.1, 0.05, 0.01, 0.001}) {
    std::size_t n = 0;
    for (const auto& x : bonferroni(q, alpha)) n += x.significant;
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("null calibration of raw and Bonferroni-corrected p-values") {
  Rng rng(99);
  const int sims = 2000, clusters = 100, per_group = 10;
  long raw_hits = 0;
  int family_errors = 0;
  for (int s = 0; s < sims; ++s) {
    std::vector<double> ps(clusters);
    for (int c = 0; c < clusters; ++c) {
      const std::vector<std::vector<double>> g{normals(rng, per_group), normals(rng, per_group)};
      ps[c] = anova_oneway(g).p;
      raw_hits += ps[c] < 0.05;
    }
    bool any = false;
    for (const auto& r : bonferroni(ps)) any = any || r.significant;
    family_errors += any;
  }
  const double raw_rate = static_cast<double>(raw_hits) / (sims * clusters);
  const double fwer = static_cast<double>(family_errors) / sims;
  CHECK(std::abs(raw_rate - 0.05) <= 0.02);
  CHECK(fwer <= 0.05 + 0.01);
}

TEST_CASE("Brown-Forsythe Levene test") {
  const std::vector<std::vector<double>> same{{1, 2, 4}, {1, 2, 4}};
  const LeveneOutcome z = levene_brown_forsythe(same);
  CHECK(z.W == 0.0);
  CHECK(z.p == doctest::Approx(1.0));

  Rng rng(3);
  int equal_rejects = 0, unequal_rejects = 0;
  const int sims = 1000;
  for (int s = 0; s < sims; ++s) {
    const std::vector<std::vector<double>> eq{normals(rng, 20), normals(rng, 20)};
    equal_rejects += levene_brown_forsythe(eq).p < 0.05;
    const std::vector<std::vector<double>> neq{normals(rng, 50), normals(rng, 50, 0.0, std::sqrt(10.0))};
    unequal_rejects += levene_brown_forsythe(neq).p < 0.01;
  }
  CHECK(std::abs(equal_rejects / static_cast<double>(sims) - 0.05) <= 0.02);
  CHECK(unequal_rejects / static_cast<double>(sims) >= 0.95);
}

TEST_CASE("moment diagnostics") {
  const std::vector<double> sym{1, 2, 3, 4, 5};
  CHECK(std::abs(skewness(sym)) < 1e-15);
  CHECK(excess_kurtosis(sym) == doctest::Approx(-1.3));
  const std::vector<double> skewed{0, 0, 0, 10};
  CHECK(skewness(skewed) > 0);
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(sample_variance(std::vector<double>{40, 50, 60}) == 100.0);
}

TEST_CASE("analyze_clusters excludes constant clusters from the correction") {
  Rng rng(8);
  const std::vector<Sex> sexes{Sex::F, Sex::F, Sex::F, Sex::F, Sex::M, Sex::M, Sex::M, Sex::M};
  std::vector<std::vector<double>> cols(4);
  cols[0] = {10, 11, 10.5, 10.2, 5, 5.5, 5.2, 4.9};
  cols[1] = std::vector<double>(8, 0.0);
  cols[2] = normals(rng, 8);
  cols[3] = normals(rng, 8);
  const StatsReport r = analyze_clusters(matrix_of(cols, sexes), 0.05);
  CHECK(r.n_tests == 3);
  CHECK(r.excluded_ids() == std::vector<int>{1});
  CHECK(r.clusters[0].significant);
  CHECK(r.clusters[0].p_bonferroni == doctest::Approx(std::min(1.0, 3 * r.clusters[0].p_raw)));
  CHECK(r.clusters[0].mean_F == doctest::Approx(10.425));
  CHECK(r.clusters[0].n_F == 4);
  CHECK_FALSE(r.clusters[1].significant);
  CHECK(r.to_csv().rfind("cluster_id,F,p_raw,p_bonf,significant,mean_F,mean_M,n_F,n_M\n", 0) == 0);
  CHECK(r.summary()["n_significant"].get<int>() == static_cast<int>(r.significant_ids().size()));
  CHECK_THROWS_AS(analyze_clusters(matrix_of(cols, sexes), 1.5), Error);
}
