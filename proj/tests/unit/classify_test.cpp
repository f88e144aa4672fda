#include <doctest.h>

#include <json.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "perfvox/classify.hpp"
#include "perfvox/error.hpp"
#include "test_util.hpp"

using namespace perfvox;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal();
  return Matrix(rows, cols, v);
}

std::vector<int> alternating(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);
  return y;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

}  // namespace

TEST_CASE("forward examples") {
  NetConfig cfg;
  cfg.input_len = 10;
  const ConvNet net(cfg);
  const std::vector<double> zeros(net.num_params(), 0.0);
  const std::vector<double> x(10, 3.0);
  CHECK(net.forward(zeros, x) == 0.5);

  const std::vector<double> p = net.init_params(1);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> xi(10);
    for (auto& v : xi) v = rng.normal(0, 5);
    const double out = net.forward(p, xi);
    CHECK(out > 0.0);
    CHECK(out < 1.0);
  }
  CHECK_THROWS_AS(net.forward(p, std::vector<double>(9, 0.0)), Error);
  CHECK_THROWS_AS(net.forward(std::vector<double>(3, 0.0), x), Error);
}

TEST_CASE("forward pass by hand") {
  NetConfig cfg;
  cfg.input_len = 3;
  cfg.conv = {{3, 1}};
  cfg.dense = {2};
  const ConvNet net(cfg);
  REQUIRE(net.num_params() == 3 + 1 + 6 + 2 + 2 + 1);
  const std::vector<double> p{0, 1, 0, 0.5,              // identity kernel, bias 0.5
                              1, 0, 1, 0, 1, -1, 0, -1,  // dense 2x3 and its biases
                              0.2, 7, -0.5};             // output layer
  const std::vector<double> x{1, -2, 3};
  // conv: [1.5, -1.5, 3.5] -> relu [1.5, 0, 3.5]
  // dense: [1.5 + 3.5, 0 - 3.5 - 1] -> relu [5, 0]
  // logit: 0.2 * 5 - 0.5 = 0.5
  CHECK(net.logit(p, x) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(net.forward(p, x) == doctest::Approx(sigmoid(0.5)).epsilon(1e-15));
  const std::vector<std::uint8_t> expected_mask{1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 0, 0, 1, 1, 0};
  CHECK(net.weight_mask() == expected_mask);
}

TEST_CASE("gradient check across architectures") {
  const std::vector<NetConfig> grid = [] {
    std::vector<NetConfig> g;
    NetConfig base;
    base.input_len = 100;
    g.push_back(base);  // default
    NetConfig c = base;
    c.conv = {{3, 4}};
    c.dense = {16};
    g.push_back(c);
    c.conv = {{5, 8}, {5, 16}, {3, 8}};
    c.dense = {32, 8};
    g.push_back(c);
    c.conv = {};
    c.dense = {32};
    g.push_back(c);
    c.conv = {{7, 2}};
    c.dense = {};
    g.push_back(c);
    c.input_len = 20;
    c.conv = {{1, 3}, {5, 8}};
    c.dense = {4};
    c.l2 = 0.0;
    g.push_back(c);
    return g;
  }();
  for (const auto& cfg : grid) {
    const Matrix x = random_matrix(12, static_cast<std::size_t>(cfg.input_len), 3);
    const auto y = alternating(12);
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      GradientCheckOptions opt;
      opt.seed = seed;
      CHECK(gradient_check(cfg, x, y, opt) < 1e-4);
    }
  }
}

TEST_CASE("gradient check detects corruption") {
  NetConfig cfg;
  cfg.input_len = 30;
  const Matrix x = random_matrix(8, 30, 4);
  const auto y = alternating(8);
  GradientCheckOptions opt;
  opt.corrupt = [](std::span<double> g) {
    for (auto& v : g) v *= 1.1;
  };
  CHECK(gradient_check(cfg, x, y, opt) > 1e-2);
  opt.corrupt = [](std::span<double> g) { g[g.size() - 1] += 0.5; };
  opt.n_params = 1'000'000;
  CHECK(gradient_check(cfg, x, y, opt) > 1e-2);
}

TEST_CASE("bias-only model gradient") {
  NetConfig cfg;
  cfg.input_len = 0;
  cfg.conv = {};
  cfg.dense = {};
  const ConvNet net(cfg);
  CHECK(net.num_params() == 1);
  const Matrix x(5, 0, {});
  const std::vector<int> y{1, 1, 0, 1, 0};
  CHECK(gradient_check(cfg, x, y) < 1e-6);
  // closed form: d/db mean BCE = sigmoid(b) - mean(y)
  const std::vector<double> p{0.3};
  std::vector<double> g(1);
  net.objective(p, x, y, g);
  CHECK(g[0] == doctest::Approx(sigmoid(0.3) - 0.6).epsilon(1e-12));
}

TEST_CASE("training separates a linearly separable set and is deterministic") {
  Rng rng(6);
  std::vector<double> v;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    const double a = rng.normal(), b = rng.normal();
    const double margin = a + 0.5 * b;
    if (std::abs(margin) < 0.2) continue;
    v.push_back(a);
    v.push_back(b);
    y.push_back(margin > 0 ? 1 : 0);
  }
  const Matrix x(y.size(), 2, v);
  NetConfig cfg;
  cfg.input_len = 2;
  cfg.conv = {{1, 4}};
  cfg.dense = {8};
  cfg.learning_rate = 1e-2;
  cfg.seed = 11;
  const auto rows = all_rows(y.size());
  const TrainedModel m = train(cfg, x, y, rows);
  REQUIRE(m.history.accuracy.size() == 200);
  CHECK(m.history.accuracy.back() == 1.0);
  const TrainedModel again = train(cfg, x, y, rows);
  CHECK(again.params == m.params);
  CHECK(again.history.loss == m.history.loss);
  // smoothed loss never rises
  const auto& loss = m.history.loss;
  for (std::size_t start = 10; start + 10 <= loss.size(); start += 10) {
    const double prev = std::accumulate(loss.begin() + start - 10, loss.begin() + start, 0.0);
    const double cur = std::accumulate(loss.begin() + start, loss.begin() + start + 10, 0.0);
    CHECK(cur <= prev + 1e-12);
  }
}

TEST_CASE("training needs two examples per class") {
  NetConfig cfg;
  cfg.input_len = 2;
  const Matrix x(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<int> y{1, 1, 0};
  CHECK_THROWS_AS(train(cfg, x, y, all_rows(3)), Error);
}

TEST_CASE("standardization uses training rows only") {
  const Matrix x = random_matrix(40, 5, 9);
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < 40; i += 3) train_rows.push_back(i);
  const Standardizer s = Standardizer::fit(x, train_rows);
  const Matrix z = s.apply(x, train_rows);
  for (std::size_t c = 0; c < 5; ++c) {
    double m = 0;
    for (std::size_t r = 0; r < z.rows; ++r) m += z.at(r, c);
    CHECK(std::abs(m / static_cast<double>(z.rows)) < 1e-9);
  }
  const std::vector<int> y = alternating(40);
  const TrainedModel lr = train_logreg(x, y, train_rows);
  for (std::size_t c = 0; c < 5; ++c) CHECK(lr.standardizer.mean[c] == s.mean[c]);
  const Matrix flat(3, 1, {2, 2, 2});
  CHECK(Standardizer::fit(flat, all_rows(3)).scale[0] == 1.0);
}

TEST_CASE("logistic regression properties") {
  SUBCASE("symmetric pair") {
    const Matrix x(2, 1, {1.0, -1.0});
    const std::vector<int> y{1, 0};
    const TrainedModel m = train_logreg(x, y, all_rows(2), 0.1);
    CHECK(m.params[0] > 0.0);
    CHECK(std::abs(m.params[1]) < 1e-9);
    CHECK(m.predict_proba(std::vector<double>{0.0}) == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("duplicated rows give the same optimum") {
    const Matrix x = random_matrix(30, 4, 12);
    std::vector<int> y(30);
    Rng rng(1);
    for (auto& v : y) v = static_cast<int>(rng.below(2));
    std::vector<double> dup(x.data);
    dup.insert(dup.end(), x.data.begin(), x.data.end());
    std::vector<int> ydup(y);
    ydup.insert(ydup.end(), y.begin(), y.end());
    const TrainedModel a = train_logreg(x, y, all_rows(30), 0.05, 1e-10);
    const TrainedModel b = train_logreg(Matrix(60, 4, dup), ydup, all_rows(60), 0.05, 1e-10);
    for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(b.params[i] == doctest::Approx(a.params[i]).epsilon(1e-7));
  }
  SUBCASE("gradient vanishes at the optimum") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Matrix x = random_matrix(80, 12, seed);
      std::vector<int> y(80);
      Rng rng(seed + 50);
      for (std::size_t i = 0; i < 80; ++i) y[i] = x.at(i, 0) + rng.normal() > 0 ? 1 : 0;
      const auto rows = all_rows(80);
      const TrainedModel m = train_logreg(x, y, rows, 1e-2);
      const Matrix z = m.standardizer.apply(x, rows);
      std::vector<double> g(m.params.size());
      logreg_objective(m.params, z, y, 1e-2, g);
      double norm = 0;
      for (double v : g) norm += v * v;
      CHECK(std::sqrt(norm) < 1e-6);
    }
  }
}

TEST_CASE("stratified folds") {
  SUBCASE("exact proportionality") {
    std::vector<int> y(20);
    for (int i = 0; i < 20; ++i) y[i] = i < 10 ? kFemaleLabel : kMaleLabel;
    const auto folds = stratified_kfold(y, 5, 3);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
      int nf = 0;
      for (auto i : f) nf += y[i] == kFemaleLabel;
      CHECK(f.size() == 4);
      CHECK(nf == 2);
    }
  }
  SUBCASE("97 F and 89 M") {
    std::vector<int> y;
    for (int i = 0; i < 97; ++i) y.push_back(kFemaleLabel);
    for (int i = 0; i < 89; ++i) y.push_back(kMaleLabel);
    Rng rng(0);
    shuffle(std::span<int>(y), rng);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto folds = stratified_kfold(y, 5, seed);
      std::multiset<std::size_t> sizes;
      std::set<std::size_t> seen;
      for (const auto& f : folds) {
        sizes.insert(f.size());
        int nf = 0;
        for (auto i : f) {
          nf += y[i] == kFemaleLabel;
          CHECK(seen.insert(i).second);
        }
        const int nm = static_cast<int>(f.size()) - nf;
        CHECK((nf == 19 || nf == 20));
        CHECK((nm == 17 || nm == 18));
        CHECK(std::is_sorted(f.begin(), f.end()));
      }
      CHECK(seen.size() == y.size());
      CHECK(sizes == std::multiset<std::size_t>{37, 37, 37, 37, 38});
      CHECK(stratified_kfold(y, 5, seed) == folds);
    }
    CHECK_FALSE(stratified_kfold(y, 5, 0) == stratified_kfold(y, 5, 1));
  }
  SUBCASE("class smaller than k") {
    const std::vector<int> y{1, 1, 1, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(stratified_kfold(y, 4, 0), Error);
  }
}

TEST_CASE("evaluate metrics") {
  SUBCASE("perfect") {
    const std::vector<double> p{0.9, 0.8, 0.1, 0.2};
    const std::vector<int> y{1, 1, 0, 0};
    const EvalReport r = evaluate(p, y);
    CHECK(r.accuracy == 1.0);
    CHECK(r.female.precision == 1.0);
    CHECK(r.female.recall == 1.0);
    CHECK(r.female.f1 == 1.0);
    CHECK(r.male.precision == 1.0);
    CHECK(r.male.recall == 1.0);
  }
  SUBCASE("hand confusion") {
    const EvalReport r = evaluate_confusion({29, 1, 2, 28});
    CHECK(r.female.precision == doctest::Approx(29.0 / 31.0));
    CHECK(r.female.recall == doctest::Approx(29.0 / 30.0));
    CHECK(r.male.precision == doctest::Approx(28.0 / 29.0));
    CHECK(r.male.recall == doctest::Approx(28.0 / 30.0));
    CHECK(r.accuracy == doctest::Approx(57.0 / 60.0));
    const double pf = 29.0 / 31.0, rf = 29.0 / 30.0;
    CHECK(r.female.f1 == doctest::Approx(2 * pf * rf / (pf + rf)));
  }
  SUBCASE("single predicted class") {
    const std::vector<double> p{0.9, 0.9, 0.9, 0.9};
    const std::vector<int> y{1, 0, 1, 0};
    const EvalReport r = evaluate(p, y);
    CHECK(r.female.recall == 1.0);
    CHECK(r.male.recall == 0.0);
    CHECK(r.male.precision == 0.0);
    CHECK(r.male.precision_undefined);
    CHECK(r.accuracy == doctest::Approx(0.5));
  }
  SUBCASE("threshold is inclusive at 0.5") {
    const std::vector<double> p{0.5};
    const std::vector<int> y{1};
    CHECK(evaluate(p, y).confusion.tp == 1);
  }
  SUBCASE("order invariance and accuracy identity") {
    Rng rng(3);
    std::vector<double> p(50);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      p[i] = rng.uniform();
      y[i] = static_cast<int>(rng.below(2));
    }
    const EvalReport a = evaluate(p, y);
    CHECK(a.accuracy == static_cast<double>(a.confusion.tp + a.confusion.tn) / a.confusion.total());
    std::vector<std::size_t> order = all_rows(50);
    shuffle(std::span<std::size_t>(order), rng);
    std::vector<double> p2(50);
    std::vector<int> y2(50);
    for (std::size_t i = 0; i < 50; ++i) {
      p2[i] = p[order[i]];
      y2[i] = y[order[i]];
    }
    const EvalReport b = evaluate(p2, y2);
    CHECK(b.accuracy == a.accuracy);
    CHECK(b.female.f1 == a.female.f1);
    CHECK(b.male.f1 == a.male.f1);
  }
  CHECK_THROWS_AS(evaluate(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);
}

TEST_CASE("cross-validation report") {
  const Matrix x = random_matrix(60, 6, 21);
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = x.at(i, 2) > 0 ? 1 : 0;
  CvOptions opt;
  opt.kind = ModelKind::Logistic;
  opt.seed = 4;
  const CvReport r = cross_validate(x, y, opt);
  CHECK(r.folds.size() == 5);
  CHECK(r.aggregate.confusion.total() == 60);
  std::int64_t held_out = 0;
  for (const auto& f : r.folds) {
    CHECK(f.metrics.confusion.total() == static_cast<std::int64_t>(f.test_rows.size()));
    held_out += f.metrics.confusion.total();
    for (auto row : f.test_rows) CHECK(r.fold_of[row] == f.fold);
  }
  CHECK(held_out == 60);
  CHECK(r.aggregate.accuracy > 0.85);
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.contains("folds"));
  opt.jobs = 3;
  CHECK(cross_validate(x, y, opt).to_json() == r.to_json());
}

TEST_CASE("shuffled labels give chance-level accuracy") {
  const Matrix x = random_matrix(100, 20, 31);
  std::vector<int> y = alternating(100);
  Rng rng(77);
  shuffle(std::span<int>(y), rng);
  CvOptions opt;
  opt.kind = ModelKind::ConvNet;
  opt.net.input_len = 20;
  opt.net.epochs = 60;
  opt.seed = 5;
  const double conv = cross_validate(x, y, opt).aggregate.accuracy;
  CHECK(std::abs(conv - 0.5) <= 0.15);
  opt.kind = ModelKind::Logistic;
  const double lin = cross_validate(x, y, opt).aggregate.accuracy;
  CHECK(std::abs(lin - 0.5) <= 0.15);
}

TEST_CASE("model files round trip") {
  const auto dir = testutil::scratch("model_io");
  const Matrix x = random_matrix(20, 8, 5);
  const auto y = alternating(20);
  NetConfig cfg;
  cfg.input_len = 8;
  cfg.conv = {{3, 2}};
  cfg.dense = {4};
  cfg.epochs = 5;
  const TrainedModel net = train(cfg, x, y, all_rows(20));
  save_model(net, dir / "net.json", dir / "net.bin");
  const TrainedModel back = load_model(dir / "net.json");
  CHECK(back.kind == ModelKind::ConvNet);
  CHECK(back.params == net.params);
  CHECK(back.standardizer.mean == net.standardizer.mean);
  for (std::size_t i = 0; i < 20; ++i) CHECK(back.predict_proba(x.row(i)) == net.predict_proba(x.row(i)));

  const TrainedModel lr = train_logreg(x, y, all_rows(20));
  save_model(lr, dir / "lr.json", dir / "lr.bin");
  const TrainedModel lb = load_model(dir / "lr.json");
  CHECK(lb.kind == ModelKind::Logistic);
  for (std::size_t i = 0; i < 20; ++i) CHECK(lb.predict_proba(x.row(i)) == lr.predict_proba(x.row(i)));

  CHECK(parse_model_kind("cnn") == ModelKind::ConvNet);
  CHECK_THROWS_AS(parse_model_kind("svm"), Error);
  NetConfig bad;
  bad.conv = {{4, 8}};
  CHECK_THROWS_AS(validate(bad), Error);
}
