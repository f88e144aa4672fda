#include <doctest.h>

#include "perfvox/config.hpp"
#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "test_util.hpp"

using namespace perfvox;

TEST_CASE("defaults mirror the published parameters") {
  const RunConfig c;
  CHECK(c.slic.k == 100);
  CHECK(c.slic.compactness == 10.0);
  CHECK(c.slic.smoothing_sigma_mm == 1.0);
  CHECK(c.margins_mm == std::vector<double>{0.2, 0.5, 1.0, 5.0});
  CHECK(c.folds == 5);
  CHECK(c.alpha == 0.05);
  CHECK(c.vrs_k == 1.0);
  CHECK(c.age_bins == AgeBins::standard());
  CHECK(c.slic.connectivity == Connectivity::Six);
  CHECK(c.slic.perturb_seeds);
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("config text grammar") {
  const RunConfig c = parse_config(
      "# comment line\n"
      "slic.k = 40   # trailing comment\n"
      "\n"
      "  margins_mm=0.5, 2\n"
      "age_bins = coarse\n"
      "net.conv = 3x4\n"
      "net.dense = 16,8\n"
      "classifier = logistic\n"
      "vrs.loocv = true\n"
      "slic.k = 50\n");
  CHECK(c.slic.k == 50);
  CHECK(c.margins_mm == std::vector<double>{0.5, 2.0});
  CHECK(c.age_bins == AgeBins::coarse());
  CHECK(c.net.conv == std::vector<ConvLayerSpec>{{3, 4}});
  CHECK(c.net.dense == std::vector<int>{16, 8});
  CHECK(c.classifier == ClassifierChoice::Logistic);
  CHECK(c.loocv);
  CHECK(parse_config("net.conv = none\n").net.conv.empty());
  CHECK(parse_config("age_bins = 8-30,31-92\n").age_bins.size() == 2);
}

TEST_CASE("config errors name the line and key") {
  try {
    parse_config("slic.k = 10\nbogus.key = 3\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
  }
  try {
    parse_config("slic.compactness = abc\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("slic.compactness") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("just words\n"), Error);
  CHECK_THROWS_AS(parse_config("net.conv = 4y8\n"), Error);
  CHECK_THROWS_AS(parse_config("age_bins = 8-20,15-30\n"), Error);
  CHECK_THROWS_AS(parse_config("vrs.loocv = maybe\n"), Error);
}

TEST_CASE("cross-field validation") {
  auto code_after = [](const std::string& key, const std::string& value) {
    RunConfig c;
    try {
      c.set(key, value);
      validate(c);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code_after("slic.k", "0") == ErrorCode::Config);
  CHECK(code_after("folds", "1") == ErrorCode::Config);
  CHECK(code_after("alpha", "1.5") == ErrorCode::Config);
  CHECK(code_after("vrs.k", "0") == ErrorCode::InvalidK);
  CHECK(code_after("margins_mm", "1,0.5") == ErrorCode::Config);
  CHECK(code_after("jobs", "0") == ErrorCode::Config);
  CHECK(code_after("mask_fraction", "1.2") == ErrorCode::Config);
  CHECK(code_after("net.epochs", "0") == ErrorCode::Config);
  CHECK(code_after("slic.connectivity", "18") == ErrorCode::Config);
  CHECK(code_after("slic.k", "12") == ErrorCode::Io);
}

TEST_CASE("config text round trip") {
  const auto dir = testutil::scratch("config_io");
  RunConfig c;
  c.set("slic.k", "64");
  c.set("net.learning_rate", "0.003");
  c.set("normalization", "mean1");
  c.set("seed", "12345678901");
  c.set("out", "results/run1");
  write_text_file(dir / "run.cfg", c.to_text());
  const RunConfig back = load_config(dir / "run.cfg");
  CHECK(back.to_text() == c.to_text());
  CHECK(back.seed == 12345678901ULL);
  CHECK(back.out == "results/run1");
  CHECK(back.entries() == c.entries());
  CHECK_THROWS_AS(load_config(dir / "missing.cfg"), Error);
}
