#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "perfvox/age_bins.hpp"
#include "perfvox/classify.hpp"
#include "perfvox/features.hpp"
#include "perfvox/preprocess.hpp"
#include "perfvox/slic.hpp"
#include "perfvox/vrs.hpp"

namespace perfvox {

// Which intensities feed the feature matrix: the raw volumes or the normalized
// volumes that SLIC segments.
enum class FeatureSpace { Raw, Normalized };
FeatureSpace parse_feature_space(std::string_view text);
std::string_view to_string(FeatureSpace space);

enum class ClassifierChoice { ConvNet, Logistic, Both, None };
ClassifierChoice parse_classifier_choice(std::string_view text);
std::string_view to_string(ClassifierChoice choice);

struct RunConfig {
  SlicParams slic;
  std::vector<double> margins_mm = kDefaultMarginsMm;
  AgeBins age_bins = AgeBins::standard();
  NetConfig net;
  double logreg_l2 = 1e-2;
  ClassifierChoice classifier = ClassifierChoice::Both;
  int folds = 5;
  double alpha = 0.05;
  double vrs_k = 1.0;
  CbfWeighting weighting = CbfWeighting::VoxelWeighted;
  bool loocv = false;
  NormalizationMode normalization = NormalizationMode::ZScore;
  bool slic_raw = false;  // segment raw intensities instead of normalized ones
  FeatureSpace feature_space = FeatureSpace::Raw;
  double mask_fraction = kDefaultMaskFraction;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out = "out";

  // Applies one `key = value` setting; throws ConfigError naming the key.
  void set(std::string_view key, std::string_view value);
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
};

// Grammar: one `key = value` per line; `#` starts a comment; blank lines are
// ignored; later lines override earlier ones.
RunConfig parse_config(std::string_view text, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

// Cross-field checks run before any work starts.
void validate(const RunConfig& config);

std::vector<ConvLayerSpec> parse_conv_layers(std::string_view text);  // "5x8,5x16"
std::vector<int> parse_int_list(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);

}  // namespace perfvox
