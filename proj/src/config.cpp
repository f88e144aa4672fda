#include "perfvox/config.hpp"

#include <cmath>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"

namespace perfvox {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(std::string_view v, std::string_view key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::Config, std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + format_double(x);
  return s;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

}  // namespace

FeatureSpace parse_feature_space(std::string_view text) {
  if (text == "raw") return FeatureSpace::Raw;
  if (text == "normalized") return FeatureSpace::Normalized;
  throw Error(ErrorCode::Config, "feature_space must be raw or normalized, got '" + std::string(text) + "'");
}

std::string_view to_string(FeatureSpace space) { return space == FeatureSpace::Raw ? "raw" : "normalized"; }

ClassifierChoice parse_classifier_choice(std::string_view text) {
  if (text == "convnet") return ClassifierChoice::ConvNet;
  if (text == "logistic") return ClassifierChoice::Logistic;
  if (text == "both") return ClassifierChoice::Both;
  if (text == "none") return ClassifierChoice::None;
  throw Error(ErrorCode::Config, "classifier must be convnet, logistic, both or none, got '" + std::string(text) + "'");
}

std::string_view to_string(ClassifierChoice choice) {
  switch (choice) {
    case ClassifierChoice::ConvNet: return "convnet";
    case ClassifierChoice::Logistic: return "logistic";
    case ClassifierChoice::Both: return "both";
    case ClassifierChoice::None: return "none";
  }
  return "both";
}

std::vector<ConvLayerSpec> parse_conv_layers(std::string_view text) {
  std::vector<ConvLayerSpec> out;
  if (trim(text).empty() || trim(text) == "none") return out;
  for (const auto& f : split_csv_line(text)) {
    const auto x = f.find('x');
    if (x == std::string::npos) throw Error(ErrorCode::Config, "conv layer '" + f + "' must look like 5x8");
    out.push_back({static_cast<int>(parse_int(f.substr(0, x), "kernel")),
                   static_cast<int>(parse_int(f.substr(x + 1), "channels"))});
  }
  return out;
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  if (trim(text).empty() || trim(text) == "none") return out;
  for (const auto& f : split_csv_line(text)) out.push_back(static_cast<int>(parse_int(f, "list entry")));
  return out;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& f : split_csv_line(text)) out.push_back(parse_double(f, "list entry"));
  return out;
}

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  const std::string k(key);
  try {
    auto as_int = [&] { return static_cast<int>(parse_int(v, k)); };
    auto as_double = [&] { return parse_double(v, k); };
    if (k == "slic.k") slic.k = as_int();
    else if (k == "slic.compactness") slic.compactness = as_double();
    else if (k == "slic.sigma_mm") slic.smoothing_sigma_mm = as_double();
    else if (k == "slic.max_iters") slic.max_iters = as_int();
    else if (k == "slic.tol") slic.tol = as_double();
    else if (k == "slic.connectivity") slic.connectivity = parse_connectivity(as_int());
    else if (k == "slic.perturb_seeds") slic.perturb_seeds = parse_bool(v, k);
    else if (k == "slic.enforce_connectivity") slic.enforce_connectivity = parse_bool(v, k);
    else if (k == "margins_mm") margins_mm = parse_double_list(v);
    else if (k == "age_bins") age_bins = AgeBins::preset(v);
    else if (k == "net.conv") net.conv = parse_conv_layers(v);
    else if (k == "net.dense") net.dense = parse_int_list(v);
    else if (k == "net.learning_rate") net.learning_rate = as_double();
    else if (k == "net.epochs") net.epochs = as_int();
    else if (k == "net.batch_size") net.batch_size = as_int();
    else if (k == "net.l2") net.l2 = as_double();
    else if (k == "logreg.l2") logreg_l2 = as_double();
    else if (k == "classifier") classifier = parse_classifier_choice(v);
    else if (k == "folds") folds = as_int();
    else if (k == "alpha") alpha = as_double();
    else if (k == "vrs.k") vrs_k = as_double();
    else if (k == "vrs.weighting") weighting = parse_cbf_weighting(v);
    else if (k == "vrs.loocv") loocv = parse_bool(v, k);
    else if (k == "normalization") normalization = parse_normalization_mode(v);
    else if (k == "slic.raw") slic_raw = parse_bool(v, k);
    else if (k == "feature_space") feature_space = parse_feature_space(v);
    else if (k == "mask_fraction") mask_fraction = as_double();
    else if (k == "seed") seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "jobs") jobs = as_int();
    else if (k == "out") out = v;
    else throw Error(ErrorCode::Config, "unknown setting '" + k + "'");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config && std::string_view(e.detail()).find(k) != std::string_view::npos) throw;
    throw Error(ErrorCode::Config, k + ": " + e.detail());
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::string conv;
  for (const auto& l : net.conv) conv += (conv.empty() ? "" : ",") + std::to_string(l.kernel_size) + "x" +
                                         std::to_string(l.channels);
  return {
      {"slic.k", std::to_string(slic.k)},
      {"slic.compactness", format_double(slic.compactness)},
      {"slic.sigma_mm", format_double(slic.smoothing_sigma_mm)},
      {"slic.max_iters", std::to_string(slic.max_iters)},
      {"slic.tol", format_double(slic.tol)},
      {"slic.connectivity", std::to_string(static_cast<int>(slic.connectivity))},
      {"slic.perturb_seeds", slic.perturb_seeds ? "true" : "false"},
      {"slic.enforce_connectivity", slic.enforce_connectivity ? "true" : "false"},
      {"margins_mm", join(margins_mm)},
      {"age_bins", age_bins.to_string()},
      {"net.conv", conv.empty() ? "none" : conv},
      {"net.dense", net.dense.empty() ? "none" : join(net.dense)},
      {"net.learning_rate", format_double(net.learning_rate)},
      {"net.epochs", std::to_string(net.epochs)},
      {"net.batch_size", std::to_string(net.batch_size)},
      {"net.l2", format_double(net.l2)},
      {"logreg.l2", format_double(logreg_l2)},
      {"classifier", std::string(to_string(classifier))},
      {"folds", std::to_string(folds)},
      {"alpha", format_double(alpha)},
      {"vrs.k", format_double(vrs_k)},
      {"vrs.weighting", std::string(to_string(weighting))},
      {"vrs.loocv", loocv ? "true" : "false"},
      {"normalization", std::string(to_string(normalization))},
      {"slic.raw", slic_raw ? "true" : "false"},
      {"feature_space", std::string(to_string(feature_space))},
      {"mask_fraction", format_double(mask_fraction)},
      {"seed", std::to_string(seed)},
      {"jobs", std::to_string(jobs)},
      {"out", out},
  };
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : entries()) s += k + " = " + v + "\n";
  return s;
}

RunConfig parse_config(std::string_view text, const RunConfig& base) {
  RunConfig cfg = base;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::Config, "line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, "line " + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  try {
    return parse_config(read_text_file(path), base);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(ErrorCode::Config, path.string() + ": " + e.detail());
  }
}

void validate(const RunConfig& c) {
  validate(c.slic);
  if (c.margins_mm.empty()) throw Error(ErrorCode::Config, "margins_mm: at least one margin is required");
  for (std::size_t i = 0; i < c.margins_mm.size(); ++i) {
    if (!(c.margins_mm[i] > 0.0) || (i > 0 && c.margins_mm[i] <= c.margins_mm[i - 1])) {
      throw Error(ErrorCode::Config, "margins_mm must be positive and strictly ascending");
    }
  }
  NetConfig net = c.net;
  net.input_len = c.slic.k;
  validate(net);
  if (!(c.logreg_l2 >= 0.0)) throw Error(ErrorCode::Config, "logreg.l2 must be >= 0");
  if (c.folds < 2) throw Error(ErrorCode::Config, "folds must be >= 2");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw Error(ErrorCode::Config, "alpha must be in (0, 1)");
  if (!std::isfinite(c.vrs_k) || c.vrs_k <= 0.0) throw Error(ErrorCode::InvalidK, "vrs.k must be > 0");
  if (!(c.mask_fraction > 0.0 && c.mask_fraction < 1.0)) {
    throw Error(ErrorCode::Config, "mask_fraction must be in (0, 1)");
  }
  if (c.jobs < 1) throw Error(ErrorCode::Config, "jobs must be >= 1");
  if (c.out.empty()) throw Error(ErrorCode::Config, "out must not be empty");
}

}  // namespace perfvox
