#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perfvox/manifest.hpp"

namespace perfvox {

// Row-major examples x features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Binary targets with female as the positive class.
inline constexpr int kFemaleLabel = 1;
inline constexpr int kMaleLabel = 0;
std::vector<int> sex_labels(std::span<const Sex> sexes);

struct ConvLayerSpec {
  int kernel_size = 5;
  int channels = 8;
  bool operator==(const ConvLayerSpec&) const = default;
};

struct NetConfig {
  int input_len = 100;
  std::vector<ConvLayerSpec> conv{{5, 8}, {5, 16}};
  std::vector<int> dense{32};
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 16;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

void validate(const NetConfig& config);

// Same-padded stride-1 1D convolutions with ReLU, flatten, ReLU dense layers, one
// logit. Parameters live in one flat vector: per layer weights then biases, conv
// weights as [out][in][tap], dense weights as [out][in].
class ConvNet {
 public:
  explicit ConvNet(NetConfig config);

  const NetConfig& config() const { return config_; }
  std::size_t num_params() const { return num_params_; }
  // 1 for weights (penalized by l2), 0 for biases.
  const std::vector<std::uint8_t>& weight_mask() const { return weight_mask_; }

  // He-normal weights, zero biases.
  std::vector<double> init_params(std::uint64_t seed) const;

  double logit(std::span<const double> params, std::span<const double> x) const;
  double forward(std::span<const double> params, std::span<const double> x) const;

  // Binary cross-entropy of one example; adds its gradient into `grad`.
  double loss_and_grad(std::span<const double> params, std::span<const double> x, int y,
                       std::span<double> grad) const;

  // mean BCE over rows + l2 * sum of squared weights; gradient written to `grad` when non-empty.
  double objective(std::span<const double> params, const Matrix& x, std::span<const int> y,
                   std::span<double> grad) const;

 private:
  struct Layer {
    bool conv = false;
    int in_channels = 0;
    int out_channels = 0;  // conv channels or dense width
    int kernel = 0;
    std::size_t in_size = 0;
    std::size_t out_size = 0;
    std::size_t w_offset = 0;
    std::size_t b_offset = 0;
    bool relu = true;
  };

  NetConfig config_;
  std::vector<Layer> layers_;
  std::size_t num_params_ = 0;
  std::vector<std::uint8_t> weight_mask_;

  double run(std::span<const double> params, std::span<const double> x, std::vector<std::vector<double>>& acts) const;
  void check_input(std::span<const double> params, std::span<const double> x) const;
};

// Per-column mean and population std of the training rows; zero std becomes 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& x, std::span<const std::size_t> rows);
  std::vector<double> apply(std::span<const double> x) const;
  Matrix apply(const Matrix& x, std::span<const std::size_t> rows) const;
};

enum class ModelKind { ConvNet, Logistic };
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct TrainingHistory {
  std::vector<double> loss;      // per epoch (net) or per iteration (logistic)
  std::vector<double> accuracy;  // training accuracy per epoch; empty for logistic
  double final_grad_norm = 0.0;
  int iterations = 0;
};

struct TrainedModel {
  ModelKind kind = ModelKind::ConvNet;
  NetConfig config;  // input_len used by both kinds; l2 holds the logistic penalty
  std::vector<double> params;
  Standardizer standardizer;
  TrainingHistory history;

  double predict_proba(std::span<const double> raw_features) const;
};

// Mini-batch Adam (0.9 / 0.999) on mean BCE + l2 * ||w||^2 over `train_rows`.
// Throws NonFinite when the loss diverges.
TrainedModel train(const NetConfig& config, const Matrix& x, std::span<const int> y,
                   std::span<const std::size_t> train_rows);

// Gradient of mean BCE + l2 * ||w||^2 for params = [w..., b] on standardized rows.
double logreg_objective(std::span<const double> params, const Matrix& x, std::span<const int> y, double l2,
                        std::span<double> grad);

// Full-batch accelerated gradient descent until the gradient norm drops below
// `grad_tol` or `max_iters` is reached.
TrainedModel train_logreg(const Matrix& x, std::span<const int> y, std::span<const std::size_t> train_rows,
                          double l2 = 1e-2, double grad_tol = 1e-6, int max_iters = 10000);

struct GradientCheckOptions {
  double h = 1e-5;
  std::size_t n_params = 100;
  std::uint64_t seed = 0;
  // Applied to the analytic gradient before comparison (fault injection).
  std::function<void(std::span<double>)> corrupt;
};

// Max over sampled parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
// for the full objective on (x, y) at randomly initialized parameters.
double gradient_check(const NetConfig& config, const Matrix& x, std::span<const int> y,
                      const GradientCheckOptions& options = {});

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

// Confusion counts with female as the positive class.
struct Confusion {
  std::int64_t tp = 0;  // F predicted F
  std::int64_t fn = 0;  // F predicted M
  std::int64_t fp = 0;  // M predicted F
  std::int64_t tn = 0;  // M predicted M

  std::int64_t total() const { return tp + fn + fp + tn; }
  Confusion& operator+=(const Confusion& o);
};

struct EvalReport {
  double accuracy = 0.0;
  ClassMetrics female;
  ClassMetrics male;
  Confusion confusion;
};

EvalReport evaluate_confusion(const Confusion& confusion);
// Probabilities >= 0.5 predict female. Throws LengthMismatch.
EvalReport evaluate(std::span<const double> probabilities, std::span<const int> labels);

// Class-stratified folds: each class is shuffled, the classes are concatenated
// (female first), and position p goes to fold p mod k. Throws DegenerateInput
// when a class has fewer than k members.
std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> test_rows;
  std::vector<double> probabilities;
  EvalReport metrics;
  TrainingHistory history;
};

struct CvOptions {
  ModelKind kind = ModelKind::ConvNet;
  NetConfig net;
  double logreg_l2 = 1e-2;
  int folds = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct CvReport {
  ModelKind kind = ModelKind::ConvNet;
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  std::vector<int> fold_of;  // per example
  EvalReport aggregate;      // pooled over folds
  double mean_fold_accuracy = 0.0;

  std::string to_json() const;
  std::string to_csv() const;
};

// Fold f trains with seed substream_seed(seed, f); folds may run in parallel.
CvReport cross_validate(const Matrix& x, std::span<const int> y, const CvOptions& options);

// JSON header plus a little-endian float64 blob: u64 count followed by the values.
void save_model(const TrainedModel& model, const std::filesystem::path& json_path,
                const std::filesystem::path& blob_path);
TrainedModel load_model(const std::filesystem::path& json_path);

}  // namespace perfvox
