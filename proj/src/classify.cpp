#include "perfvox/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "perfvox/parallel.hpp"
#include "perfvox/rng.hpp"

namespace perfvox {

using nlohmann::json;

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) - y z
double bce_from_logit(double z, int y) {
  return std::max(z, 0.0) - static_cast<double>(y) * z + std::log1p(std::exp(-std::abs(z)));
}

void require_binary(std::span<const int> y) {
  for (int v : y) {
    if (v != 0 && v != 1) throw Error(ErrorCode::Domain, "labels must be 0 or 1");
  }
}

void require_two_per_class(std::span<const int> y, std::span<const std::size_t> rows) {
  std::size_t pos = 0;
  for (std::size_t r : rows) pos += static_cast<std::size_t>(y[r]);
  if (pos < 2 || rows.size() - pos < 2) {
    throw Error(ErrorCode::DegenerateInput, "training split needs at least 2 examples per class (got " +
                                                std::to_string(pos) + " F, " + std::to_string(rows.size() - pos) +
                                                " M)");
  }
}

double l2_penalty(std::span<const double> params, const std::vector<std::uint8_t>& weights, double l2,
                  std::span<double> grad) {
  double sum = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!weights[i]) continue;
    sum += params[i] * params[i];
    if (!grad.empty()) grad[i] += 2.0 * l2 * params[i];
  }
  return l2 * sum;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw Error(ErrorCode::ShapeMismatch, "matrix data length does not match rows x cols");
}

std::vector<int> sex_labels(std::span<const Sex> sexes) {
  std::vector<int> out;
  out.reserve(sexes.size());
  for (Sex s : sexes) out.push_back(s == Sex::F ? kFemaleLabel : kMaleLabel);
  return out;
}

void validate(const NetConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
  if (c.input_len < 0) fail("input_len must be >= 0");
  for (const auto& l : c.conv) {
    if (l.kernel_size < 1 || l.kernel_size % 2 == 0) fail("conv kernel_size must be odd and positive");
    if (l.channels < 1) fail("conv channels must be >= 1");
  }
  for (int w : c.dense) {
    if (w < 1) fail("dense widths must be >= 1");
  }
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) fail("learning_rate must be > 0");
  if (c.epochs < 1) fail("epochs must be >= 1");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.l2 >= 0.0) || !std::isfinite(c.l2)) fail("l2 must be >= 0");
}

ConvNet::ConvNet(NetConfig config) : config_(std::move(config)) {
  validate(config_);
  const auto len = static_cast<std::size_t>(config_.input_len);
  std::size_t offset = 0;
  int channels = 1;
  auto add = [&](Layer layer, std::size_t n_weights) {
    layer.w_offset = offset;
    layer.b_offset = offset + n_weights;
    offset = layer.b_offset + static_cast<std::size_t>(layer.out_channels);
    weight_mask_.insert(weight_mask_.end(), n_weights, 1);
    weight_mask_.insert(weight_mask_.end(), static_cast<std::size_t>(layer.out_channels), 0);
    layers_.push_back(layer);
  };
  for (const auto& spec : config_.conv) {
    Layer l;
    l.conv = true;
    l.in_channels = channels;
    l.out_channels = spec.channels;
    l.kernel = spec.kernel_size;
    l.in_size = static_cast<std::size_t>(channels) * len;
    l.out_size = static_cast<std::size_t>(spec.channels) * len;
    add(l, static_cast<std::size_t>(spec.channels * channels * spec.kernel_size));
    channels = spec.channels;
  }
  std::size_t flat = static_cast<std::size_t>(channels) * len;
  for (int width : config_.dense) {
    Layer l;
    l.out_channels = width;
    l.in_size = flat;
    l.out_size = static_cast<std::size_t>(width);
    add(l, l.in_size * l.out_size);
    flat = l.out_size;
  }
  Layer out;
  out.out_channels = 1;
  out.in_size = flat;
  out.out_size = 1;
  out.relu = false;
  add(out, flat);
  num_params_ = offset;
}

std::vector<double> ConvNet::init_params(std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<double> p(num_params_, 0.0);
  for (const auto& l : layers_) {
    const double fan_in = l.conv ? static_cast<double>(l.in_channels * l.kernel) : static_cast<double>(l.in_size);
    const double sd = fan_in > 0.0 ? std::sqrt((l.relu ? 2.0 : 1.0) / fan_in) : 0.0;
    for (std::size_t i = l.w_offset; i < l.b_offset; ++i) p[i] = rng.normal(0.0, sd);
  }
  return p;
}

void ConvNet::check_input(std::span<const double> params, std::span<const double> x) const {
  if (params.size() != num_params_) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(num_params_) + " parameters, got " +
                                              std::to_string(params.size()));
  }
  if (x.size() != static_cast<std::size_t>(config_.input_len)) {
    throw Error(ErrorCode::ShapeMismatch, "expected input of length " + std::to_string(config_.input_len) +
                                              ", got " + std::to_string(x.size()));
  }
}

double ConvNet::run(std::span<const double> params, std::span<const double> x,
                    std::vector<std::vector<double>>& acts) const {
  const auto len = static_cast<std::ptrdiff_t>(config_.input_len);
  acts.resize(layers_.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const double* w = params.data() + l.w_offset;
    const double* b = params.data() + l.b_offset;
    const std::vector<double>& in = acts[li];
    std::vector<double>& out = acts[li + 1];
    out.assign(l.out_size, 0.0);
    if (l.conv) {
      const std::ptrdiff_t pad = l.kernel / 2;
      for (int o = 0; o < l.out_channels; ++o) {
        double* z = out.data() + o * len;
        std::fill(z, z + len, b[o]);
        for (int c = 0; c < l.in_channels; ++c) {
          const double* a = in.data() + c * len;
          for (int j = 0; j < l.kernel; ++j) {
            const double wv = w[(o * l.in_channels + c) * l.kernel + j];
            const std::ptrdiff_t off = j - pad;
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t t1 = std::min(len, len - off);
            for (std::ptrdiff_t t = t0; t < t1; ++t) z[t] += wv * a[t + off];
          }
        }
      }
    } else {
      for (std::size_t o = 0; o < l.out_size; ++o) {
        const double* row = w + o * l.in_size;
        double z = b[o];
        for (std::size_t i = 0; i < l.in_size; ++i) z += row[i] * in[i];
        out[o] = z;
      }
    }
    if (l.relu) {
      for (double& v : out) v = std::max(0.0, v);
    }
  }
  return acts.back()[0];
}

double ConvNet::logit(std::span<const double> params, std::span<const double> x) const {
  check_input(params, x);
  std::vector<std::vector<double>> acts;
  return run(params, x, acts);
}

double ConvNet::forward(std::span<const double> params, std::span<const double> x) const {
  return sigmoid(logit(params, x));
}

double ConvNet::loss_and_grad(std::span<const double> params, std::span<const double> x, int y,
                              std::span<double> grad) const {
  check_input(params, x);
  if (grad.size() != num_params_) throw Error(ErrorCode::ShapeMismatch, "gradient buffer has the wrong length");
  std::vector<std::vector<double>> acts;
  const double z = run(params, x, acts);
  const auto len = static_cast<std::ptrdiff_t>(config_.input_len);

  std::vector<double> delta{sigmoid(z) - static_cast<double>(y)};
  std::vector<double> d_in;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const double* w = params.data() + l.w_offset;
    double* gw = grad.data() + l.w_offset;
    double* gb = grad.data() + l.b_offset;
    const std::vector<double>& in = acts[li];
    const bool need_input_grad = li > 0;
    d_in.assign(need_input_grad ? l.in_size : 0, 0.0);
    if (l.conv) {
      const std::ptrdiff_t pad = l.kernel / 2;
      for (int o = 0; o < l.out_channels; ++o) {
        const double* d = delta.data() + o * len;
        double sum = 0.0;
        for (std::ptrdiff_t t = 0; t < len; ++t) sum += d[t];
        gb[o] += sum;
        for (int c = 0; c < l.in_channels; ++c) {
          const double* a = in.data() + c * len;
          for (int j = 0; j < l.kernel; ++j) {
            const std::size_t wi = static_cast<std::size_t>((o * l.in_channels + c) * l.kernel + j);
            const std::ptrdiff_t off = j - pad;
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
            const std::ptrdiff_t t1 = std::min(len, len - off);
            double g = 0.0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) g += d[t] * a[t + off];
            gw[wi] += g;
            if (need_input_grad) {
              double* da = d_in.data() + c * len;
              for (std::ptrdiff_t t = t0; t < t1; ++t) da[t + off] += w[wi] * d[t];
            }
          }
        }
      }
    } else {
      for (std::size_t o = 0; o < l.out_size; ++o) {
        const double d = delta[o];
        gb[o] += d;
        const double* row = w + o * l.in_size;
        double* grow = gw + o * l.in_size;
        for (std::size_t i = 0; i < l.in_size; ++i) grow[i] += d * in[i];
        if (need_input_grad) {
          for (std::size_t i = 0; i < l.in_size; ++i) d_in[i] += row[i] * d;
        }
      }
    }
    if (!need_input_grad) break;
    // acts[li] is the ReLU output of layer li - 1.
    for (std::size_t i = 0; i < d_in.size(); ++i) {
      if (in[i] <= 0.0) d_in[i] = 0.0;
    }
    delta.swap(d_in);
  }
  return bce_from_logit(z, y);
}

double ConvNet::objective(std::span<const double> params, const Matrix& x, std::span<const int> y,
                          std::span<double> grad) const {
  if (x.rows != y.size()) throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  if (x.rows == 0) throw Error(ErrorCode::DegenerateInput, "objective needs at least one example");
  std::vector<double> g(num_params_, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows; ++r) loss += loss_and_grad(params, x.row(r), y[r], g);
  const double inv = 1.0 / static_cast<double>(x.rows);
  for (double& v : g) v *= inv;
  const double penalty = l2_penalty(params, weight_mask_, config_.l2, g);
  if (!grad.empty()) std::copy(g.begin(), g.end(), grad.begin());
  return loss * inv + penalty;
}

Standardizer Standardizer::fit(const Matrix& x, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error(ErrorCode::DegenerateInput, "cannot standardize an empty training set");
  Standardizer s;
  s.mean.assign(x.cols, 0.0);
  s.scale.assign(x.cols, 0.0);
  const double n = static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < x.cols; ++c) s.mean[c] += x.at(r, c);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double d = x.at(r, c) - s.mean[c];
      s.scale[c] += d * d;
    }
  }
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "feature length does not match standardizer");
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = (x[c] - mean[c]) / scale[c];
  return out;
}

Matrix Standardizer::apply(const Matrix& x, std::span<const std::size_t> rows) const {
  std::vector<double> data;
  data.reserve(rows.size() * x.cols);
  for (std::size_t r : rows) {
    auto v = apply(x.row(r));
    data.insert(data.end(), v.begin(), v.end());
  }
  return Matrix(rows.size(), x.cols, std::move(data));
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::ConvNet ? "convnet" : "logistic"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "convnet" || text == "cnn") return ModelKind::ConvNet;
  if (text == "logistic" || text == "logreg") return ModelKind::Logistic;
  throw Error(ErrorCode::Config, "model must be convnet or logistic, got '" + std::string(text) + "'");
}

double TrainedModel::predict_proba(std::span<const double> raw_features) const {
  const auto x = standardizer.apply(raw_features);
  if (kind == ModelKind::ConvNet) return ConvNet(config).forward(params, x);
  if (params.size() != x.size() + 1) throw Error(ErrorCode::ShapeMismatch, "logistic model has the wrong length");
  double z = params.back();
  for (std::size_t i = 0; i < x.size(); ++i) z += params[i] * x[i];
  return sigmoid(z);
}

TrainedModel train(const NetConfig& config, const Matrix& x, std::span<const int> y,
                   std::span<const std::size_t> train_rows) {
  validate(config);
  if (x.rows != y.size()) throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  if (x.cols != static_cast<std::size_t>(config.input_len)) {
    throw Error(ErrorCode::ShapeMismatch, "feature width " + std::to_string(x.cols) + " != input_len " +
                                              std::to_string(config.input_len));
  }
  require_binary(y);
  require_two_per_class(y, train_rows);

  const ConvNet net(config);
  TrainedModel model;
  model.kind = ModelKind::ConvNet;
  model.config = config;
  model.standardizer = Standardizer::fit(x, train_rows);
  const Matrix xs = model.standardizer.apply(x, train_rows);
  std::vector<int> ys;
  for (std::size_t r : train_rows) ys.push_back(y[r]);

  std::vector<double> p = net.init_params(config.seed);
  const std::size_t np = p.size();
  std::vector<double> m(np, 0.0), v(np, 0.0), g(np, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  Rng rng(substream_seed(config.seed, 1));
  std::vector<std::size_t> order(xs.rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> acts;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::fill(g.begin(), g.end(), 0.0);
      double loss = 0.0;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t r = order[j];
        loss += net.loss_and_grad(p, xs.row(r), ys[r], g);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& gv : g) gv *= inv;
      const double objective = loss * inv + l2_penalty(p, net.weight_mask(), config.l2, g);
      if (!std::isfinite(objective) || !std::isfinite(norm2(g))) {
        throw Error(ErrorCode::NonFinite, "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                              std::to_string(batch) + " (objective " + format_double(objective) +
                                              ", learning_rate " + format_double(config.learning_rate) + ")");
      }
      epoch_loss += objective * static_cast<double>(end - start);
      b1t *= beta1;
      b2t *= beta2;
      for (std::size_t i = 0; i < np; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / (1.0 - b1t);
        const double vhat = v[i] / (1.0 - b2t);
        p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
    }
    for (std::size_t r = 0; r < xs.rows; ++r) {
      const bool pred = net.logit(p, xs.row(r)) >= 0.0;
      if (pred == (ys[r] == kFemaleLabel)) ++correct;
    }
    model.history.loss.push_back(epoch_loss / static_cast<double>(xs.rows));
    model.history.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(xs.rows));
  }
  model.history.iterations = config.epochs;
  model.params = std::move(p);
  return model;
}

double logreg_objective(std::span<const double> params, const Matrix& x, std::span<const int> y, double l2,
                        std::span<double> grad) {
  const std::size_t d = x.cols;
  if (params.size() != d + 1) throw Error(ErrorCode::ShapeMismatch, "logistic parameters must have length d + 1");
  if (x.rows != y.size()) throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  const double inv = 1.0 / static_cast<double>(x.rows);
  std::vector<double> g(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto row = x.row(r);
    double z = params[d];
    for (std::size_t c = 0; c < d; ++c) z += params[c] * row[c];
    loss += bce_from_logit(z, y[r]);
    const double e = sigmoid(z) - static_cast<double>(y[r]);
    for (std::size_t c = 0; c < d; ++c) g[c] += e * row[c];
    g[d] += e;
  }
  double penalty = 0.0;
  for (std::size_t c = 0; c <= d; ++c) g[c] *= inv;
  for (std::size_t c = 0; c < d; ++c) {
    penalty += params[c] * params[c];
    g[c] += 2.0 * l2 * params[c];
  }
  if (!grad.empty()) std::copy(g.begin(), g.end(), grad.begin());
  return loss * inv + l2 * penalty;
}

TrainedModel train_logreg(const Matrix& x, std::span<const int> y, std::span<const std::size_t> train_rows,
                          double l2, double grad_tol, int max_iters) {
  if (x.rows != y.size()) throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  if (!(l2 >= 0.0)) throw Error(ErrorCode::Config, "logistic l2 must be >= 0");
  require_binary(y);
  if (train_rows.empty()) throw Error(ErrorCode::DegenerateInput, "empty training split");

  TrainedModel model;
  model.kind = ModelKind::Logistic;
  model.config.input_len = static_cast<int>(x.cols);
  model.config.conv.clear();
  model.config.dense.clear();
  model.config.l2 = l2;
  model.standardizer = Standardizer::fit(x, train_rows);
  const Matrix xs = model.standardizer.apply(x, train_rows);
  std::vector<int> ys;
  for (std::size_t r : train_rows) ys.push_back(y[r]);
  const std::size_t d = xs.cols;

  // Lipschitz constant of the gradient: lambda_max(A^T A / n) / 4 + 2 l2, with A = [X 1].
  std::vector<double> v(d + 1, 1.0), av(d + 1);
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    std::fill(av.begin(), av.end(), 0.0);
    for (std::size_t r = 0; r < xs.rows; ++r) {
      const auto row = xs.row(r);
      double s = v[d];
      for (std::size_t c = 0; c < d; ++c) s += row[c] * v[c];
      for (std::size_t c = 0; c < d; ++c) av[c] += s * row[c];
      av[d] += s;
    }
    for (double& a : av) a /= static_cast<double>(xs.rows);
    const double nv = norm2(av);
    if (nv == 0.0) break;
    lambda = nv / norm2(v);
    for (std::size_t c = 0; c <= d; ++c) v[c] = av[c] / nv;
  }
  const double lipschitz = 1.05 * lambda / 4.0 + 2.0 * l2;
  const double step = 1.0 / lipschitz;

  std::vector<double> w(d + 1, 0.0), yk = w, w_next(d + 1), g(d + 1);
  double t = 1.0;
  int it = 0;
  double gnorm = 0.0;
  for (; it < max_iters; ++it) {
    const double f = logreg_objective(yk, xs, ys, l2, g);
    gnorm = norm2(g);
    model.history.loss.push_back(f);
    if (gnorm < grad_tol) break;
    double restart = 0.0;
    for (std::size_t c = 0; c <= d; ++c) {
      w_next[c] = yk[c] - step * g[c];
      restart += g[c] * (w_next[c] - w[c]);
    }
    if (restart > 0.0) t = 1.0;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double mom = (t - 1.0) / t_next;
    for (std::size_t c = 0; c <= d; ++c) {
      yk[c] = w_next[c] + mom * (w_next[c] - w[c]);
      w[c] = w_next[c];
    }
    t = t_next;
  }
  model.history.iterations = it;
  model.history.final_grad_norm = gnorm;
  model.params = yk;
  return model;
}

double gradient_check(const NetConfig& config, const Matrix& x, std::span<const int> y,
                      const GradientCheckOptions& options) {
  const ConvNet net(config);
  std::vector<double> p = net.init_params(options.seed);
  Rng rng(substream_seed(options.seed, 7));
  // Small random biases keep units away from the ReLU kink at zero.
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!net.weight_mask()[i]) p[i] = rng.normal(0.0, 0.1);
  }
  std::vector<double> analytic(p.size(), 0.0);
  net.objective(p, x, y, analytic);
  if (options.corrupt) options.corrupt(analytic);

  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > options.n_params) {
    shuffle(std::span<std::size_t>(idx), rng);
    idx.resize(options.n_params);
  }
  double worst = 0.0;
  for (std::size_t i : idx) {
    const double orig = p[i];
    p[i] = orig + options.h;
    const double up = net.objective(p, x, y, {});
    p[i] = orig - options.h;
    const double down = net.objective(p, x, y, {});
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * options.h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fn += o.fn;
  fp += o.fp;
  tn += o.tn;
  return *this;
}

namespace {

ClassMetrics class_metrics(std::int64_t hit, std::int64_t predicted, std::int64_t actual) {
  ClassMetrics m;
  if (predicted > 0) {
    m.precision = static_cast<double>(hit) / static_cast<double>(predicted);
  } else {
    m.precision_undefined = true;
  }
  if (actual > 0) {
    m.recall = static_cast<double>(hit) / static_cast<double>(actual);
  } else {
    m.recall_undefined = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_undefined = true;
  }
  return m;
}

}  // namespace

EvalReport evaluate_confusion(const Confusion& c) {
  EvalReport r;
  r.confusion = c;
  if (c.total() > 0) r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.female = class_metrics(c.tp, c.tp + c.fp, c.tp + c.fn);
  r.male = class_metrics(c.tn, c.tn + c.fn, c.tn + c.fp);
  return r;
}

EvalReport evaluate(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(probabilities.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  require_binary(labels);
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred_f = probabilities[i] >= 0.5;
    if (labels[i] == kFemaleLabel) {
      ++(pred_f ? c.tp : c.fn);
    } else {
      ++(pred_f ? c.fp : c.tn);
    }
  }
  return evaluate_confusion(c);
}

std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::Config, "folds must be >= 2");
  require_binary(labels);
  std::vector<std::size_t> female, male;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == kFemaleLabel ? female : male).push_back(i);
  const auto kk = static_cast<std::size_t>(k);
  if (female.size() < kk || male.size() < kk) {
    throw Error(ErrorCode::DegenerateInput, "each class needs at least " + std::to_string(k) + " members (F=" +
                                                std::to_string(female.size()) + ", M=" +
                                                std::to_string(male.size()) + ")");
  }
  Rng rng(seed);
  shuffle(std::span<std::size_t>(female), rng);
  shuffle(std::span<std::size_t>(male), rng);
  std::vector<std::vector<std::size_t>> folds(kk);
  std::size_t pos = 0;
  for (std::size_t i : female) folds[pos++ % kk].push_back(i);
  for (std::size_t i : male) folds[pos++ % kk].push_back(i);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

CvReport cross_validate(const Matrix& x, std::span<const int> y, const CvOptions& options) {
  if (x.rows != y.size()) throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  if (options.kind == ModelKind::ConvNet) validate(options.net);
  const auto folds = stratified_kfold(y, options.folds, options.seed);
  CvReport report;
  report.kind = options.kind;
  report.k = options.folds;
  report.seed = options.seed;
  report.fold_of.assign(x.rows, -1);
  report.folds.resize(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (std::size_t i : folds[f]) report.fold_of[i] = static_cast<int>(f);
  }

  parallel_for(folds.size(), options.jobs, [&](std::size_t f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < x.rows; ++i) {
      if (report.fold_of[i] != static_cast<int>(f)) train_rows.push_back(i);
    }
    TrainedModel model;
    if (options.kind == ModelKind::ConvNet) {
      NetConfig cfg = options.net;
      cfg.input_len = static_cast<int>(x.cols);
      cfg.seed = substream_seed(options.seed, f);
      model = train(cfg, x, y, train_rows);
    } else {
      require_two_per_class(y, train_rows);
      model = train_logreg(x, y, train_rows, options.logreg_l2);
    }
    FoldResult& out = report.folds[f];
    out.fold = static_cast<int>(f);
    out.test_rows = folds[f];
    std::vector<int> truth;
    for (std::size_t i : folds[f]) {
      out.probabilities.push_back(model.predict_proba(x.row(i)));
      truth.push_back(y[i]);
    }
    out.metrics = evaluate(out.probabilities, truth);
    out.history = std::move(model.history);
  });

  Confusion pooled;
  double acc = 0.0;
  for (const auto& f : report.folds) {
    pooled += f.metrics.confusion;
    acc += f.metrics.accuracy;
  }
  report.aggregate = evaluate_confusion(pooled);
  report.mean_fold_accuracy = acc / static_cast<double>(report.folds.size());
  return report;
}

namespace {

json metrics_json(const EvalReport& r) {
  auto cls = [](const ClassMetrics& m) {
    json undefined = json::array();
    if (m.precision_undefined) undefined.push_back("precision");
    if (m.recall_undefined) undefined.push_back("recall");
    if (m.f1_undefined) undefined.push_back("f1");
    return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"zero_division", undefined}};
  };
  return json{{"accuracy", r.accuracy},
              {"F", cls(r.female)},
              {"M", cls(r.male)},
              {"confusion", {{"tp_F", r.confusion.tp}, {"fn_F", r.confusion.fn}, {"fp_F", r.confusion.fp},
                             {"tn_F", r.confusion.tn}}}};
}

std::string metrics_csv_row(const std::string& label, const EvalReport& r) {
  std::string s = label;
  for (double v : {r.accuracy, r.female.precision, r.female.recall, r.female.f1, r.male.precision, r.male.recall,
                   r.male.f1}) {
    s += ',' + format_double(v);
  }
  for (auto v : {r.confusion.tp, r.confusion.fn, r.confusion.fp, r.confusion.tn}) s += ',' + std::to_string(v);
  return s + '\n';
}

json config_json(const NetConfig& c) {
  json conv = json::array();
  for (const auto& l : c.conv) conv.push_back({l.kernel_size, l.channels});
  return json{{"input_len", c.input_len}, {"conv", conv},         {"dense", c.dense},
              {"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
              {"l2", c.l2},                 {"seed", c.seed}};
}

NetConfig config_from_json(const json& j) {
  NetConfig c;
  c.input_len = j.at("input_len").get<int>();
  c.conv.clear();
  for (const auto& l : j.at("conv")) c.conv.push_back({l.at(0).get<int>(), l.at(1).get<int>()});
  c.dense = j.at("dense").get<std::vector<int>>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.l2 = j.at("l2").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string CvReport::to_json() const {
  json j;
  j["model"] = std::string(perfvox::to_string(kind));
  j["folds"] = k;
  j["seed"] = seed;
  j["aggregate"] = metrics_json(aggregate);
  j["mean_fold_accuracy"] = mean_fold_accuracy;
  j["fold_of"] = fold_of;
  json fj = json::array();
  for (const auto& f : folds) {
    json e{{"fold", f.fold}, {"n", f.test_rows.size()}, {"metrics", metrics_json(f.metrics)},
           {"test_rows", f.test_rows}, {"probabilities", f.probabilities},
           {"iterations", f.history.iterations}};
    if (kind == ModelKind::ConvNet) {
      e["loss_history"] = f.history.loss;
      e["train_accuracy_history"] = f.history.accuracy;
    } else {
      e["final_loss"] = f.history.loss.empty() ? 0.0 : f.history.loss.back();
      e["final_grad_norm"] = f.history.final_grad_norm;
    }
    fj.push_back(std::move(e));
  }
  j["per_fold"] = std::move(fj);
  return j.dump(2) + "\n";
}

std::string CvReport::to_csv() const {
  std::string out = "fold,accuracy,precision_F,recall_F,f1_F,precision_M,recall_M,f1_M,tp_F,fn_F,fp_F,tn_F\n";
  for (const auto& f : folds) out += metrics_csv_row(std::to_string(f.fold), f.metrics);
  out += metrics_csv_row("pooled", aggregate);
  return out;
}

void save_model(const TrainedModel& model, const std::filesystem::path& json_path,
                const std::filesystem::path& blob_path) {
  json j{{"kind", std::string(to_string(model.kind))},
         {"architecture", config_json(model.config)},
         {"param_count", model.params.size()},
         {"standardizer", {{"mean", model.standardizer.mean}, {"scale", model.standardizer.scale}}},
         {"blob", blob_path.filename().string()}};
  write_text_file(json_path, j.dump(2) + "\n");

  std::string bytes(8 + 8 * model.params.size(), '\0');
  auto put = [&](std::size_t at, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes[at + static_cast<std::size_t>(b)] = static_cast<char>((v >> (8 * b)) & 0xff);
  };
  put(0, model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    std::uint64_t u;
    std::memcpy(&u, &model.params[i], 8);
    put(8 + 8 * i, u);
  }
  std::ofstream out(blob_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + blob_path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + blob_path.string());
}

TrainedModel load_model(const std::filesystem::path& json_path) {
  json j;
  try {
    j = json::parse(read_text_file(json_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, json_path.string() + ": " + e.what());
  }
  TrainedModel m;
  std::filesystem::path blob;
  std::uint64_t expected = 0;
  try {
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.config = config_from_json(j.at("architecture"));
    m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    expected = j.at("param_count").get<std::uint64_t>();
    blob = json_path.parent_path() / j.at("blob").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, json_path.string() + ": " + e.what());
  }
  const std::string bytes = read_text_file(blob);
  auto get = [&](std::size_t at) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(b)])) << (8 * b);
    }
    return v;
  };
  if (bytes.size() < 8 || get(0) != expected || bytes.size() != 8 + 8 * expected) {
    throw Error(ErrorCode::Parse, blob.string() + ": parameter blob length does not match the header");
  }
  m.params.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const std::uint64_t u = get(8 + 8 * i);
    std::memcpy(&m.params[i], &u, 8);
  }
  const std::size_t want = m.kind == ModelKind::ConvNet ? ConvNet(m.config).num_params()
                                                        : static_cast<std::size_t>(m.config.input_len) + 1;
  if (m.params.size() != want || m.standardizer.mean.size() != static_cast<std::size_t>(m.config.input_len) ||
      m.standardizer.scale.size() != m.standardizer.mean.size()) {
    throw Error(ErrorCode::Parse, json_path.string() + ": parameter count inconsistent with the architecture");
  }
  for (double s : m.standardizer.scale) {
    if (!std::isfinite(s) || s <= 0.0) throw Error(ErrorCode::Parse, json_path.string() + ": invalid scale");
  }
  return m;
}

}  // namespace perfvox
