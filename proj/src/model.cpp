#include "pulsesense/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "json_util.hpp"
#include "random.hpp"
#include "pulsesense/error.hpp"

namespace pulsesense {
namespace {

enum Tensor : int {
  kL1Kernel,
  kL1Recurrent,
  kL1Bias,
  kL2Kernel,
  kL2Recurrent,
  kL2Bias,
  kDenseKernel,
  kDenseBias,
  kHeadKernel,
  kHeadBias,
  kTensorCount
};

struct Shape {
  std::size_t rows, cols;
};

std::array<Shape, kTensorCount> shapes(const ModelConfig& c) {
  const std::size_t g1 = 4 * c.lstm1_units, g2 = 4 * c.lstm2_units;
  return {{{g1, c.input_dim},
           {g1, c.lstm1_units},
           {g1, 1},
           {g2, c.lstm1_units},
           {g2, c.lstm2_units},
           {g2, 1},
           {c.dense_units, c.lstm2_units},
           {c.dense_units, 1},
           {1, c.dense_units},
           {1, 1}}};
}

constexpr std::array<const char*, kTensorCount> kTensorNames = {
    "lstm1.kernel", "lstm1.recurrent", "lstm1.bias", "lstm2.kernel", "lstm2.recurrent",
    "lstm2.bias",   "dense.kernel",    "dense.bias", "head.kernel",  "head.bias"};

using detail::standard_normal;
using detail::uniform01;

void glorot_uniform(Eigen::Ref<Eigen::MatrixXd> w, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
}

// Columns orthonormal (4H x H), signs fixed by diag(R) as in the usual QR recipe.
void orthogonal(Eigen::Ref<Eigen::MatrixXd> w, std::mt19937_64& rng) {
  Eigen::MatrixXd a(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = standard_normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  w = q;
}

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) { return (1.0 + (-x).exp()).inverse(); }

void check_cache(const ModelParams& params, const ForwardCache& cache) {
  if (!(params.config() == cache.config) || cache.batch == 0 || cache.steps == 0 ||
      cache.input.cols() != static_cast<Eigen::Index>(cache.steps * cache.batch) ||
      cache.lstm1.gates.cols() != cache.input.cols() || cache.lstm2.gates.cols() != cache.input.cols()) {
    throw Error(ErrorCode::CacheMismatch, "forward cache does not belong to these parameters");
  }
}

/// Runs one LSTM layer over the whole sequence; `input` is D x (W*B).
void lstm_forward(const Eigen::Ref<const Eigen::MatrixXd>& kernel, const Eigen::Ref<const Eigen::MatrixXd>& recurrent,
                  const Eigen::Ref<const Eigen::VectorXd>& bias, const Eigen::MatrixXd& input, std::size_t steps,
                  std::size_t batch, LstmLayerCache& out) {
  const Eigen::Index h = recurrent.cols();
  const auto b = static_cast<Eigen::Index>(batch);
  out.gates.noalias() = kernel * input;
  out.gates.colwise() += bias;
  out.cell.resize(h, input.cols());
  out.hidden.resize(h, input.cols());

  Eigen::MatrixXd pre(4 * h, b);
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(t) * b;
    pre = out.gates.middleCols(c0, b);
    if (t > 0) pre.noalias() += recurrent * out.hidden.middleCols(c0 - b, b);
    auto gates = out.gates.middleCols(c0, b);
    gates.topRows(2 * h) = sigmoid(pre.topRows(2 * h).array()).matrix();
    gates.middleRows(2 * h, h) = pre.middleRows(2 * h, h).array().tanh().matrix();
    gates.bottomRows(h) = sigmoid(pre.bottomRows(h).array()).matrix();

    const auto i = gates.topRows(h).array();
    const auto f = gates.middleRows(h, h).array();
    const auto g = gates.middleRows(2 * h, h).array();
    const auto o = gates.bottomRows(h).array();
    auto c = out.cell.middleCols(c0, b);
    if (t > 0) {
      c = (f * out.cell.middleCols(c0 - b, b).array() + i * g).matrix();
    } else {
      c = (i * g).matrix();
    }
    out.hidden.middleCols(c0, b) = (o * c.array().tanh()).matrix();
  }
}

struct LstmGrads {
  Eigen::Ref<Eigen::MatrixXd> kernel;
  Eigen::Ref<Eigen::MatrixXd> recurrent;
  Eigen::Ref<Eigen::VectorXd> bias;
};

/// BPTT for one layer. `dhidden` is the external gradient on every hidden output.
/// Returns the gradient with respect to the layer input when `want_input_grad`.
Eigen::MatrixXd lstm_backward(const Eigen::Ref<const Eigen::MatrixXd>& kernel,
                              const Eigen::Ref<const Eigen::MatrixXd>& recurrent, const LstmLayerCache& cache,
                              const Eigen::MatrixXd& input, const Eigen::MatrixXd& dhidden, std::size_t steps,
                              std::size_t batch, LstmGrads grads, bool want_input_grad) {
  const Eigen::Index h = recurrent.cols();
  const auto b = static_cast<Eigen::Index>(batch);
  Eigen::MatrixXd dgates(4 * h, input.cols());
  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(h, b);
  Eigen::ArrayXXd dc_next = Eigen::ArrayXXd::Zero(h, b);

  for (std::size_t step = steps; step-- > 0;) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(step) * b;
    const auto gates = cache.gates.middleCols(c0, b);
    const Eigen::ArrayXXd i = gates.topRows(h).array();
    const Eigen::ArrayXXd f = gates.middleRows(h, h).array();
    const Eigen::ArrayXXd g = gates.middleRows(2 * h, h).array();
    const Eigen::ArrayXXd o = gates.bottomRows(h).array();
    const Eigen::ArrayXXd tc = cache.cell.middleCols(c0, b).array().tanh();

    const Eigen::ArrayXXd dh = dhidden.middleCols(c0, b).array() + dh_next.array();
    const Eigen::ArrayXXd dc = dc_next + dh * o * (1.0 - tc.square());
    auto dg_t = dgates.middleCols(c0, b);
    dg_t.topRows(h) = (dc * g * i * (1.0 - i)).matrix();
    if (step > 0) {
      dg_t.middleRows(h, h) = (dc * cache.cell.middleCols(c0 - b, b).array() * f * (1.0 - f)).matrix();
    } else {
      dg_t.middleRows(h, h).setZero();
    }
    dg_t.middleRows(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
    dg_t.bottomRows(h) = (dh * tc * o * (1.0 - o)).matrix();
    dc_next = dc * f;
    dh_next.noalias() = recurrent.transpose() * dg_t;
  }

  grads.kernel.noalias() += dgates * input.transpose();
  grads.bias += dgates.rowwise().sum();
  if (steps > 1) {
    const Eigen::Index n = static_cast<Eigen::Index>(steps - 1) * b;
    grads.recurrent.noalias() += dgates.rightCols(n) * cache.hidden.leftCols(n).transpose();
  }
  if (!want_input_grad) return {};
  return kernel.transpose() * dgates;
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = uniform01(rng) < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

std::string_view to_string(HeadType head) noexcept { return head == HeadType::Binary ? "binary" : "regression"; }

HeadType head_type_from_string(std::string_view name) {
  if (name == "regression") return HeadType::Regression;
  if (name == "binary") return HeadType::Binary;
  throw Error(ErrorCode::ConfigInvalid, "unknown head '" + std::string(name) + "'");
}

void validate(const ModelConfig& c) {
  if (c.input_dim < 1 || c.lstm1_units < 1 || c.lstm2_units < 1 || c.dense_units < 1) {
    throw Error(ErrorCode::ConfigInvalid, "all unit counts must be >= 1");
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "dropout_rate must be in [0, 1)");
  }
  if (!std::isfinite(c.output_offset) || !std::isfinite(c.output_scale) || c.output_scale == 0.0) {
    throw Error(ErrorCode::ConfigInvalid, "output transform must be finite with non-zero scale");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},   {"lstm1_units", c.lstm1_units},     {"lstm2_units", c.lstm2_units},
          {"dense_units", c.dense_units}, {"head", to_string(c.head)},       {"dropout_rate", c.dropout_rate},
          {"output_offset", c.output_offset}, {"output_scale", c.output_scale}};
}

ModelConfig model_config_from_json(const nlohmann::json& block) {
  using detail::get_or;
  constexpr std::string_view where = "model";
  detail::require_known_keys(block,
                             {"input_dim", "lstm1_units", "lstm2_units", "dense_units", "head", "dropout_rate",
                              "output_offset", "output_scale"},
                             where);
  ModelConfig c;
  auto units = [&](const char* key, std::size_t fallback) {
    const auto v = get_or<long long>(block, key, static_cast<long long>(fallback), where);
    if (v < 1) throw Error(ErrorCode::ConfigInvalid, std::string("model.") + key + " must be >= 1");
    return static_cast<std::size_t>(v);
  };
  c.input_dim = units("input_dim", c.input_dim);
  c.lstm1_units = units("lstm1_units", c.lstm1_units);
  c.lstm2_units = units("lstm2_units", c.lstm2_units);
  c.dense_units = units("dense_units", c.dense_units);
  c.head = head_type_from_string(get_or<std::string>(block, "head", "regression", where));
  c.dropout_rate = get_or<double>(block, "dropout_rate", c.dropout_rate, where);
  c.output_offset = get_or<double>(block, "output_offset", c.output_offset, where);
  c.output_scale = get_or<double>(block, "output_scale", c.output_scale, where);
  validate(c);
  return c;
}

std::size_t count_parameters(const ModelConfig& c) {
  const std::size_t d = c.input_dim, h1 = c.lstm1_units, h2 = c.lstm2_units, dn = c.dense_units;
  return 4 * (h1 * (d + h1) + h1) + 4 * (h2 * (h1 + h2) + h2) + (dn * h2 + dn) + (dn + 1);
}

// ---------------------------------------------------------------------------
// params

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  validate(config_);
  std::size_t off = 0;
  for (const auto& s : shapes(config_)) {
    offsets_.push_back(off);
    off += s.rows * s.cols;
  }
  flat_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off));
}

#define PULSESENSE_MATRIX_VIEW(fn, tensor)                                                          \
  ModelParams::MatrixMap ModelParams::fn() {                                                       \
    const auto s = shapes(config_)[tensor];                                                        \
    return {flat_.data() + offset(tensor), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols)}; \
  }                                                                                                \
  ModelParams::ConstMatrixMap ModelParams::fn() const {                                            \
    const auto s = shapes(config_)[tensor];                                                        \
    return {flat_.data() + offset(tensor), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols)}; \
  }
#define PULSESENSE_VECTOR_VIEW(fn, tensor)                                                          \
  ModelParams::VectorMap ModelParams::fn() {                                                       \
    return {flat_.data() + offset(tensor), static_cast<Eigen::Index>(shapes(config_)[tensor].rows)}; \
  }                                                                                                \
  ModelParams::ConstVectorMap ModelParams::fn() const {                                            \
    return {flat_.data() + offset(tensor), static_cast<Eigen::Index>(shapes(config_)[tensor].rows)}; \
  }

PULSESENSE_MATRIX_VIEW(lstm1_kernel, kL1Kernel)
PULSESENSE_MATRIX_VIEW(lstm1_recurrent, kL1Recurrent)
PULSESENSE_VECTOR_VIEW(lstm1_bias, kL1Bias)
PULSESENSE_MATRIX_VIEW(lstm2_kernel, kL2Kernel)
PULSESENSE_MATRIX_VIEW(lstm2_recurrent, kL2Recurrent)
PULSESENSE_VECTOR_VIEW(lstm2_bias, kL2Bias)
PULSESENSE_MATRIX_VIEW(dense_kernel, kDenseKernel)
PULSESENSE_VECTOR_VIEW(dense_bias, kDenseBias)
PULSESENSE_MATRIX_VIEW(head_kernel, kHeadKernel)
PULSESENSE_VECTOR_VIEW(head_bias, kHeadBias)

#undef PULSESENSE_MATRIX_VIEW
#undef PULSESENSE_VECTOR_VIEW

std::vector<ModelParams::TensorInfo> ModelParams::layout() const {
  std::vector<TensorInfo> out;
  const auto s = shapes(config_);
  for (int k = 0; k < kTensorCount; ++k) out.push_back({kTensorNames[k], offsets_[k], s[k].rows, s[k].cols});
  return out;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config_ == b.config_) || a.flat_.size() != b.flat_.size()) return false;
  for (Eigen::Index i = 0; i < a.flat_.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.flat_[i]) != std::bit_cast<std::uint64_t>(b.flat_[i])) return false;
  }
  return true;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  std::mt19937_64 rng(seed);
  glorot_uniform(p.lstm1_kernel(), rng);
  orthogonal(p.lstm1_recurrent(), rng);
  glorot_uniform(p.lstm2_kernel(), rng);
  orthogonal(p.lstm2_recurrent(), rng);
  glorot_uniform(p.dense_kernel(), rng);
  glorot_uniform(p.head_kernel(), rng);
  const auto h1 = static_cast<Eigen::Index>(config.lstm1_units);
  const auto h2 = static_cast<Eigen::Index>(config.lstm2_units);
  p.lstm1_bias().segment(h1, h1).setOnes();
  p.lstm2_bias().segment(h2, h2).setOnes();
  return p;
}

// ---------------------------------------------------------------------------
// forward / backward

ForwardCache forward_batch(const ModelParams& params, std::span<const Eigen::MatrixXd* const> segments, bool training,
                           std::uint64_t rng_seed) {
  const ModelConfig& cfg = params.config();
  if (segments.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  const Eigen::Index steps = segments.front()->rows();
  for (const auto* s : segments) {
    if (s->cols() != static_cast<Eigen::Index>(cfg.input_dim) || s->rows() != steps || steps == 0) {
      throw Error(ErrorCode::ShapeMismatch, "segment is " + std::to_string(s->rows()) + "x" +
                                                std::to_string(s->cols()) + ", model expects " +
                                                std::to_string(steps) + "x" + std::to_string(cfg.input_dim));
    }
  }

  ForwardCache c;
  c.config = cfg;
  c.steps = static_cast<std::size_t>(steps);
  c.batch = segments.size();
  c.training = training;
  const auto b = static_cast<Eigen::Index>(c.batch);

  c.input.resize(static_cast<Eigen::Index>(cfg.input_dim), steps * b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::MatrixXd& seg = *segments[static_cast<std::size_t>(k)];
    for (Eigen::Index t = 0; t < steps; ++t) c.input.col(t * b + k) = seg.row(t).transpose();
  }

  const bool drop = training && cfg.dropout_rate > 0.0;
  std::mt19937_64 rng(rng_seed);

  lstm_forward(params.lstm1_kernel(), params.lstm1_recurrent(), params.lstm1_bias(), c.input, c.steps, c.batch, c.lstm1);
  if (drop) {
    c.mask1 = dropout_mask(c.lstm1.hidden.rows(), c.lstm1.hidden.cols(), cfg.dropout_rate, rng);
    c.layer1_out = c.lstm1.hidden.cwiseProduct(c.mask1);
  } else {
    c.layer1_out = c.lstm1.hidden;
  }

  lstm_forward(params.lstm2_kernel(), params.lstm2_recurrent(), params.lstm2_bias(), c.layer1_out, c.steps, c.batch,
               c.lstm2);
  c.final_hidden = c.lstm2.hidden.rightCols(b);
  if (drop) {
    c.mask2 = dropout_mask(c.final_hidden.rows(), b, cfg.dropout_rate, rng);
    c.final_hidden = c.final_hidden.cwiseProduct(c.mask2);
  }

  c.dense_pre.noalias() = params.dense_kernel() * c.final_hidden;
  c.dense_pre.colwise() += params.dense_bias();
  c.dense_out = c.dense_pre.cwiseMax(0.0);
  c.head_out.noalias() = params.head_kernel() * c.dense_out;
  c.head_out.array() += params.head_bias()(0);

  if (cfg.head == HeadType::Binary) {
    c.predictions = sigmoid(c.head_out.array()).matrix();
  } else {
    c.predictions = (cfg.output_offset + cfg.output_scale * c.head_out.array()).matrix();
  }
  return c;
}

ForwardResult forward(const ModelParams& params, const Eigen::MatrixXd& segment, bool training,
                      std::uint64_t rng_seed) {
  const Eigen::MatrixXd* one[] = {&segment};
  ForwardResult r;
  r.cache = forward_batch(params, one, training, rng_seed);
  r.prediction = r.cache.predictions(0);
  return r;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Eigen::RowVectorXd& dpred) {
  check_cache(params, cache);
  if (dpred.size() != static_cast<Eigen::Index>(cache.batch)) {
    throw Error(ErrorCode::CacheMismatch, "upstream gradient length differs from batch size");
  }
  const ModelConfig& cfg = params.config();
  const auto b = static_cast<Eigen::Index>(cache.batch);
  ModelParams grad(cfg);

  Eigen::RowVectorXd dhead;
  if (cfg.head == HeadType::Binary) {
    dhead = (dpred.array() * cache.predictions.array() * (1.0 - cache.predictions.array())).matrix();
  } else {
    dhead = dpred * cfg.output_scale;
  }

  grad.head_kernel().noalias() = dhead * cache.dense_out.transpose();
  grad.head_bias()(0) = dhead.sum();
  Eigen::MatrixXd ddense = params.head_kernel().transpose() * dhead;
  ddense.array() *= (cache.dense_pre.array() > 0.0).cast<double>();
  grad.dense_kernel().noalias() = ddense * cache.final_hidden.transpose();
  grad.dense_bias() = ddense.rowwise().sum();
  Eigen::MatrixXd dfinal = params.dense_kernel().transpose() * ddense;
  if (cache.mask2.size() > 0) dfinal.array() *= cache.mask2.array();

  Eigen::MatrixXd dh2 = Eigen::MatrixXd::Zero(cache.lstm2.hidden.rows(), cache.lstm2.hidden.cols());
  dh2.rightCols(b) = dfinal;
  Eigen::MatrixXd dlayer1 =
      lstm_backward(params.lstm2_kernel(), params.lstm2_recurrent(), cache.lstm2, cache.layer1_out, dh2, cache.steps,
                    cache.batch, {grad.lstm2_kernel(), grad.lstm2_recurrent(), grad.lstm2_bias()}, true);
  if (cache.mask1.size() > 0) dlayer1.array() *= cache.mask1.array();
  lstm_backward(params.lstm1_kernel(), params.lstm1_recurrent(), cache.lstm1, cache.input, dlayer1, cache.steps,
                cache.batch, {grad.lstm1_kernel(), grad.lstm1_recurrent(), grad.lstm1_bias()}, false);
  return grad;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache, double dpred) {
  if (cache.batch != 1) throw Error(ErrorCode::CacheMismatch, "scalar upstream gradient needs a batch of one");
  Eigen::RowVectorXd d(1);
  d(0) = dpred;
  return backward(params, cache, d);
}

double predict(const ModelParams& params, const Eigen::MatrixXd& segment) {
  return forward(params, segment, false).prediction;
}

std::vector<double> predict_batch(const ModelParams& params, std::span<const Eigen::MatrixXd* const> segments,
                                  std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  std::vector<double> out;
  out.reserve(segments.size());
  for (std::size_t start = 0; start < segments.size(); start += batch_size) {
    const auto n = std::min(batch_size, segments.size() - start);
    const ForwardCache c = forward_batch(params, segments.subspan(start, n), false);
    for (Eigen::Index k = 0; k < c.predictions.size(); ++k) out.push_back(c.predictions(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses and optimizer

LossValue mse_loss(double pred, double target) {
  const double d = pred - target;
  return {d * d, 2.0 * d};
}

LossValue bce_loss(double prob, double label) {
  constexpr double kClamp = 1e-7;
  const double p = std::clamp(prob, kClamp, 1.0 - kClamp);
  return {-(label * std::log(p) + (1.0 - label) * std::log(1.0 - p)), -label / p + (1.0 - label) / (1.0 - p)};
}

double mean_loss(HeadType head, std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw Error(ErrorCode::LengthMismatch, "prediction/target lengths differ");
  if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "no predictions");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    acc += head == HeadType::Binary ? bce_loss(predictions[i], targets[i]).loss
                                    : mse_loss(predictions[i], targets[i]).loss;
  }
  return acc / static_cast<double>(predictions.size());
}

AdamState make_adam_state(std::size_t parameter_count, double learning_rate) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count));
  s.v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count));
  s.learning_rate = learning_rate;
  return s;
}

void adam_update(AdamState& s, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "ADAM state, parameters and gradients must have equal length");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads) {
  if (!(params.config() == grads.config())) throw Error(ErrorCode::ShapeMismatch, "gradient shape differs");
  adam_update(state, params.flat(), grads.flat());
}

}  // namespace pulsesense
