#pragma once

// Two-layer LSTM regressor/classifier:
//
//   input (W x D) -> LSTM(H1) -> dropout -> LSTM(H2) -> dropout on final state
//                 -> Dense(Dn) + ReLU -> Dense(1) -> affine (regression) | sigmoid (binary)
//
// All trainable values live in one flat float64 buffer. Packed LSTM tensors stack
// gate blocks by rows in the order (input, forget, candidate, output).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace pulsesense {

enum class HeadType { Regression, Binary };

std::string_view to_string(HeadType head) noexcept;
HeadType head_type_from_string(std::string_view name);

struct ModelConfig {
  std::size_t input_dim = 64;
  std::size_t lstm1_units = 64;
  std::size_t lstm2_units = 32;
  std::size_t dense_units = 16;
  HeadType head = HeadType::Regression;
  double dropout_rate = 0.2;
  // Regression output = output_offset + output_scale * (head affine). Not trained.
  double output_offset = 0.0;
  double output_scale = 1.0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate(const ModelConfig& config);
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& block);

std::size_t count_parameters(const ModelConfig& config);

/// Trainable parameters (or gradients of the same shape).
class ModelParams {
 public:
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  explicit ModelParams(const ModelConfig& config);  // all zeros

  const ModelConfig& config() const noexcept { return config_; }
  ModelConfig& mutable_config() noexcept { return config_; }
  Eigen::VectorXd& flat() noexcept { return flat_; }
  const Eigen::VectorXd& flat() const noexcept { return flat_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(flat_.size()); }

  MatrixMap lstm1_kernel();  // 4H1 x D
  MatrixMap lstm1_recurrent();  // 4H1 x H1
  VectorMap lstm1_bias();  // 4H1
  MatrixMap lstm2_kernel();  // 4H2 x H1
  MatrixMap lstm2_recurrent();  // 4H2 x H2
  VectorMap lstm2_bias();
  MatrixMap dense_kernel();  // Dn x H2
  VectorMap dense_bias();
  MatrixMap head_kernel();  // 1 x Dn
  VectorMap head_bias();  // 1

  ConstMatrixMap lstm1_kernel() const;
  ConstMatrixMap lstm1_recurrent() const;
  ConstVectorMap lstm1_bias() const;
  ConstMatrixMap lstm2_kernel() const;
  ConstMatrixMap lstm2_recurrent() const;
  ConstVectorMap lstm2_bias() const;
  ConstMatrixMap dense_kernel() const;
  ConstVectorMap dense_bias() const;
  ConstMatrixMap head_kernel() const;
  ConstVectorMap head_bias() const;

  /// Name, offset, rows, cols of every tensor in storage order.
  struct TensorInfo {
    std::string name;
    std::size_t offset, rows, cols;
  };
  std::vector<TensorInfo> layout() const;

  friend bool operator==(const ModelParams&, const ModelParams&);

 private:
  std::size_t offset(int tensor) const noexcept { return offsets_[tensor]; }

  ModelConfig config_;
  Eigen::VectorXd flat_;
  std::vector<std::size_t> offsets_;
};

/// Glorot-uniform input kernels, orthogonal recurrent kernels, zero biases with
/// forget-gate bias 1. Deterministic in `seed`.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct LstmLayerCache {
  Eigen::MatrixXd gates;   // 4H x (W*B), post-activation
  Eigen::MatrixXd cell;    // H x (W*B)
  Eigen::MatrixXd hidden;  // H x (W*B)
};

/// Everything backward() needs. Column t*B + b is timestep t of batch item b.
struct ForwardCache {
  ModelConfig config;
  std::size_t steps = 0;
  std::size_t batch = 0;
  bool training = false;
  Eigen::MatrixXd input;         // D x (W*B)
  LstmLayerCache lstm1;
  Eigen::MatrixXd mask1;         // H1 x (W*B); empty when dropout inactive
  Eigen::MatrixXd layer1_out;    // H1 x (W*B), after dropout
  LstmLayerCache lstm2;
  Eigen::MatrixXd mask2;         // H2 x B; empty when dropout inactive
  Eigen::MatrixXd final_hidden;  // H2 x B, after dropout
  Eigen::MatrixXd dense_pre;     // Dn x B
  Eigen::MatrixXd dense_out;     // Dn x B
  Eigen::RowVectorXd head_out;   // 1 x B, before output transform
  Eigen::RowVectorXd predictions;
};

struct ForwardResult {
  double prediction = 0.0;
  ForwardCache cache;
};

/// One W x D segment. Dropout (inverted) is active only when `training`.
ForwardResult forward(const ModelParams& params, const Eigen::MatrixXd& segment, bool training,
                      std::uint64_t rng_seed = 0);

/// Batch of equally shaped segments.
ForwardCache forward_batch(const ModelParams& params, std::span<const Eigen::MatrixXd* const> segments,
                           bool training, std::uint64_t rng_seed = 0);

/// Gradients of sum_b dpred[b] * prediction[b] with respect to every parameter.
ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Eigen::RowVectorXd& dpred);
ModelParams backward(const ModelParams& params, const ForwardCache& cache, double dpred);

/// Inference for one segment (no dropout).
double predict(const ModelParams& params, const Eigen::MatrixXd& segment);
/// Inference in chunks of `batch_size`.
std::vector<double> predict_batch(const ModelParams& params, std::span<const Eigen::MatrixXd* const> segments,
                                  std::size_t batch_size = 64);

struct LossValue {
  double loss = 0.0;
  double grad = 0.0;  // dLoss / dPrediction
};

LossValue mse_loss(double pred, double target);
/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logarithm.
LossValue bce_loss(double prob, double label);
double mean_loss(HeadType head, std::span<const double> predictions, std::span<const double> targets);

struct AdamState {
  std::uint64_t step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(std::size_t parameter_count, double learning_rate = 1e-3);

/// Element-wise ADAM update with bias correction.
void adam_update(AdamState& state, Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads);
void adam_step(AdamState& state, ModelParams& params, const ModelParams& grads);

// Model container (little-endian):
//   "PSNN1" | u32 json_len | json {"model":{...},"meta":{...}} | u32 n
//   | n x float32 (flat buffer order) | u32 CRC-32 of all preceding bytes
struct LoadedModel {
  ModelParams params;
  nlohmann::json meta;
};

std::string save_model(const ModelParams& params, const nlohmann::json& meta = nlohmann::json::object());
LoadedModel load_model(std::string_view bytes);

}  // namespace pulsesense
