#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pulsesense/dsp.hpp"
#include "pulsesense/error.hpp"
#include "pulsesense/metrics.hpp"
#include "pulsesense/model.hpp"

namespace pulsesense {

enum class SplitMode { WindowLevel, RecordingLevel };

struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t early_stop_patience = 10;
  std::size_t lr_plateau_patience = 5;
  double lr_factor = 0.5;
  double val_fraction_of_train = 0.2;
  std::uint64_t seed = 0;
  SplitMode split = SplitMode::WindowLevel;
  // Regression only: fit output_offset/output_scale to the training labels.
  bool normalize_targets = true;
  // Clinical tolerance used for the within-threshold metric (1.5 BPM, 0.75 brpm).
  double metric_threshold = 1.5;
};

void validate(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& block);
nlohmann::json to_json(const TrainingConfig& config);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// 64/16/20 split after a seeded Fisher-Yates shuffle (of windows or of recordings).
SplitIndices split(std::span<const WindowSegment> segments, const TrainingConfig& config);

/// Seeded shuffle of 0..n-1 cut into k contiguous folds (first n % k folds one larger).
std::vector<std::vector<std::size_t>> kfold_folds(std::size_t n, std::size_t k, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;  // in effect at the end of the epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<std::size_t> lr_reductions;  // epochs whose end halved the rate
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

void write_history_csv(const TrainHistory& history, std::ostream& out);

/// Thrown when a loss turns non-finite; carries the history so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(TrainHistory history, const std::string& detail)
      : Error(ErrorCode::DivergedLoss, detail), history_(std::move(history)) {}
  const TrainHistory& history() const noexcept { return history_; }

 private:
  TrainHistory history_;
};

struct TrainHooks {
  /// Replaces the computed validation loss for an epoch when it returns a value.
  std::function<std::optional<double>(std::size_t epoch, const ModelParams& params)> val_loss_override;
  /// Called with every segment index read during training (train and validation).
  std::function<void(std::size_t index)> on_visit;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // weights of the best validation epoch
  TrainHistory history;
};

/// ADAM + MSE/BCE, LR halving on plateau, early stopping, restore-best-weights.
/// Only `indices.train` and `indices.val` are read.
TrainResult train(std::span<const WindowSegment> segments, const SplitIndices& indices, ModelConfig model_config,
                  const TrainingConfig& config, const TrainHooks& hooks = {});

std::vector<double> predict_segments(const ModelParams& params, std::span<const WindowSegment> segments,
                                     std::span<const std::size_t> indices, std::size_t batch_size = 64);

/// Regression or classification metrics depending on the head.
MetricsReport evaluate(const ModelParams& params, std::span<const WindowSegment> segments,
                       std::span<const std::size_t> indices, double regression_threshold);

struct RunResult {
  SplitIndices indices;
  TrainHistory history;
  MetricsReport test_metrics;
};

struct RepeatResult {
  std::vector<RunResult> runs;
  AggregateReport aggregate;
};

/// `n` runs with seeds seed, seed+1, ... each with a fresh shuffle.
RepeatResult repeat_runs(std::span<const WindowSegment> segments, const ModelConfig& model_config,
                         const TrainingConfig& config, std::size_t n = 3);

struct CrossValidationResult {
  std::vector<std::vector<std::size_t>> test_folds;
  std::vector<MetricsReport> fold_metrics;
  AggregateReport aggregate;
};

/// k-fold CV; each fold's remainder gives up `val_fraction_of_train` for validation.
CrossValidationResult kfold_cv(std::span<const WindowSegment> segments, std::size_t k, const ModelConfig& model_config,
                               const TrainingConfig& config);

}  // namespace pulsesense
