#include "pulsesense/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "json_util.hpp"
#include "random.hpp"

namespace pulsesense {
namespace {

using detail::derive_seed;

// Fisher-Yates with an explicit index draw; std::shuffle's draw order is
// implementation-defined.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

double evaluate_loss(const ModelParams& params, std::span<const WindowSegment> segments,
                     std::span<const std::size_t> indices, std::size_t batch_size) {
  const auto preds = predict_segments(params, segments, indices, batch_size);
  std::vector<double> targets;
  targets.reserve(indices.size());
  for (const auto i : indices) targets.push_back(segments[i].label);
  return mean_loss(params.config().head, preds, targets);
}

}  // namespace

void validate(const TrainingConfig& c) {
  if (!(c.learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "training.learning_rate must be positive");
  if (c.batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "training.batch_size must be >= 1");
  if (c.max_epochs < 1) throw Error(ErrorCode::ConfigInvalid, "training.max_epochs must be >= 1");
  if (c.early_stop_patience < 1 || c.lr_plateau_patience < 1) {
    throw Error(ErrorCode::ConfigInvalid, "training patiences must be >= 1");
  }
  if (!(c.lr_factor > 0.0 && c.lr_factor <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "training.lr_factor in (0, 1]");
  if (!(c.val_fraction_of_train > 0.0 && c.val_fraction_of_train < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "training.val_fraction_of_train must be in (0, 1)");
  }
}

TrainingConfig training_config_from_json(const nlohmann::json& block) {
  using detail::get_or;
  constexpr std::string_view where = "training";
  detail::require_known_keys(block,
                             {"learning_rate", "batch_size", "max_epochs", "early_stop_patience", "lr_plateau_patience",
                              "lr_factor", "val_fraction_of_train", "seed", "split", "normalize_targets",
                              "metric_threshold"},
                             where);
  TrainingConfig c;
  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = get_or<long long>(block, key, static_cast<long long>(fallback), where);
    if (v < 1) throw Error(ErrorCode::ConfigInvalid, std::string("training.") + key + " must be >= 1");
    return static_cast<std::size_t>(v);
  };
  c.learning_rate = get_or<double>(block, "learning_rate", c.learning_rate, where);
  c.batch_size = count("batch_size", c.batch_size);
  c.max_epochs = count("max_epochs", c.max_epochs);
  c.early_stop_patience = count("early_stop_patience", c.early_stop_patience);
  c.lr_plateau_patience = count("lr_plateau_patience", c.lr_plateau_patience);
  c.lr_factor = get_or<double>(block, "lr_factor", c.lr_factor, where);
  c.val_fraction_of_train = get_or<double>(block, "val_fraction_of_train", c.val_fraction_of_train, where);
  c.seed = get_or<std::uint64_t>(block, "seed", c.seed, where);
  const auto mode = get_or<std::string>(block, "split", "window_level", where);
  if (mode == "window_level") c.split = SplitMode::WindowLevel;
  else if (mode == "recording_level") c.split = SplitMode::RecordingLevel;
  else throw Error(ErrorCode::ConfigInvalid, "training.split must be window_level or recording_level");
  c.normalize_targets = get_or<bool>(block, "normalize_targets", c.normalize_targets, where);
  c.metric_threshold = get_or<double>(block, "metric_threshold", c.metric_threshold, where);
  validate(c);
  return c;
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"lr_plateau_patience", c.lr_plateau_patience},
          {"lr_factor", c.lr_factor},
          {"val_fraction_of_train", c.val_fraction_of_train},
          {"seed", c.seed},
          {"split", c.split == SplitMode::WindowLevel ? "window_level" : "recording_level"},
          {"normalize_targets", c.normalize_targets},
          {"metric_threshold", c.metric_threshold}};
}

SplitIndices split(std::span<const WindowSegment> segments, const TrainingConfig& config) {
  const std::size_t n = segments.size();
  if (n < 5) throw Error(ErrorCode::TooFewSegments, "need at least 5 segments, got " + std::to_string(n));
  // Train share of the whole set: (1 - test) * (1 - val) = 0.8 * 0.8 = 0.64.
  const double test_fraction = 0.2;
  const double train_share = (1.0 - test_fraction) * (1.0 - config.val_fraction_of_train);
  const double trainval_share = 1.0 - test_fraction;

  SplitIndices out;
  if (config.split == SplitMode::WindowLevel) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    seeded_shuffle(order, derive_seed(config.seed, 0x5917));
    const std::size_t cut1 = rounded(train_share * static_cast<double>(n));
    const std::size_t cut2 = rounded(trainval_share * static_cast<double>(n));
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut1));
    out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(cut1), order.begin() + static_cast<std::ptrdiff_t>(cut2));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut2), order.end());
    return out;
  }

  std::map<int, std::vector<std::size_t>> by_recording;
  for (std::size_t i = 0; i < n; ++i) by_recording[segments[i].recording_id].push_back(i);
  std::vector<int> ids;
  for (const auto& [id, members] : by_recording) ids.push_back(id);
  seeded_shuffle(ids, derive_seed(config.seed, 0x5917, 1));
  const double b1 = train_share * static_cast<double>(n);
  const double b2 = trainval_share * static_cast<double>(n);
  double before = 0.0;
  for (const int id : ids) {
    const auto& members = by_recording[id];
    const double mid = before + 0.5 * static_cast<double>(members.size());
    auto& dest = mid < b1 ? out.train : (mid < b2 ? out.val : out.test);
    dest.insert(dest.end(), members.begin(), members.end());
    before += static_cast<double>(members.size());
  }
  return out;
}

std::vector<std::vector<std::size_t>> kfold_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) throw Error(ErrorCode::TooFewSegments, "k-fold needs 2 <= k <= n");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, derive_seed(seed, 0xF01D));
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  // Shortest text that reads back to the same double.
  const auto num = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_loss) << ',' << num(e.learning_rate) << '\n';
  }
}

std::vector<double> predict_segments(const ModelParams& params, std::span<const WindowSegment> segments,
                                     std::span<const std::size_t> indices, std::size_t batch_size) {
  std::vector<const Eigen::MatrixXd*> inputs;
  inputs.reserve(indices.size());
  for (const auto i : indices) inputs.push_back(&segments[i].values);
  return predict_batch(params, inputs, batch_size);
}

MetricsReport evaluate(const ModelParams& params, std::span<const WindowSegment> segments,
                       std::span<const std::size_t> indices, double regression_threshold) {
  const auto preds = predict_segments(params, segments, indices);
  std::vector<double> truth;
  truth.reserve(indices.size());
  for (const auto i : indices) truth.push_back(segments[i].label);
  if (params.config().head == HeadType::Binary) return classification_metrics(preds, truth);
  return regression_metrics(truth, preds, regression_threshold);
}

TrainResult train(std::span<const WindowSegment> segments, const SplitIndices& indices, ModelConfig model_config,
                  const TrainingConfig& config, const TrainHooks& hooks) {
  validate(config);
  if (indices.train.empty()) throw Error(ErrorCode::EmptyTrainSet, "no training segments");

  if (model_config.head == HeadType::Regression && config.normalize_targets) {
    double sum = 0.0;
    for (const auto i : indices.train) sum += segments[i].label;
    const double mean = sum / static_cast<double>(indices.train.size());
    double sq = 0.0;
    for (const auto i : indices.train) sq += (segments[i].label - mean) * (segments[i].label - mean);
    model_config.output_offset = mean;
    model_config.output_scale = std::max(1.0, std::sqrt(sq / static_cast<double>(indices.train.size())));
  }

  ModelParams params = init_params(model_config, derive_seed(config.seed, 0x1417));
  AdamState adam = make_adam_state(params.size(), config.learning_rate);
  ModelParams best = params;
  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0, since_reduction = 0;

  std::vector<std::size_t> order = indices.train;
  const auto visit = [&](std::span<const std::size_t> idx) {
    if (hooks.on_visit)
      for (const auto i : idx) hooks.on_visit(i);
  };

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order = indices.train;
    seeded_shuffle(order, derive_seed(config.seed, 0xE90C, epoch));

    double loss_sum = 0.0;
    std::vector<const Eigen::MatrixXd*> batch;
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, n);
      visit(idx);
      batch.clear();
      for (const auto i : idx) batch.push_back(&segments[i].values);

      const ForwardCache cache = forward_batch(params, batch, true, derive_seed(config.seed, epoch, b + 1));
      Eigen::RowVectorXd dpred(static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k) {
        const double target = segments[idx[k]].label;
        const double pred = cache.predictions(static_cast<Eigen::Index>(k));
        const LossValue lv = model_config.head == HeadType::Binary ? bce_loss(pred, target) : mse_loss(pred, target);
        loss_sum += lv.loss;
        dpred(static_cast<Eigen::Index>(k)) = lv.grad / static_cast<double>(n);
      }
      adam_step(adam, params, backward(params, cache, dpred));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    std::optional<double> injected;
    if (hooks.val_loss_override) injected = hooks.val_loss_override(epoch, params);
    if (injected) {
      rec.val_loss = *injected;
    } else if (!indices.val.empty()) {
      visit(indices.val);
      rec.val_loss = evaluate_loss(params, segments, indices.val, config.batch_size);
    } else {
      rec.val_loss = rec.train_loss;
    }

    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss) || !params.flat().allFinite()) {
      rec.learning_rate = adam.learning_rate;
      history.epochs.push_back(rec);
      history.stopped_epoch = epoch;
      throw TrainingDiverged(history, "non-finite loss at epoch " + std::to_string(epoch));
    }

    bool stop = false;
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = params;
      history.best_epoch = epoch;
      since_best = 0;
      since_reduction = 0;
    } else {
      ++since_best;
      ++since_reduction;
      if (since_reduction >= config.lr_plateau_patience) {
        adam.learning_rate *= config.lr_factor;
        history.lr_reductions.push_back(epoch);
        since_reduction = 0;
      }
      stop = since_best >= config.early_stop_patience;
    }
    rec.learning_rate = adam.learning_rate;
    history.epochs.push_back(rec);
    history.stopped_epoch = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stop) break;
  }
  history.best_val_loss = best_val;
  return {std::move(best), std::move(history)};
}

RepeatResult repeat_runs(std::span<const WindowSegment> segments, const ModelConfig& model_config,
                         const TrainingConfig& config, std::size_t n) {
  if (n < 1) throw Error(ErrorCode::ConfigInvalid, "repeat count must be >= 1");
  RepeatResult out;
  std::vector<MetricsReport> reports;
  for (std::size_t r = 0; r < n; ++r) {
    TrainingConfig run_cfg = config;
    run_cfg.seed = config.seed + r;
    RunResult run;
    run.indices = split(segments, run_cfg);
    TrainResult trained = train(segments, run.indices, model_config, run_cfg);
    run.history = std::move(trained.history);
    run.test_metrics = evaluate(trained.params, segments, run.indices.test, run_cfg.metric_threshold);
    reports.push_back(run.test_metrics);
    out.runs.push_back(std::move(run));
  }
  out.aggregate = aggregate(std::move(reports));
  return out;
}

CrossValidationResult kfold_cv(std::span<const WindowSegment> segments, std::size_t k, const ModelConfig& model_config,
                               const TrainingConfig& config) {
  CrossValidationResult out;
  out.test_folds = kfold_folds(segments.size(), k, config.seed);
  std::vector<MetricsReport> reports;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) rest.insert(rest.end(), out.test_folds[g].begin(), out.test_folds[g].end());
    const std::size_t n_val = rounded(config.val_fraction_of_train * static_cast<double>(rest.size()));
    SplitIndices idx;
    idx.train.assign(rest.begin(), rest.end() - static_cast<std::ptrdiff_t>(n_val));
    idx.val.assign(rest.end() - static_cast<std::ptrdiff_t>(n_val), rest.end());
    idx.test = out.test_folds[f];

    TrainingConfig fold_cfg = config;
    fold_cfg.seed = derive_seed(config.seed, 0xC5, f);
    const TrainResult trained = train(segments, idx, model_config, fold_cfg);
    reports.push_back(evaluate(trained.params, segments, idx.test, config.metric_threshold));
  }
  out.fold_metrics = reports;
  out.aggregate = aggregate(std::move(reports));
  return out;
}

}  // namespace pulsesense
