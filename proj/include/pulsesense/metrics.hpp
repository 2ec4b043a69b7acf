#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace pulsesense {

struct RegressionMetrics {
  std::size_t n = 0;
  double mae = 0.0;
  double mape_percent = 0.0;
  double mape_complement = 100.0;  // 100 - MAPE, the form some comparison tables print
  double threshold = 0.0;
  double within_threshold = 0.0;  // fraction of |y - yhat| <= threshold
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct ClassificationMetrics {
  ConfusionCounts confusion;
  double decision_threshold = 0.5;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double kappa = 0.0;
  // Set when the value came from a degenerate-class convention rather than a ratio.
  bool sensitivity_by_convention = false;
  bool specificity_by_convention = false;
  bool kappa_by_convention = false;
};

struct MetricsReport {
  std::optional<RegressionMetrics> regression;
  std::optional<ClassificationMetrics> classification;

  /// Every numeric field under a stable dotted key.
  std::map<std::string, double> values() const;
};

MetricsReport regression_metrics(std::span<const double> truth, std::span<const double> predicted, double threshold);
MetricsReport classification_metrics(std::span<const double> probabilities, std::span<const double> labels,
                                     double decision_threshold = 0.5);
/// Accuracy, sensitivity, specificity and kappa straight from a confusion table.
ClassificationMetrics classification_from_confusion(const ConfusionCounts& counts);

nlohmann::json to_json(const MetricsReport& report);
std::string csv_header(const MetricsReport& report);
std::string csv_row(const MetricsReport& report);

/// Mean and sample standard deviation (n - 1) of every metric across runs.
struct AggregateReport {
  std::vector<MetricsReport> runs;
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;
};

AggregateReport aggregate(std::vector<MetricsReport> runs);
nlohmann::json to_json(const AggregateReport& report);

}  // namespace pulsesense
