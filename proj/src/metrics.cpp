#include "pulsesense/metrics.hpp"

#include <cmath>
#include <sstream>

#include "pulsesense/error.hpp"

namespace pulsesense {
namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

MetricsReport regression_metrics(std::span<const double> y, std::span<const double> yhat, double threshold) {
  if (y.size() != yhat.size()) throw Error(ErrorCode::LengthMismatch, "truth and prediction lengths differ");
  if (y.empty()) throw Error(ErrorCode::EmptyInput, "no samples");
  RegressionMetrics r;
  r.n = y.size();
  r.threshold = threshold;
  double abs_sum = 0.0, pct_sum = 0.0;
  std::size_t within = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw Error(ErrorCode::ZeroTargetForMAPE, "target " + std::to_string(i) + " is zero");
    const double err = std::abs(y[i] - yhat[i]);
    abs_sum += err;
    pct_sum += std::abs((y[i] - yhat[i]) / y[i]);
    within += err <= threshold ? 1 : 0;
  }
  const auto n = static_cast<double>(r.n);
  r.mae = abs_sum / n;
  r.mape_percent = 100.0 * pct_sum / n;
  r.mape_complement = 100.0 - r.mape_percent;
  r.within_threshold = static_cast<double>(within) / n;
  MetricsReport report;
  report.regression = r;
  return report;
}

ClassificationMetrics classification_from_confusion(const ConfusionCounts& cm) {
  if (cm.total() == 0) throw Error(ErrorCode::EmptyInput, "empty confusion table");
  ClassificationMetrics m;
  m.confusion = cm;
  const auto n = static_cast<double>(cm.total());
  const auto tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
  const auto tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);

  m.accuracy = (tp + tn) / n;
  if (cm.tp + cm.fn == 0) {
    m.sensitivity = 1.0;
    m.sensitivity_by_convention = true;
  } else {
    m.sensitivity = tp / (tp + fn);
  }
  if (cm.tn + cm.fp == 0) {
    m.specificity = 1.0;
    m.specificity_by_convention = true;
  } else {
    m.specificity = tn / (tn + fp);
  }
  const double p_o = m.accuracy;
  const double p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
  if (p_e == 1.0) {
    // Both marginals sit on one class, which forces p_o == 1.
    m.kappa = 1.0;
    m.kappa_by_convention = true;
  } else {
    m.kappa = (p_o - p_e) / (1.0 - p_e);
  }
  return m;
}

MetricsReport classification_metrics(std::span<const double> probs, std::span<const double> labels,
                                     double decision_threshold) {
  if (probs.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "probability and label lengths differ");
  if (probs.empty()) throw Error(ErrorCode::EmptyInput, "no samples");
  ConfusionCounts cm;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw Error(ErrorCode::ValueOutOfRange, "label " + std::to_string(i) + " is not binary");
    }
    const bool predicted = probs[i] >= decision_threshold;
    const bool actual = labels[i] == 1.0;
    if (predicted && actual) ++cm.tp;
    else if (predicted) ++cm.fp;
    else if (actual) ++cm.fn;
    else ++cm.tn;
  }
  MetricsReport report;
  report.classification = classification_from_confusion(cm);
  report.classification->decision_threshold = decision_threshold;
  return report;
}

std::map<std::string, double> MetricsReport::values() const {
  std::map<std::string, double> v;
  if (regression) {
    v["regression.n"] = static_cast<double>(regression->n);
    v["regression.mae"] = regression->mae;
    v["regression.mape_percent"] = regression->mape_percent;
    v["regression.mape_complement"] = regression->mape_complement;
    v["regression.within_threshold_percent"] = 100.0 * regression->within_threshold;
  }
  if (classification) {
    const auto& c = *classification;
    v["classification.n"] = static_cast<double>(c.confusion.total());
    v["classification.accuracy"] = c.accuracy;
    v["classification.sensitivity"] = c.sensitivity;
    v["classification.specificity"] = c.specificity;
    v["classification.kappa"] = c.kappa;
  }
  return v;
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j = nlohmann::json::object();
  if (report.regression) {
    const auto& r = *report.regression;
    j["regression"] = {{"n", r.n},
                       {"mae", r.mae},
                       {"mape_percent", round2(r.mape_percent)},
                       {"mape_complement", round2(r.mape_complement)},
                       {"threshold", r.threshold},
                       {"within_threshold_percent", round2(100.0 * r.within_threshold)}};
  }
  if (report.classification) {
    const auto& c = *report.classification;
    nlohmann::json conventions = nlohmann::json::array();
    if (c.sensitivity_by_convention) conventions.push_back("sensitivity");
    if (c.specificity_by_convention) conventions.push_back("specificity");
    if (c.kappa_by_convention) conventions.push_back("kappa");
    j["classification"] = {{"n", c.confusion.total()},
                           {"tp", c.confusion.tp},
                           {"fp", c.confusion.fp},
                           {"tn", c.confusion.tn},
                           {"fn", c.confusion.fn},
                           {"decision_threshold", c.decision_threshold},
                           {"accuracy", c.accuracy},
                           {"sensitivity", c.sensitivity},
                           {"specificity", c.specificity},
                           {"kappa", c.kappa},
                           {"conventions", conventions}};
  }
  return j;
}

std::string csv_header(const MetricsReport& report) {
  std::string out;
  for (const auto& [key, value] : report.values()) out += (out.empty() ? "" : ",") + key;
  return out;
}

std::string csv_row(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(17);
  bool first = true;
  for (const auto& [key, value] : report.values()) {
    if (!first) out << ',';
    out << value;
    first = false;
  }
  return out.str();
}

AggregateReport aggregate(std::vector<MetricsReport> runs) {
  if (runs.empty()) throw Error(ErrorCode::EmptyInput, "no runs to aggregate");
  AggregateReport agg;
  std::map<std::string, std::vector<double>> columns;
  for (const auto& r : runs)
    for (const auto& [k, v] : r.values()) columns[k].push_back(v);
  for (const auto& [k, xs] : columns) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    bool constant = true;
    for (double x : xs) constant = constant && x == xs.front();
    const double mean = constant ? xs.front() : sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    agg.mean[k] = mean;
    agg.stddev[k] = xs.size() > 1 ? std::sqrt(sq / static_cast<double>(xs.size() - 1)) : 0.0;
  }
  agg.runs = std::move(runs);
  return agg;
}

nlohmann::json to_json(const AggregateReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) runs.push_back(to_json(r));
  return {{"runs", runs}, {"mean", report.mean}, {"std", report.stddev}};
}

}  // namespace pulsesense
