#include "pulsesense/config.hpp"

#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "pulsesense/error.hpp"

namespace pulsesense {

std::string_view to_string(IngestFormat format) noexcept {
  switch (format) {
    case IngestFormat::Esp32Csv: return "esp32";
    case IngestFormat::Canonical: return "canonical";
    case IngestFormat::Segments: return "segments";
  }
  return "canonical";
}

IngestFormat ingest_format_from_string(std::string_view name) {
  if (name == "esp32") return IngestFormat::Esp32Csv;
  if (name == "canonical") return IngestFormat::Canonical;
  if (name == "segments") return IngestFormat::Segments;
  throw Error(ErrorCode::ConfigInvalid, "ingest.format must be esp32, canonical or segments");
}

void apply_override(nlohmann::json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::ConfigInvalid, "override '" + std::string(assignment) + "' is not path.key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (key.empty()) throw Error(ErrorCode::ConfigInvalid, "empty key in override path '" + path + "'");
    if (node->is_null()) *node = nlohmann::json::object();
    if (!node->is_object()) throw Error(ErrorCode::ConfigInvalid, "override path '" + path + "' crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  using detail::get_or;
  detail::require_known_keys(doc, {"ingest", "pipeline", "model", "training", "synth", "output"}, "config");
  RunConfig c;

  if (doc.contains("ingest")) {
    const auto& b = doc["ingest"];
    detail::require_known_keys(b, {"format", "path", "labels", "sample_rate_hz"}, "ingest");
    c.ingest.format = ingest_format_from_string(get_or<std::string>(b, "format", "canonical", "ingest"));
    c.ingest.path = get_or<std::string>(b, "path", "", "ingest");
    c.ingest.labels = get_or<std::string>(b, "labels", "", "ingest");
    if (b.contains("sample_rate_hz")) {
      const double rate = get_or<double>(b, "sample_rate_hz", 0.0, "ingest");
      if (!(rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "ingest.sample_rate_hz must be positive");
      c.ingest.sample_rate_hz = rate;
    }
  }
  if (doc.contains("pipeline")) c.pipeline = pipeline_config_from_json(doc["pipeline"]);
  if (doc.contains("model")) {
    c.model = model_config_from_json(doc["model"]);
    c.model_input_dim_set = doc["model"].contains("input_dim");
    c.model_head_set = doc["model"].contains("head");
  }
  if (doc.contains("training")) {
    c.training = training_config_from_json(doc["training"]);
    c.metric_threshold_set = doc["training"].contains("metric_threshold");
  }
  if (doc.contains("synth")) {
    const auto& b = doc["synth"];
    detail::require_known_keys(b, {"scenario"}, "synth");
    if (!b.contains("scenario")) throw Error(ErrorCode::ConfigInvalid, "synth.scenario is required");
    c.scenario = scenario_from_json(b["scenario"]);
  }
  if (doc.contains("output")) {
    const auto& b = doc["output"];
    detail::require_known_keys(b, {"dir"}, "output");
    c.output_dir = get_or<std::string>(b, "dir", c.output_dir, "output");
    if (c.output_dir.empty()) throw Error(ErrorCode::ConfigInvalid, "output.dir must not be empty");
  }
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
    doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::ConfigInvalid, "config '" + path + "' is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace pulsesense
