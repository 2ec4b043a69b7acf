#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pulsesense/dsp.hpp"
#include "pulsesense/model.hpp"
#include "pulsesense/synth.hpp"
#include "pulsesense/training.hpp"

namespace pulsesense {

enum class IngestFormat { Esp32Csv, Canonical, Segments };

std::string_view to_string(IngestFormat format) noexcept;
IngestFormat ingest_format_from_string(std::string_view name);

struct IngestConfig {
  IngestFormat format = IngestFormat::Canonical;
  std::string path;
  std::string labels;                    // label CSV; unused for segment dumps
  std::optional<double> sample_rate_hz;  // ESP32 override
};

/// One JSON document with blocks ingest, pipeline, model, training, synth, output.
struct RunConfig {
  IngestConfig ingest;
  std::optional<PipelineConfig> pipeline;
  ModelConfig model;
  bool model_input_dim_set = false;
  bool model_head_set = false;
  TrainingConfig training;
  bool metric_threshold_set = false;
  std::optional<Scenario> scenario;
  std::string output_dir = "out";
};

/// Sets `path.to.key` in `doc`; the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

RunConfig run_config_from_json(const nlohmann::json& doc);

/// Reads the file (empty path = empty document), applies overrides in order, validates.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace pulsesense
