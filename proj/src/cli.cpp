#include "pulsesense/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "pulsesense/bench.hpp"
#include "pulsesense/config.hpp"
#include "pulsesense/error.hpp"
#include "pulsesense/streaming.hpp"

namespace pulsesense {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

struct CommandOptions {
  std::string model_path;
  std::size_t repeats = 1;
  std::size_t k = 10;
  BenchOptions bench;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
  if (path.empty()) throw Error(ErrorCode::ConfigInvalid, "ingest.path is required");
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return in;
}

fs::path output_path(const RunConfig& cfg, const char* name) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + cfg.output_dir + "': " + ec.message());
  return fs::path(cfg.output_dir) / name;
}

std::ofstream open_output(const RunConfig& cfg, const char* name, std::ios::openmode mode = std::ios::out) {
  const auto path = output_path(cfg, name);
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  return out;
}

void write_json(const RunConfig& cfg, const char* name, const nlohmann::json& j) {
  auto out = open_output(cfg, name);
  out << j.dump(2) << '\n';
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsiStream load_stream(const IngestConfig& ingest) {
  if (ingest.format == IngestFormat::Segments) {
    throw Error(ErrorCode::ConfigInvalid, "this command needs a CSI recording, not a segment dump");
  }
  auto in = open_input(ingest.path);
  if (ingest.format == IngestFormat::Esp32Csv) return parse_esp32_csv(in, {ingest.sample_rate_hz});
  return parse_canonical(in);
}

PipelineConfig pipeline_of(const RunConfig& cfg) { return cfg.pipeline.value_or(PipelineConfig{}); }

std::vector<WindowSegment> load_segments(const RunConfig& cfg, const PipelineConfig& pipeline) {
  if (cfg.ingest.format == IngestFormat::Segments) {
    auto in = open_input(cfg.ingest.path, std::ios::binary);
    return read_segment_dump(in, cfg.ingest.sample_rate_hz.value_or(0.0));
  }
  if (cfg.ingest.labels.empty()) throw Error(ErrorCode::ConfigInvalid, "ingest.labels is required");
  auto label_in = open_input(cfg.ingest.labels);
  LabelSeries labels = parse_labels(label_in, label_kind_for(pipeline.mode));
  return run_pipeline(align(load_stream(cfg.ingest), std::move(labels)), pipeline);
}

// Input width comes from the data unless the config pins it; the head follows the mode.
ModelConfig model_for(const RunConfig& cfg, const PipelineConfig& pipeline, const std::vector<WindowSegment>& segs) {
  if (segs.empty()) throw Error(ErrorCode::TooFewSegments, "no segments");
  ModelConfig mc = cfg.model;
  const auto width = static_cast<std::size_t>(segs.front().values.cols());
  if (cfg.model_input_dim_set && mc.input_dim != width) {
    throw Error(ErrorCode::ShapeMismatch, "model.input_dim " + std::to_string(mc.input_dim) + " but data has " +
                                              std::to_string(width) + " subcarriers");
  }
  mc.input_dim = width;
  const HeadType wanted = pipeline.mode == PipelineMode::Apnea ? HeadType::Binary : HeadType::Regression;
  if (cfg.model_head_set && mc.head != wanted) {
    throw Error(ErrorCode::ConfigInvalid, "model.head does not suit pipeline mode " + std::string(to_string(pipeline.mode)));
  }
  mc.head = wanted;
  validate(mc);
  return mc;
}

TrainingConfig training_for(const RunConfig& cfg, const PipelineConfig& pipeline) {
  TrainingConfig tc = cfg.training;
  if (!cfg.metric_threshold_set && pipeline.mode == PipelineMode::Breath) tc.metric_threshold = 0.75;
  return tc;
}

LoadedModel load_model_file(const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::ConfigInvalid, "--model is required");
  return load_model(read_file(path));
}

// The pipeline recorded at training time unless the config supplies one.
PipelineConfig pipeline_for_model(const RunConfig& cfg, const LoadedModel& model) {
  if (cfg.pipeline) return *cfg.pipeline;
  if (model.meta.contains("pipeline")) return pipeline_config_from_json(model.meta["pipeline"]);
  return PipelineConfig{};
}

void check_width(const ModelParams& params, std::size_t width) {
  if (params.config().input_dim != width) {
    throw Error(ErrorCode::ShapeMismatch, "model expects " + std::to_string(params.config().input_dim) +
                                              " subcarriers, data has " + std::to_string(width));
  }
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.scenario) throw Error(ErrorCode::ConfigInvalid, "synth.scenario is required");
  const SynthRecording rec = generate(*cfg.scenario);
  {
    auto f = open_output(cfg, "stream.jsonl");
    write_canonical(rec.stream, f);
  }
  const std::pair<const char*, const LabelSeries*> label_files[] = {
      {"heart.csv", &rec.heart}, {"breath.csv", &rec.breath}, {"apnea.csv", &rec.apnea}};
  for (const auto& [name, series] : label_files) {
    auto f = open_output(cfg, name);
    write_labels(*series, f);
  }
  write_json(cfg, "scenario.json", to_json(*cfg.scenario));
  out << "wrote " << rec.stream.size() << " frames to " << cfg.output_dir << '\n';
  return kExitOk;
}

int cmd_process(const RunConfig& cfg, std::ostream& out) {
  const PipelineConfig pipeline = pipeline_of(cfg);
  const auto segs = load_segments(cfg, pipeline);
  {
    auto f = open_output(cfg, "segments.bin", std::ios::binary);
    write_segment_dump(f, segs);
  }
  const nlohmann::json summary = {
      {"segments", segs.size()},
      {"window", segs.empty() ? 0 : segs.front().values.rows()},
      {"subcarriers", segs.empty() ? 0 : segs.front().values.cols()},
      {"pipeline", to_json(pipeline)}};
  write_json(cfg, "summary.json", summary);
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const PipelineConfig pipeline = pipeline_of(cfg);
  const auto segs = load_segments(cfg, pipeline);
  const ModelConfig mc = model_for(cfg, pipeline, segs);
  const TrainingConfig tc = training_for(cfg, pipeline);

  const SplitIndices idx = split(segs, tc);
  TrainResult result = train(segs, idx, mc, tc);
  const MetricsReport metrics = evaluate(result.params, segs, idx.test, tc.metric_threshold);

  const nlohmann::json meta = {{"pipeline", to_json(pipeline)}, {"training", to_json(tc)}};
  {
    auto f = open_output(cfg, "model.psnn", std::ios::binary);
    const std::string bytes = save_model(result.params, meta);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  {
    auto f = open_output(cfg, "history.csv");
    write_history_csv(result.history, f);
  }
  write_json(cfg, "metrics.json", to_json(metrics));
  if (opt.repeats > 1) write_json(cfg, "repeats.json", to_json(repeat_runs(segs, mc, tc, opt.repeats).aggregate));
  out << to_json(metrics).dump() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const LoadedModel model = load_model_file(opt.model_path);
  const PipelineConfig pipeline = pipeline_for_model(cfg, model);
  const auto segs = load_segments(cfg, pipeline);
  if (segs.empty()) throw Error(ErrorCode::TooFewSegments, "no segments");
  check_width(model.params, static_cast<std::size_t>(segs.front().values.cols()));
  double threshold = training_for(cfg, pipeline).metric_threshold;
  if (!cfg.metric_threshold_set && model.meta.contains("training")) {
    threshold = training_config_from_json(model.meta["training"]).metric_threshold;
  }
  std::vector<std::size_t> all(segs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto report = to_json(evaluate(model.params, segs, all, threshold));
  write_json(cfg, "eval_metrics.json", report);
  out << report.dump() << '\n';
  return kExitOk;
}

int cmd_cv(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const PipelineConfig pipeline = pipeline_of(cfg);
  const auto segs = load_segments(cfg, pipeline);
  const ModelConfig mc = model_for(cfg, pipeline, segs);
  const auto cv = kfold_cv(segs, opt.k, mc, training_for(cfg, pipeline));
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& m : cv.fold_metrics) folds.push_back(to_json(m));
  const nlohmann::json report = {{"k", opt.k}, {"folds", folds}, {"aggregate", to_json(cv.aggregate)}};
  write_json(cfg, "cv.json", report);
  out << report["aggregate"]["mean"].dump() << '\n';
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg, const CommandOptions& opt, std::ostream& out) {
  const LoadedModel model = load_model_file(opt.model_path);
  const PipelineConfig pipeline = pipeline_for_model(cfg, model);
  if (cfg.ingest.format == IngestFormat::Segments) {
    throw Error(ErrorCode::ConfigInvalid, "infer reads a CSI recording, not a segment dump");
  }
  auto in = open_input(cfg.ingest.path, std::ios::binary);
  auto f = open_output(cfg, "predictions.csv");
  const auto format = cfg.ingest.format == IngestFormat::Esp32Csv ? StreamFormat::Esp32Csv : StreamFormat::Canonical;
  std::size_t lines = 0;
  stream_infer(
      in, format, pipeline, model.params,
      [&](const StreamPrediction& p) {
        f << shortest(p.t_end) << ',' << shortest(p.prediction) << '\n';
        ++lines;
      },
      cfg.ingest.sample_rate_hz);
  out << "wrote " << lines << " predictions to " << output_path(cfg, "predictions.csv").string() << '\n';
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, CommandOptions opt, std::ostream& out) {
  ModelParams params = opt.model_path.empty() ? init_params(cfg.model, cfg.training.seed)
                                              : load_model_file(opt.model_path).params;
  opt.bench.seed = cfg.training.seed;
  const ThroughputReport report = bench_inference(params, opt.bench);
  auto f = open_output(cfg, "bench.csv");
  f << bench_csv_header() << '\n' << bench_csv_row(report) << '\n';
  out << bench_csv_header() << '\n' << bench_csv_row(report) << '\n';
  return kExitOk;
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return kExitConfig;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Runtime: return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"pulsesense: CSI vital-sign pipeline, LSTM training and evaluation"};
  app.require_subcommand(1);
  Common common;
  CommandOptions opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "JSON run configuration");
    sub->add_option("--set", common.overrides, "Override a config value, path.key=value")->take_all();
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording with labels");
  auto* process = app.add_subcommand("process", "Run the DSP pipeline and dump segments");
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate on the held-out split");
  auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  auto* infer = app.add_subcommand("infer", "Streaming inference over a recording");
  auto* bench = app.add_subcommand("bench", "Inference throughput report");
  for (auto* sub : {synth, process, train_cmd, eval, cv, infer, bench}) add_common(sub);
  train_cmd->add_option("--repeats", opt.repeats, "Also run this many seeded repeats")->check(CLI::PositiveNumber);
  cv->add_option("-k,--folds", opt.k, "Number of folds")->check(CLI::Range(2, 1000000));
  for (auto* sub : {eval, infer}) sub->add_option("-m,--model", opt.model_path, "Model file")->required();
  bench->add_option("-m,--model", opt.model_path, "Model file (fresh weights when absent)");
  bench->add_option("--seq-len", opt.bench.seq_len, "Packets per segment")->check(CLI::PositiveNumber);
  bench->add_option("--batch", opt.bench.batch_size, "Batch size")->check(CLI::PositiveNumber);
  bench->add_option("--n-preds", opt.bench.n_preds_target, "Steady-state predictions")->check(CLI::PositiveNumber);
  bench->add_option("--workers", opt.bench.workers, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--name", opt.bench.model_name, "Model label for the report");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: ConfigInvalid: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const RunConfig cfg = load_run_config(common.config_path, common.overrides);
    if (synth->parsed()) return cmd_synth(cfg, out);
    if (process->parsed()) return cmd_process(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, opt, out);
    if (eval->parsed()) return cmd_eval(cfg, opt, out);
    if (cv->parsed()) return cmd_cv(cfg, opt, out);
    if (infer->parsed()) return cmd_infer(cfg, opt, out);
    return cmd_bench(cfg, opt, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    err << "error: Internal: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace pulsesense
