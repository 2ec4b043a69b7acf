#include <doctest.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "pulsesense/streaming.hpp"
#include "pulsesense/synth.hpp"
#include "support.hpp"

using namespace pulsesense;
using testing::error_code;

namespace {

std::vector<Eigen::MatrixXd> streamed_windows(const CsiStream& stream, const PipelineConfig& cfg,
                                              std::vector<double>* t_end = nullptr, std::size_t* max_rows = nullptr) {
  StreamingPipeline pipe(cfg, summarize(stream, cfg.subcarriers));
  std::vector<Eigen::MatrixXd> out;
  const auto sink = [&](const StreamWindow& w) {
    CHECK(w.start_index == out.size() * cfg.stride);
    out.push_back(*w.values);
    if (t_end) t_end->push_back(w.t_end);
  };
  for (const auto& f : stream.frames) {
    pipe.push(f, sink);
    if (max_rows) *max_rows = std::max(*max_rows, pipe.buffered_rows());
  }
  pipe.finish(sink);
  return out;
}

bool bit_equal(const std::vector<Eigen::MatrixXd>& a, const std::vector<Eigen::MatrixXd>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) return false;
    if (std::memcmp(a[i].data(), b[i].data(), sizeof(double) * static_cast<std::size_t>(a[i].size())) != 0) return false;
  }
  return true;
}

std::string esp32_text(const CsiStream& s) {
  std::string out = "timestamp,csi\n";
  char buf[64];
  const auto put = [&](double v) { out.append(buf, std::to_chars(buf, buf + sizeof buf, v).ptr); };
  for (const auto& f : s.frames) {
    put(f.timestamp);
    for (const auto& z : f.subcarriers) {
      out += ',' + std::to_string(std::llround(z.imag()));
      out += ',' + std::to_string(std::llround(z.real()));
    }
    out += '\n';
  }
  return out;
}

Scenario small_scenario(double duration = 30.0, std::size_t sc = 4) {
  Scenario s;
  s.duration_s = duration;
  s.subcarriers = sc;
  s.seed = 6;
  return s;
}

}  // namespace

TEST_CASE("streamed windows equal batch windows bit for bit") {
  const auto stream = generate(small_scenario()).stream;
  PipelineConfig cfg;
  std::size_t max_rows = 0;
  std::vector<double> t_end;
  const auto streamed = streamed_windows(stream, cfg, &t_end, &max_rows);
  const auto batch = process_stream(stream, cfg);
  CHECK(streamed.size() == 2001);
  CHECK(bit_equal(streamed, batch));
  CHECK(max_rows == 400);
  for (std::size_t i = 0; i < t_end.size(); ++i) CHECK(t_end[i] == stream.frames[i + 399].timestamp);
}

TEST_CASE("bit equality holds across modes, strides and subcarrier subsets") {
  const auto stream = testing::random_stream(900, 6, 20.0, 3);
  for (auto mode : {PipelineMode::Heart, PipelineMode::Breath, PipelineMode::Apnea}) {
    for (std::size_t stride : {1u, 3u, 17u}) {
      PipelineConfig cfg;
      cfg.mode = mode;
      cfg.window_s = mode == PipelineMode::Heart ? 5.0 : 10.0;
      cfg.stride = stride;
      cfg.subcarriers = stride == 3 ? std::vector<std::size_t>{4, 1} : std::vector<std::size_t>{};
      cfg.savgol_window = stride == 17 ? 7 : 15;
      CHECK(bit_equal(streamed_windows(stream, cfg), process_stream(stream, cfg)));
    }
  }
}

TEST_CASE("windows near the smoother's reach of the end still match") {
  // Series only just longer than the window and the smoother.
  const auto stream = testing::random_stream(420, 2, 80.0, 9);
  PipelineConfig cfg;
  CHECK(bit_equal(streamed_windows(stream, cfg), process_stream(stream, cfg)));
  const auto exact = testing::random_stream(400, 2, 80.0, 10);
  CHECK(bit_equal(streamed_windows(exact, cfg), process_stream(exact, cfg)));
}

TEST_CASE("in-memory streaming inference equals per-window predict") {
  const auto stream = generate(small_scenario(12.0, 3)).stream;
  PipelineConfig cfg;
  cfg.stride = 5;
  ModelConfig mc;
  mc.input_dim = 3;
  mc.lstm1_units = 8;
  mc.lstm2_units = 4;
  const auto params = init_params(mc, 2);
  std::vector<StreamPrediction> got;
  stream_infer(stream, cfg, params, [&](const StreamPrediction& p) { got.push_back(p); });
  const auto windows = process_stream(stream, cfg);
  REQUIRE(got.size() == windows.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].prediction == predict(params, windows[i]));
    CHECK(got[i].start_index == i * 5);
  }
}

TEST_CASE("file streaming through the reader thread equals the in-memory path") {
  const auto stream = generate(small_scenario(15.0, 3)).stream;
  PipelineConfig cfg;
  cfg.stride = 7;
  ModelConfig mc;
  mc.input_dim = 3;
  mc.lstm1_units = 8;
  mc.lstm2_units = 4;
  const auto params = init_params(mc, 2);

  std::vector<StreamPrediction> memory;
  stream_infer(stream, cfg, params, [&](const StreamPrediction& p) { memory.push_back(p); });

  for (std::size_t capacity : {1u, 3u, 256u}) {
    std::stringstream canon(write_canonical(stream));
    std::vector<StreamPrediction> file;
    stream_infer(canon, StreamFormat::Canonical, cfg, params, [&](const StreamPrediction& p) { file.push_back(p); },
                 std::nullopt, capacity);
    REQUIRE(file.size() == memory.size());
    for (std::size_t i = 0; i < file.size(); ++i) {
      CHECK(file[i].prediction == memory[i].prediction);
      CHECK(file[i].t_end == memory[i].t_end);
    }
  }

  // ESP32 text carries integer CSI, so the values are rounded on the way out.
  const std::string text = esp32_text(stream);
  const auto parsed = parse_esp32_csv(text);
  std::vector<StreamPrediction> parsed_preds, esp;
  stream_infer(parsed, cfg, params, [&](const StreamPrediction& p) { parsed_preds.push_back(p); });
  std::stringstream in(text);
  stream_infer(in, StreamFormat::Esp32Csv, cfg, params, [&](const StreamPrediction& p) { esp.push_back(p); });
  REQUIRE(esp.size() == parsed_preds.size());
  for (std::size_t i = 0; i < esp.size(); ++i) CHECK(esp[i].prediction == parsed_preds[i].prediction);
}

TEST_CASE("scan matches the batch summary") {
  const auto stream = testing::random_stream(300, 5, 40.0, 12);
  std::stringstream in(write_canonical(stream));
  const auto scanned = scan_stream(in, StreamFormat::Canonical, {0, 3});
  const auto direct = summarize(stream, {0, 3});
  CHECK(scanned.frames == 300);
  CHECK(scanned.subcarrier_count == 5);
  CHECK(scanned.sample_rate_hz == direct.sample_rate_hz);
  CHECK(scanned.column_means == direct.column_means);
  const auto means = column_means(select_subcarriers(amplitude(stream), {0, 3}));
  CHECK(direct.column_means == means);
}

TEST_CASE("streaming errors") {
  const auto stream = testing::random_stream(500, 2, 80.0, 1);
  PipelineConfig zero;
  zero.zero_phase = true;
  CHECK(error_code([&] { StreamingPipeline(zero, summarize(stream, {})); }) == ErrorCode::ConfigInvalid);

  PipelineConfig cfg;
  const auto short_stream = testing::random_stream(300, 2, 80.0, 1);
  CHECK(error_code([&] { StreamingPipeline(cfg, summarize(short_stream, {})); }) ==
        ErrorCode::WindowLongerThanSeries);

  // The second pass sees more frames than the first.
  auto summary = summarize(stream, {});
  summary.frames = 450;
  StreamingPipeline pipe(cfg, summary);
  const auto ignore = [](const StreamWindow&) {};
  CHECK(error_code([&] {
          for (const auto& f : stream.frames) pipe.push(f, ignore);
        }) == ErrorCode::InsufficientFrames);

  summary.frames = 550;
  StreamingPipeline short_pipe(cfg, summary);
  CHECK(error_code([&] {
          for (const auto& f : stream.frames) short_pipe.push(f, ignore);
          short_pipe.finish(ignore);
        }) == ErrorCode::InsufficientFrames);
}
