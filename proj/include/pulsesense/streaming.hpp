#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pulsesense/csi.hpp"
#include "pulsesense/dsp.hpp"
#include "pulsesense/model.hpp"

namespace pulsesense {

enum class StreamFormat { Esp32Csv, Canonical };

/// What the batch pipeline derives from a whole recording before filtering.
struct StreamSummary {
  std::size_t frames = 0;
  std::size_t subcarrier_count = 0;  // raw width, before selection
  double sample_rate_hz = 0.0;
  Eigen::VectorXd column_means;  // per selected subcarrier
};

/// First pass over a recording: frame count, sample rate and DC means, in O(S) memory.
StreamSummary scan_stream(std::istream& in, StreamFormat format, const std::vector<std::size_t>& subcarriers,
                          std::optional<double> sample_rate_override = std::nullopt);
StreamSummary summarize(const CsiStream& stream, const std::vector<std::size_t>& subcarriers);

/// Calls `sink` for every frame in file order.
void for_each_frame(std::istream& in, StreamFormat format, const std::function<void(CsiFrame&&)>& sink);

struct StreamWindow {
  std::size_t start_index = 0;
  double t_end = 0.0;             // timestamp of the window's last packet
  const Eigen::MatrixXd* values;  // W x S, standardized; valid during the callback
};

/// Packet-at-a-time causal pipeline holding a ring of exactly W smoothed packets.
/// Emits the same standardized windows, bit for bit, as process_stream() in
/// causal mode. The smoother looks m packets ahead, so windows lag by m packets
/// and the last ones appear on finish().
class StreamingPipeline {
 public:
  using Sink = std::function<void(const StreamWindow&)>;

  StreamingPipeline(const PipelineConfig& config, const StreamSummary& summary);

  void push(const CsiFrame& frame, const Sink& sink);
  void finish(const Sink& sink);

  std::size_t window() const noexcept { return window_; }
  std::size_t buffered_rows() const noexcept { return static_cast<std::size_t>(windows_.rows()); }

 private:
  void smoothed(std::size_t index, const Sink& sink);
  void emit_sample(std::size_t index, const Sink& sink);

  PipelineConfig config_;
  BiquadCascade cascade_;
  SavGolKernel kernel_;
  Eigen::VectorXd means_;
  std::vector<std::size_t> columns_;
  std::size_t raw_width_ = 0;
  std::size_t window_ = 0;
  std::vector<CascadeState> states_;

  std::size_t total_ = 0;
  std::size_t received_ = 0;
  std::size_t next_out_ = 0;
  Eigen::MatrixXd filtered_;  // ring of the last 2m+1 filtered packets
  std::vector<double> filtered_t_;
  Eigen::MatrixXd windows_;  // ring of the last W smoothed packets
  std::vector<double> window_t_;
  Eigen::MatrixXd scratch_;
  Eigen::RowVectorXd row_;
};

struct StreamPrediction {
  std::size_t start_index = 0;
  double t_end = 0.0;
  double prediction = 0.0;
};

using PredictionSink = std::function<void(const StreamPrediction&)>;

/// In-memory streaming inference, single threaded.
void stream_infer(const CsiStream& stream, const PipelineConfig& config, const ModelParams& params,
                  const PredictionSink& sink);

/// Two passes over a seekable input. The second pass runs a reader thread that
/// hands frames to the pipeline through a bounded queue of `queue_capacity`.
void stream_infer(std::istream& in, StreamFormat format, const PipelineConfig& config, const ModelParams& params,
                  const PredictionSink& sink, std::optional<double> sample_rate_override = std::nullopt,
                  std::size_t queue_capacity = 256);

}  // namespace pulsesense
