#include "pulsesense/streaming.hpp"

#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <istream>
#include <mutex>
#include <string>
#include <thread>

#include "pulsesense/error.hpp"

namespace pulsesense {
namespace {

template <typename Parser>
void read_lines(std::istream& in, Parser& parser, const std::function<void(CsiFrame&&)>& sink) {
  std::string line;
  while (std::getline(in, line)) {
    if (auto frame = parser.parse_line(line)) sink(std::move(*frame));
  }
}

// Column order after selection; an empty selection keeps every column.
std::vector<std::size_t> selected_columns(const std::vector<std::size_t>& subcarriers, std::size_t width) {
  if (!subcarriers.empty()) {
    for (const auto c : subcarriers) {
      if (c >= width) throw Error(ErrorCode::ConfigInvalid, "subcarrier index " + std::to_string(c) + " out of range");
    }
    return subcarriers;
  }
  std::vector<std::size_t> all(width);
  for (std::size_t i = 0; i < width; ++i) all[i] = i;
  return all;
}

class MeanAccumulator {
 public:
  explicit MeanAccumulator(std::vector<std::size_t> subcarriers) : wanted_(std::move(subcarriers)) {}

  void add(const CsiFrame& f) {
    if (count_ == 0) {
      width_ = f.subcarriers.size();
      columns_ = selected_columns(wanted_, width_);
      sums_.assign(columns_.size(), 0.0);
      first_t_ = f.timestamp;
    }
    if (f.subcarriers.size() != width_) {
      throw Error(ErrorCode::InconsistentSubcarrierCount, "frame " + std::to_string(count_) + " has wrong width");
    }
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      const auto& v = f.subcarriers[columns_[k]];
      sums_[k] += std::hypot(v.real(), v.imag());
    }
    last_t_ = f.timestamp;
    ++count_;
  }

  StreamSummary summary(double sample_rate_hz) const {
    if (count_ == 0) throw Error(ErrorCode::EmptyStream, "no CSI frames in input");
    StreamSummary s;
    s.frames = count_;
    s.subcarrier_count = width_;
    s.sample_rate_hz = sample_rate_hz;
    s.column_means.resize(static_cast<Eigen::Index>(sums_.size()));
    for (std::size_t k = 0; k < sums_.size(); ++k) s.column_means(static_cast<Eigen::Index>(k)) = sums_[k] / static_cast<double>(count_);
    return s;
  }

  std::size_t count() const noexcept { return count_; }
  double first_t() const noexcept { return first_t_; }
  double last_t() const noexcept { return last_t_; }

 private:
  std::vector<std::size_t> wanted_, columns_;
  std::vector<double> sums_;
  std::size_t width_ = 0, count_ = 0;
  double first_t_ = 0.0, last_t_ = 0.0;
};

// Blocking single-producer/single-consumer handoff with a fixed capacity.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  // False once the consumer has closed the queue.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  T pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty(); });
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
};

}  // namespace

void for_each_frame(std::istream& in, StreamFormat format, const std::function<void(CsiFrame&&)>& sink) {
  if (format == StreamFormat::Esp32Csv) {
    Esp32LineParser parser;
    read_lines(in, parser, sink);
  } else {
    CanonicalLineParser parser;
    read_lines(in, parser, sink);
  }
}

StreamSummary scan_stream(std::istream& in, StreamFormat format, const std::vector<std::size_t>& subcarriers,
                          std::optional<double> sample_rate_override) {
  MeanAccumulator acc(subcarriers);
  if (format == StreamFormat::Esp32Csv) {
    Esp32LineParser parser;
    read_lines(in, parser, [&](CsiFrame&& f) { acc.add(f); });
    if (acc.count() == 0) throw Error(ErrorCode::EmptyStream, "no CSI frames in input");
    const double rate =
        sample_rate_override ? *sample_rate_override : estimate_sample_rate(acc.count(), acc.first_t(), acc.last_t());
    return acc.summary(rate);
  }
  CanonicalLineParser parser;
  read_lines(in, parser, [&](CsiFrame&& f) { acc.add(f); });
  if (!parser.has_header()) throw Error(ErrorCode::SchemaMismatch, "missing canonical header");
  return acc.summary(parser.sample_rate_hz());
}

StreamSummary summarize(const CsiStream& stream, const std::vector<std::size_t>& subcarriers) {
  MeanAccumulator acc(subcarriers);
  for (const auto& f : stream.frames) acc.add(f);
  return acc.summary(stream.sample_rate_hz);
}

StreamingPipeline::StreamingPipeline(const PipelineConfig& config, const StreamSummary& summary)
    : config_(config),
      cascade_(design_bandpass(filter_spec_for(config, summary.sample_rate_hz))),
      kernel_(savgol_kernel(config.savgol_window, config.savgol_order)),
      means_(summary.column_means),
      columns_(selected_columns(config.subcarriers, summary.subcarrier_count)),
      raw_width_(summary.subcarrier_count),
      window_(window_length(config.window_s, summary.sample_rate_hz)) {
  if (config.zero_phase) throw Error(ErrorCode::ConfigInvalid, "zero-phase filtering cannot run on a stream");
  if (config.stride == 0) throw Error(ErrorCode::ConfigInvalid, "stride must be >= 1");
  if (summary.frames < static_cast<std::size_t>(kernel_.window)) {
    throw Error(ErrorCode::SeriesTooShort, "stream shorter than the smoothing window");
  }
  if (window_ > summary.frames) {
    throw Error(ErrorCode::WindowLongerThanSeries, "window of " + std::to_string(window_) +
                                                       " packets exceeds stream of " + std::to_string(summary.frames));
  }
  if (static_cast<std::size_t>(means_.size()) != columns_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "summary means do not match the subcarrier selection");
  }
  const auto s = static_cast<Eigen::Index>(columns_.size());
  const auto ring = static_cast<Eigen::Index>(2 * kernel_.half_width() + 1);
  states_.assign(columns_.size(), CascadeState(cascade_.sections.size()));
  filtered_.resize(ring, s);
  filtered_t_.assign(static_cast<std::size_t>(ring), 0.0);
  windows_.resize(static_cast<Eigen::Index>(window_), s);
  window_t_.assign(window_, 0.0);
  scratch_.resize(static_cast<Eigen::Index>(window_), s);
  row_.resize(s);
  total_ = summary.frames;
}

void StreamingPipeline::push(const CsiFrame& frame, const Sink& sink) {
  if (frame.subcarriers.size() != raw_width_) {
    throw Error(ErrorCode::InconsistentSubcarrierCount, "frame " + std::to_string(received_) + " has wrong width");
  }
  if (received_ >= total_) throw Error(ErrorCode::InsufficientFrames, "stream grew between passes");
  const auto ring = filtered_.rows();
  const auto slot = static_cast<Eigen::Index>(received_ % static_cast<std::size_t>(ring));
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    const auto& v = frame.subcarriers[columns_[k]];
    const double centred = std::hypot(v.real(), v.imag()) - means_(static_cast<Eigen::Index>(k));
    filtered_(slot, static_cast<Eigen::Index>(k)) = states_[k].process(cascade_, centred);
  }
  filtered_t_[static_cast<std::size_t>(slot)] = frame.timestamp;
  ++received_;

  const auto m = static_cast<std::size_t>(kernel_.half_width());
  // Interior samples need m packets of lookahead; the right mirror never applies yet.
  while (next_out_ + m < received_ && next_out_ + m < total_) smoothed(next_out_++, sink);
}

void StreamingPipeline::finish(const Sink& sink) {
  if (received_ != total_) throw Error(ErrorCode::InsufficientFrames, "stream shrank between passes");
  while (next_out_ < total_) smoothed(next_out_++, sink);
}

void StreamingPipeline::smoothed(std::size_t index, const Sink& sink) {
  const auto ring = static_cast<std::size_t>(filtered_.rows());
  const auto n = static_cast<std::ptrdiff_t>(total_);
  for (Eigen::Index s = 0; s < filtered_.cols(); ++s) {
    row_(s) = savgol_point(kernel_, static_cast<std::ptrdiff_t>(index), n, [&](std::ptrdiff_t j) {
      return filtered_(static_cast<Eigen::Index>(static_cast<std::size_t>(j) % ring), s);
    });
  }
  const auto slot = index % window_;
  windows_.row(static_cast<Eigen::Index>(slot)) = row_;
  window_t_[slot] = filtered_t_[index % ring];
  emit_sample(index, sink);
}

void StreamingPipeline::emit_sample(std::size_t index, const Sink& sink) {
  if (index + 1 < window_ || (index + 1 - window_) % config_.stride != 0) return;
  const std::size_t start = index + 1 - window_;
  for (std::size_t r = 0; r < window_; ++r) {
    scratch_.row(static_cast<Eigen::Index>(r)) = windows_.row(static_cast<Eigen::Index>((start + r) % window_));
  }
  const Eigen::MatrixXd values = standardize(scratch_);
  sink(StreamWindow{start, window_t_[index % window_], &values});
}

void stream_infer(const CsiStream& stream, const PipelineConfig& config, const ModelParams& params,
                  const PredictionSink& sink) {
  StreamingPipeline pipeline(config, summarize(stream, config.subcarriers));
  const auto on_window = [&](const StreamWindow& w) { sink({w.start_index, w.t_end, predict(params, *w.values)}); };
  for (const auto& f : stream.frames) pipeline.push(f, on_window);
  pipeline.finish(on_window);
}

void stream_infer(std::istream& in, StreamFormat format, const PipelineConfig& config, const ModelParams& params,
                  const PredictionSink& sink, std::optional<double> sample_rate_override, std::size_t queue_capacity) {
  const StreamSummary summary = scan_stream(in, format, config.subcarriers, sample_rate_override);
  in.clear();
  in.seekg(0);
  if (!in) throw Error(ErrorCode::IoError, "input stream is not seekable");

  StreamingPipeline pipeline(config, summary);
  BoundedQueue<std::optional<CsiFrame>> queue(std::max<std::size_t>(queue_capacity, 1));
  std::exception_ptr reader_error;
  std::jthread reader([&] {
    try {
      for_each_frame(in, format, [&](CsiFrame&& f) {
        if (!queue.push(std::move(f))) throw std::runtime_error("consumer stopped");
      });
    } catch (...) {
      reader_error = std::current_exception();
    }
    queue.push(std::nullopt);
  });

  const auto on_window = [&](const StreamWindow& w) { sink({w.start_index, w.t_end, predict(params, *w.values)}); };
  try {
    while (auto frame = queue.pop()) pipeline.push(*frame, on_window);
    reader.join();
    if (reader_error) std::rethrow_exception(reader_error);
    pipeline.finish(on_window);
  } catch (...) {
    queue.close();
    if (reader.joinable()) reader.join();
    throw;
  }
}

}  // namespace pulsesense
