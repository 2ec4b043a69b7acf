#include <istream>
#include <ostream>
#include <string>

#include "binary_io.hpp"
#include "json_util.hpp"
#include "pulsesense/dsp.hpp"
#include "pulsesense/error.hpp"

namespace pulsesense {

std::string_view to_string(PipelineMode mode) noexcept {
  switch (mode) {
    case PipelineMode::Heart: return "heart";
    case PipelineMode::Breath: return "breath";
    case PipelineMode::Apnea: return "apnea";
  }
  return "heart";
}

PipelineMode pipeline_mode_from_string(std::string_view name) {
  if (name == "heart") return PipelineMode::Heart;
  if (name == "breath") return PipelineMode::Breath;
  if (name == "apnea") return PipelineMode::Apnea;
  throw Error(ErrorCode::ConfigInvalid, "unknown pipeline mode '" + std::string(name) + "'");
}

LabelKind label_kind_for(PipelineMode mode) noexcept {
  switch (mode) {
    case PipelineMode::Heart: return LabelKind::HeartRateBpm;
    case PipelineMode::Breath: return LabelKind::BreathingRateBrpm;
    case PipelineMode::Apnea: return LabelKind::ApneaFlag;
  }
  return LabelKind::HeartRateBpm;
}

std::pair<double, double> band_for(const PipelineConfig& config) {
  std::pair<double, double> band;
  switch (config.mode) {
    case PipelineMode::Heart: band = {0.8, 2.17}; break;
    case PipelineMode::Breath: band = {0.1, 0.5}; break;
    case PipelineMode::Apnea: band = {0.0, 0.5}; break;
  }
  if (config.band_low_hz) band.first = *config.band_low_hz;
  if (config.band_high_hz) band.second = *config.band_high_hz;
  return band;
}

FilterSpec filter_spec_for(const PipelineConfig& config, double sample_rate_hz) {
  const auto [low, high] = band_for(config);
  return FilterSpec{low, high, config.filter_order, sample_rate_hz};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& block) {
  using detail::get_or;
  constexpr std::string_view where = "pipeline";
  detail::require_known_keys(block, {"mode", "window_s", "stride", "band", "savgol", "zero_phase", "order", "subcarriers"},
                             where);
  PipelineConfig c;
  c.mode = pipeline_mode_from_string(get_or<std::string>(block, "mode", "heart", where));
  c.window_s = get_or<double>(block, "window_s", c.window_s, where);
  const auto stride = get_or<long long>(block, "stride", 1, where);
  if (stride < 1) throw Error(ErrorCode::ConfigInvalid, "pipeline.stride must be >= 1");
  c.stride = static_cast<std::size_t>(stride);
  c.zero_phase = get_or<bool>(block, "zero_phase", false, where);
  c.filter_order = get_or<int>(block, "order", 3, where);
  if (const auto band = block.find("band"); band != block.end()) {
    detail::require_known_keys(*band, {"low_hz", "high_hz"}, "pipeline.band");
    if (band->contains("low_hz")) c.band_low_hz = get_or<double>(*band, "low_hz", 0.0, "pipeline.band");
    if (band->contains("high_hz")) c.band_high_hz = get_or<double>(*band, "high_hz", 0.0, "pipeline.band");
  }
  if (const auto sg = block.find("savgol"); sg != block.end()) {
    detail::require_known_keys(*sg, {"window", "order"}, "pipeline.savgol");
    c.savgol_window = get_or<int>(*sg, "window", c.savgol_window, "pipeline.savgol");
    c.savgol_order = get_or<int>(*sg, "order", c.savgol_order, "pipeline.savgol");
  }
  if (const auto subs = block.find("subcarriers"); subs != block.end()) {
    if (!subs->is_array()) throw Error(ErrorCode::ConfigInvalid, "pipeline.subcarriers must be an array");
    for (const auto& v : *subs) {
      if (!v.is_number_unsigned()) throw Error(ErrorCode::ConfigInvalid, "pipeline.subcarriers entries must be >= 0");
      c.subcarriers.push_back(v.get<std::size_t>());
    }
  }
  if (!(c.window_s > 0.0)) throw Error(ErrorCode::ConfigInvalid, "pipeline.window_s must be positive");
  // Surface kernel problems at config time.
  (void)savgol_kernel(c.savgol_window, c.savgol_order);
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  const auto [low, high] = band_for(c);
  nlohmann::json j;
  j["mode"] = to_string(c.mode);
  j["window_s"] = c.window_s;
  j["stride"] = c.stride;
  j["band"] = {{"low_hz", low}, {"high_hz", high}};
  j["order"] = c.filter_order;
  j["savgol"] = {{"window", c.savgol_window}, {"order", c.savgol_order}};
  j["zero_phase"] = c.zero_phase;
  j["subcarriers"] = c.subcarriers;
  return j;
}

AmplitudeSeries preprocess(const CsiStream& stream, const PipelineConfig& config) {
  const BiquadCascade cascade = design_bandpass(filter_spec_for(config, stream.sample_rate_hz));
  const SavGolKernel kernel = savgol_kernel(config.savgol_window, config.savgol_order);
  AmplitudeSeries a = remove_dc(select_subcarriers(amplitude(stream), config.subcarriers));
  a = config.zero_phase ? apply_filter_zero_phase(cascade, a) : apply_filter(cascade, a);
  return savgol_smooth(kernel, a);
}

std::vector<Eigen::MatrixXd> process_stream(const CsiStream& stream, const PipelineConfig& config) {
  const AmplitudeSeries shaped = preprocess(stream, config);
  const std::size_t w = window_length(config.window_s, shaped.sample_rate_hz);
  std::vector<Eigen::MatrixXd> out;
  for (const auto start : segment_starts(static_cast<std::size_t>(shaped.samples()), w, config.stride)) {
    out.push_back(standardize(shaped.values.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(w))));
  }
  return out;
}

std::vector<WindowSegment> run_pipeline(const AlignedRecording& recording, const PipelineConfig& config,
                                        int recording_id) {
  if (recording.labels.kind != label_kind_for(config.mode)) {
    throw Error(ErrorCode::ConfigInvalid, "pipeline mode '" + std::string(to_string(config.mode)) +
                                              "' needs " + std::string(to_string(label_kind_for(config.mode))) +
                                              " labels");
  }
  const AmplitudeSeries shaped = preprocess(recording.stream, config);
  const double fs = shaped.sample_rate_hz;
  const std::size_t w = window_length(config.window_s, fs);
  std::vector<WindowSegment> out;
  for (const auto start : segment_starts(static_cast<std::size_t>(shaped.samples()), w, config.stride)) {
    WindowSegment seg;
    seg.values = standardize(shaped.values.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(w)));
    seg.start_index = start;
    seg.duration_s = static_cast<double>(w) / fs;
    seg.recording_id = recording_id;
    if (config.mode == PipelineMode::Apnea) {
      std::size_t ones = 0;
      for (std::size_t t = start; t < start + w; ++t) ones += recording.alignment[t] == 1.0 ? 1 : 0;
      seg.label = 2 * ones >= w ? 1.0 : 0.0;
    } else {
      double sum = 0.0;
      for (std::size_t t = start; t < start + w; ++t) sum += recording.alignment[t];
      seg.label = sum / static_cast<double>(w);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

// --- segment dump -----------------------------------------------------------

namespace {
constexpr std::string_view kSegmentMagic = "PSSEG1";
}

void write_segment_dump(std::ostream& out, const std::vector<WindowSegment>& segments) {
  std::string buf(kSegmentMagic);
  const std::uint32_t w = segments.empty() ? 0 : static_cast<std::uint32_t>(segments.front().values.rows());
  const std::uint32_t s = segments.empty() ? 0 : static_cast<std::uint32_t>(segments.front().values.cols());
  detail::put_u32(buf, static_cast<std::uint32_t>(segments.size()));
  detail::put_u32(buf, w);
  detail::put_u32(buf, s);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  for (const auto& seg : segments) {
    if (seg.values.rows() != w || seg.values.cols() != s) {
      throw Error(ErrorCode::ShapeMismatch, "segments in one dump must share W x S");
    }
    buf.clear();
    for (Eigen::Index t = 0; t < seg.values.rows(); ++t) {
      for (Eigen::Index k = 0; k < seg.values.cols(); ++k) detail::put_f32(buf, static_cast<float>(seg.values(t, k)));
    }
    detail::put_f32(buf, static_cast<float>(seg.label));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing segment dump");
}

std::vector<WindowSegment> read_segment_dump(std::istream& in, double sample_rate_hz) {
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = kSegmentMagic.size() + 12;
  if (data.size() < header || std::string_view(data).substr(0, kSegmentMagic.size()) != kSegmentMagic) {
    throw Error(ErrorCode::BadMagic, "not a PSSEG1 segment dump");
  }
  const std::uint32_t count = detail::get_u32(data, 6);
  const std::uint32_t w = detail::get_u32(data, 10);
  const std::uint32_t s = detail::get_u32(data, 14);
  const std::size_t record = (static_cast<std::size_t>(w) * s + 1) * 4;
  if (data.size() != header + record * count) throw Error(ErrorCode::MalformedLine, "segment dump size mismatch");

  std::vector<WindowSegment> out(count);
  std::size_t off = header;
  for (auto& seg : out) {
    seg.values.resize(w, s);
    for (std::uint32_t t = 0; t < w; ++t) {
      for (std::uint32_t k = 0; k < s; ++k, off += 4) seg.values(t, k) = detail::get_f32(data, off);
    }
    seg.label = detail::get_f32(data, off);
    off += 4;
    if (sample_rate_hz > 0.0) seg.duration_s = w / sample_rate_hz;
  }
  return out;
}

}  // namespace pulsesense
