#include "pulsesense/csi.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "pulsesense/error.hpp"

namespace pulsesense {
namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view field) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  T value{};
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || field.empty()) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) return std::nullopt;
  }
  return value;
}

void check_timestamp(std::optional<double>& last, double t, std::size_t line) {
  if (t < 0.0) throw LineError(ErrorCode::MalformedLine, line, "negative timestamp");
  if (last && !(t > *last)) {
    throw LineError(ErrorCode::NonMonotonicTimestamp, line,
                    "timestamp " + std::to_string(t) + " does not increase");
  }
  last = t;
}

template <typename Parser>
std::vector<CsiFrame> read_frames(std::istream& in, Parser& parser) {
  std::vector<CsiFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (auto frame = parser.parse_line(line)) frames.push_back(std::move(*frame));
  }
  return frames;
}

}  // namespace

std::string_view to_string(LabelKind kind) noexcept {
  switch (kind) {
    case LabelKind::HeartRateBpm: return "heart_rate_bpm";
    case LabelKind::BreathingRateBrpm: return "breathing_rate_brpm";
    case LabelKind::ApneaFlag: return "apnea_flag";
  }
  return "heart_rate_bpm";
}

LabelKind label_kind_from_string(std::string_view name) {
  if (name == "heart_rate_bpm") return LabelKind::HeartRateBpm;
  if (name == "breathing_rate_brpm") return LabelKind::BreathingRateBrpm;
  if (name == "apnea_flag") return LabelKind::ApneaFlag;
  throw Error(ErrorCode::ConfigInvalid, "unknown label kind '" + std::string(name) + "'");
}

void validate_label_value(LabelKind kind, double value, double timestamp) {
  bool ok = std::isfinite(value);
  switch (kind) {
    case LabelKind::HeartRateBpm: ok = ok && value >= 30.0 && value <= 220.0; break;
    case LabelKind::BreathingRateBrpm: ok = ok && value >= 4.0 && value <= 40.0; break;
    case LabelKind::ApneaFlag: ok = ok && (value == 0.0 || value == 1.0); break;
  }
  if (!ok) {
    std::ostringstream msg;
    msg << "value " << value << " at t=" << timestamp << " outside range for " << to_string(kind);
    throw Error(ErrorCode::ValueOutOfRange, msg.str());
  }
}

// ---------------------------------------------------------------------------
// ESP32 CSV

std::optional<CsiFrame> Esp32LineParser::parse_line(std::string_view raw) {
  ++line_no_;
  const auto line = trim(raw);
  if (line.empty()) return std::nullopt;

  const auto fields = split_commas(line);
  const auto t = parse_number<double>(fields.front());
  if (!t) {
    if (!seen_data_ && line_no_ == 1) return std::nullopt;  // header
    throw LineError(ErrorCode::MalformedLine, line_no_, "non-numeric timestamp");
  }

  const std::size_t values = fields.size() - 1;
  if (values == 0) throw LineError(ErrorCode::MalformedLine, line_no_, "no subcarrier values");
  if (values % 2 != 0) {
    throw LineError(ErrorCode::InconsistentSubcarrierCount, line_no_,
                    "odd number of CSI integers (" + std::to_string(values) + ")");
  }
  const std::size_t s = values / 2;
  if (!seen_data_) {
    subcarriers_ = s;
  } else if (s != subcarriers_) {
    throw LineError(ErrorCode::InconsistentSubcarrierCount, line_no_,
                    "expected " + std::to_string(subcarriers_) + " subcarriers, got " + std::to_string(s));
  }

  CsiFrame frame;
  frame.timestamp = *t;
  frame.subcarriers.reserve(s);
  for (std::size_t k = 0; k < s; ++k) {
    const auto im = parse_number<long long>(fields[1 + 2 * k]);
    const auto re = parse_number<long long>(fields[2 + 2 * k]);
    if (!im || !re) throw LineError(ErrorCode::MalformedLine, line_no_, "non-integer CSI value");
    frame.subcarriers.emplace_back(static_cast<double>(*re), static_cast<double>(*im));
  }
  check_timestamp(last_t_, frame.timestamp, line_no_);
  seen_data_ = true;
  return frame;
}

double estimate_sample_rate(std::size_t frame_count, double t_first, double t_last) {
  if (frame_count < 2 || !(t_last > t_first)) {
    throw Error(ErrorCode::InsufficientFrames,
                "sample rate cannot be estimated from " + std::to_string(frame_count) + " frame(s)");
  }
  return static_cast<double>(frame_count - 1) / (t_last - t_first);
}

CsiStream parse_esp32_csv(std::istream& in, const Esp32ParseOptions& options) {
  Esp32LineParser parser;
  CsiStream stream;
  stream.frames = read_frames(in, parser);
  if (stream.frames.empty()) throw Error(ErrorCode::EmptyStream, "no CSI frames in input");
  stream.subcarrier_count = parser.subcarrier_count();
  if (options.sample_rate_hz) {
    if (!(*options.sample_rate_hz > 0.0)) throw Error(ErrorCode::ConfigInvalid, "sample_rate_hz must be positive");
    stream.sample_rate_hz = *options.sample_rate_hz;
  } else {
    stream.sample_rate_hz = estimate_sample_rate(stream.frames.size(), stream.frames.front().timestamp,
                                                 stream.frames.back().timestamp);
  }
  return stream;
}

CsiStream parse_esp32_csv(std::string_view text, const Esp32ParseOptions& options) {
  std::istringstream in{std::string(text)};
  return parse_esp32_csv(in, options);
}

// ---------------------------------------------------------------------------
// canonical JSONL

std::optional<CsiFrame> CanonicalLineParser::parse_line(std::string_view raw) {
  ++line_no_;
  const auto line = trim(raw);
  if (line.empty()) return std::nullopt;

  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw LineError(ErrorCode::MalformedLine, line_no_, e.what());
  }
  if (!doc.is_object()) throw LineError(ErrorCode::MalformedLine, line_no_, "expected a JSON object");

  if (!header_seen_) {
    const auto schema = doc.find("schema");
    if (schema == doc.end() || !schema->is_string() || schema->get<std::string>() != kCanonicalSchema) {
      throw Error(ErrorCode::SchemaMismatch, "header must declare schema \"" + std::string(kCanonicalSchema) + "\"");
    }
    const auto rate = doc.find("sample_rate_hz");
    const auto subs = doc.find("subcarriers");
    if (rate == doc.end() || !rate->is_number() || !(rate->get<double>() > 0.0) || subs == doc.end() ||
        !subs->is_number_unsigned() || subs->get<std::size_t>() == 0) {
      throw Error(ErrorCode::SchemaMismatch, "header needs positive sample_rate_hz and subcarriers");
    }
    for (const auto& [key, value] : doc.items()) {
      if (key != "schema" && key != "sample_rate_hz" && key != "subcarriers") {
        throw Error(ErrorCode::SchemaMismatch, "unexpected header key '" + key + "'");
      }
    }
    sample_rate_hz_ = rate->get<double>();
    subcarriers_ = subs->get<std::size_t>();
    header_seen_ = true;
    return std::nullopt;
  }

  CsiFrame frame;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key != "t" && key != "re" && key != "im" && key != "meta") {
        throw LineError(ErrorCode::MalformedLine, line_no_, "unexpected key '" + key + "'");
      }
    }
    const auto& re = doc.at("re");
    const auto& im = doc.at("im");
    if (!doc.at("t").is_number() || !re.is_array() || !im.is_array()) {
      throw LineError(ErrorCode::MalformedLine, line_no_, "bad field types");
    }
    if (re.size() != subcarriers_ || im.size() != subcarriers_) {
      throw LineError(ErrorCode::MalformedLine, line_no_,
                      "expected " + std::to_string(subcarriers_) + " reals per component");
    }
    frame.timestamp = doc.at("t").get<double>();
    frame.subcarriers.reserve(subcarriers_);
    for (std::size_t k = 0; k < subcarriers_; ++k) {
      if (!re[k].is_number() || !im[k].is_number()) {
        throw LineError(ErrorCode::MalformedLine, line_no_, "non-numeric CSI value");
      }
      frame.subcarriers.emplace_back(re[k].get<double>(), im[k].get<double>());
    }
    if (const auto meta = doc.find("meta"); meta != doc.end()) {
      if (!meta->is_string()) throw LineError(ErrorCode::MalformedLine, line_no_, "meta must be a string");
      frame.source_meta = meta->get<std::string>();
    }
  } catch (const json::exception& e) {
    throw LineError(ErrorCode::MalformedLine, line_no_, e.what());
  }
  check_timestamp(last_t_, frame.timestamp, line_no_);
  return frame;
}

CsiStream parse_canonical(std::istream& in) {
  CanonicalLineParser parser;
  CsiStream stream;
  stream.frames = read_frames(in, parser);
  if (!parser.has_header()) throw Error(ErrorCode::SchemaMismatch, "missing canonical header line");
  stream.sample_rate_hz = parser.sample_rate_hz();
  stream.subcarrier_count = parser.subcarrier_count();
  return stream;
}

CsiStream parse_canonical(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_canonical(in);
}

void write_canonical(const CsiStream& stream, std::ostream& out) {
  nlohmann::ordered_json header;
  header["schema"] = kCanonicalSchema;
  header["sample_rate_hz"] = stream.sample_rate_hz;
  header["subcarriers"] = stream.subcarrier_count;
  out << header.dump() << '\n';

  std::vector<double> re, im;
  for (const auto& frame : stream.frames) {
    re.clear();
    im.clear();
    for (const auto& c : frame.subcarriers) {
      re.push_back(c.real());
      im.push_back(c.imag());
    }
    nlohmann::ordered_json row;
    row["t"] = frame.timestamp;
    row["re"] = re;
    row["im"] = im;
    if (frame.source_meta) row["meta"] = *frame.source_meta;
    out << row.dump() << '\n';
  }
}

std::string write_canonical(const CsiStream& stream) {
  std::ostringstream out;
  write_canonical(stream, out);
  return out.str();
}

// ---------------------------------------------------------------------------
// labels

LabelSeries parse_labels(std::istream& in, LabelKind kind) {
  LabelSeries series;
  series.kind = kind;
  std::optional<double> last_t;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    const auto t = parse_number<double>(fields.front());
    if (!t && series.samples.empty() && line_no == 1) continue;  // header
    if (fields.size() != 2) throw LineError(ErrorCode::MalformedLine, line_no, "expected timestamp,value");
    const auto value = parse_number<double>(fields[1]);
    if (!t || !value) throw LineError(ErrorCode::MalformedLine, line_no, "non-numeric field");
    check_timestamp(last_t, *t, line_no);
    validate_label_value(kind, *value, *t);
    series.samples.push_back({*t, *value});
  }
  return series;
}

LabelSeries parse_labels(std::string_view text, LabelKind kind) {
  std::istringstream in{std::string(text)};
  return parse_labels(in, kind);
}

void write_labels(const LabelSeries& labels, std::ostream& out) {
  out << "timestamp,value\n";
  char buf[64];
  for (const auto& s : labels.samples) {
    auto r = std::to_chars(buf, buf + sizeof buf, s.timestamp);
    *r.ptr++ = ',';
    r = std::to_chars(r.ptr, buf + sizeof buf, s.value);
    out.write(buf, r.ptr - buf);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// alignment

double nearest_label(const LabelSeries& labels, double t) {
  const auto& s = labels.samples;
  const auto it = std::lower_bound(s.begin(), s.end(), t,
                                   [](const LabelSample& a, double v) { return a.timestamp < v; });
  if (it == s.begin()) return it->value;
  if (it == s.end()) return s.back().value;
  const auto prev = std::prev(it);
  return (t - prev->timestamp) <= (it->timestamp - t) ? prev->value : it->value;
}

AlignedRecording align(CsiStream stream, LabelSeries labels) {
  if (stream.empty()) throw Error(ErrorCode::EmptyStream, "cannot align an empty stream");
  if (labels.samples.empty()) throw Error(ErrorCode::InsufficientOverlap, "label series is empty");

  const double s0 = stream.frames.front().timestamp;
  const double s1 = stream.frames.back().timestamp;
  const double l0 = labels.samples.front().timestamp;
  const double l1 = labels.samples.back().timestamp;
  const double span = s1 - s0;
  bool ok = false;
  if (span > 0.0) {
    const double overlap = std::max(0.0, std::min(s1, l1) - std::max(s0, l0));
    ok = overlap >= 0.5 * span;
  } else {
    ok = s0 >= l0 && s0 <= l1;
  }
  if (!ok) {
    std::ostringstream msg;
    msg << "labels span [" << l0 << ", " << l1 << "] cover less than half of stream span [" << s0 << ", " << s1
        << "]";
    throw Error(ErrorCode::InsufficientOverlap, msg.str());
  }

  AlignedRecording rec;
  rec.alignment.reserve(stream.frames.size());
  for (const auto& f : stream.frames) rec.alignment.push_back(nearest_label(labels, f.timestamp));
  rec.stream = std::move(stream);
  rec.labels = std::move(labels);
  return rec;
}

}  // namespace pulsesense
