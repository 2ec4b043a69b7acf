#pragma once

// CSI recordings, ground-truth label series and their time alignment.
//
// Supported text formats (LF line endings, decimal numerics):
//   ESP32 CSV       `timestamp,im0,re0,im1,re1,...` (integers, imaginary first)
//   canonical JSONL header {"schema":"pulse-sense/csi/v1","sample_rate_hz":..,"subcarriers":S}
//                   then one {"t":..,"re":[..],"im":[..]} object per frame
//   label CSV       `timestamp,value`

#include <complex>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace pulsesense {

inline constexpr std::string_view kCanonicalSchema = "pulse-sense/csi/v1";

struct CsiFrame {
  double timestamp = 0.0;
  std::vector<std::complex<double>> subcarriers;
  std::optional<std::string> source_meta;

  friend bool operator==(const CsiFrame&, const CsiFrame&) = default;
};

struct CsiStream {
  std::vector<CsiFrame> frames;
  double sample_rate_hz = 0.0;
  std::size_t subcarrier_count = 0;

  std::size_t size() const noexcept { return frames.size(); }
  bool empty() const noexcept { return frames.empty(); }

  friend bool operator==(const CsiStream&, const CsiStream&) = default;
};

enum class LabelKind { HeartRateBpm, BreathingRateBrpm, ApneaFlag };

std::string_view to_string(LabelKind kind) noexcept;
LabelKind label_kind_from_string(std::string_view name);

/// Throws ValueOutOfRange if `value` is not admissible for `kind`.
void validate_label_value(LabelKind kind, double value, double timestamp);

struct LabelSample {
  double timestamp = 0.0;
  double value = 0.0;

  friend bool operator==(const LabelSample&, const LabelSample&) = default;
};

struct LabelSeries {
  LabelKind kind = LabelKind::HeartRateBpm;
  std::vector<LabelSample> samples;

  friend bool operator==(const LabelSeries&, const LabelSeries&) = default;
};

struct AlignedRecording {
  CsiStream stream;
  LabelSeries labels;
  std::vector<double> alignment;  // one label value per frame
};

struct Esp32ParseOptions {
  std::optional<double> sample_rate_hz;  // overrides the timestamp-based estimate
};

/// Incremental ESP32 CSV line parser. Feed lines in order; the first data line fixes S.
class Esp32LineParser {
 public:
  /// Returns std::nullopt for blank lines and the optional header line.
  std::optional<CsiFrame> parse_line(std::string_view line);

  std::size_t subcarrier_count() const noexcept { return subcarriers_; }
  std::size_t line_number() const noexcept { return line_no_; }

 private:
  std::size_t line_no_ = 0;
  std::size_t subcarriers_ = 0;
  bool seen_data_ = false;
  std::optional<double> last_t_;
};

/// Incremental canonical JSONL parser. The first non-blank line must be the header.
class CanonicalLineParser {
 public:
  std::optional<CsiFrame> parse_line(std::string_view line);

  bool has_header() const noexcept { return header_seen_; }
  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  std::size_t subcarrier_count() const noexcept { return subcarriers_; }
  std::size_t line_number() const noexcept { return line_no_; }

 private:
  std::size_t line_no_ = 0;
  bool header_seen_ = false;
  double sample_rate_hz_ = 0.0;
  std::size_t subcarriers_ = 0;
  std::optional<double> last_t_;
};

/// (N-1)/(t_last - t_first). Throws InsufficientFrames when fewer than two frames
/// or a zero time span make the estimate undefined.
double estimate_sample_rate(std::size_t frame_count, double t_first, double t_last);

CsiStream parse_esp32_csv(std::istream& in, const Esp32ParseOptions& options = {});
CsiStream parse_esp32_csv(std::string_view text, const Esp32ParseOptions& options = {});

CsiStream parse_canonical(std::istream& in);
CsiStream parse_canonical(std::string_view text);
void write_canonical(const CsiStream& stream, std::ostream& out);
std::string write_canonical(const CsiStream& stream);

LabelSeries parse_labels(std::istream& in, LabelKind kind);
LabelSeries parse_labels(std::string_view text, LabelKind kind);
void write_labels(const LabelSeries& labels, std::ostream& out);

/// Nearest-timestamp association; ties go to the earlier label.
AlignedRecording align(CsiStream stream, LabelSeries labels);

/// Label value nearest to `t` (ties -> earlier). `labels` must be non-empty.
double nearest_label(const LabelSeries& labels, double t);

}  // namespace pulsesense
