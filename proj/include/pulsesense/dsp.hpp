#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pulsesense/csi.hpp"

namespace pulsesense {

/// T x S matrix; column s is one subcarrier over time.
struct AmplitudeSeries {
  Eigen::MatrixXd values;
  double sample_rate_hz = 0.0;

  Eigen::Index samples() const noexcept { return values.rows(); }
  Eigen::Index subcarriers() const noexcept { return values.cols(); }
};

struct FilterSpec {
  double low_cut_hz = 0.0;  // 0 selects a low-pass design
  double high_cut_hz = 0.0;
  int order = 3;
  double sample_rate_hz = 0.0;
};

/// Throws InvalidBand (edges) or ConfigInvalid (order, rate).
void validate(const FilterSpec& spec);

/// Second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  bool stable() const noexcept;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double overall_gain = 1.0;
};

/// Per-section direct-form II transposed state for one channel.
class CascadeState {
 public:
  explicit CascadeState(std::size_t sections = 0) : z_(sections, {0.0, 0.0}) {}

  double process(const BiquadCascade& cascade, double x) noexcept;
  void reset() noexcept;

 private:
  std::vector<std::array<double, 2>> z_;
};

/// Butterworth band-pass (or low-pass when low_cut_hz == 0) via bilinear transform
/// with both edges pre-warped.
BiquadCascade design_bandpass(const FilterSpec& spec);

/// H(e^{j omega}), omega in radians per sample.
std::complex<double> frequency_response(const BiquadCascade& cascade, double omega);
std::complex<double> frequency_response_hz(const BiquadCascade& cascade, double f_hz, double sample_rate_hz);

// --- stages ---------------------------------------------------------------

AmplitudeSeries amplitude(const CsiStream& stream);

/// Keeps only the listed subcarrier columns, in the given order.
AmplitudeSeries select_subcarriers(const AmplitudeSeries& series, const std::vector<std::size_t>& indices);

/// Per-column arithmetic mean, summed in time order.
Eigen::VectorXd column_means(const AmplitudeSeries& series);
AmplitudeSeries remove_dc(const AmplitudeSeries& series);

/// Causal single pass, zero initial conditions, columns independent.
AmplitudeSeries apply_filter(const BiquadCascade& cascade, const AmplitudeSeries& series);
/// Forward then time-reversed pass (squared magnitude, zero phase).
AmplitudeSeries apply_filter_zero_phase(const BiquadCascade& cascade, const AmplitudeSeries& series);

struct SavGolKernel {
  std::vector<double> coefficients;  // offsets -m..m
  int window = 0;
  int poly_order = 0;

  int half_width() const noexcept { return window / 2; }
};

SavGolKernel savgol_kernel(int window, int poly_order);

/// Mirror index for sample position `j` in a series of length `n` (no edge repeat).
inline std::ptrdiff_t mirror_index(std::ptrdiff_t j, std::ptrdiff_t n) noexcept {
  if (j < 0) return -j;
  if (j >= n) return 2 * (n - 1) - j;
  return j;
}

/// One smoothed sample; `at(j)` must return the (already mirror-resolved) input at j.
template <typename Accessor>
double savgol_point(const SavGolKernel& kernel, std::ptrdiff_t i, std::ptrdiff_t n, Accessor&& at) {
  const std::ptrdiff_t m = kernel.half_width();
  double acc = 0.0;
  for (std::ptrdiff_t k = -m; k <= m; ++k) acc += kernel.coefficients[k + m] * at(mirror_index(i + k, n));
  return acc;
}

AmplitudeSeries savgol_smooth(const SavGolKernel& kernel, const AmplitudeSeries& series);

/// round(window_s * sample_rate_hz).
std::size_t window_length(double window_s, double sample_rate_hz);
std::vector<std::size_t> segment_starts(std::size_t total, std::size_t window, std::size_t stride);
std::vector<Eigen::MatrixXd> segment(const AmplitudeSeries& series, double window_s, std::size_t stride = 1);

/// Column z-score with population standard deviation; near-constant columns -> 0.
Eigen::MatrixXd standardize(const Eigen::Ref<const Eigen::MatrixXd>& window);

struct WindowSegment {
  Eigen::MatrixXd values;  // W x S, standardized
  double label = 0.0;
  std::size_t start_index = 0;
  double duration_s = 0.0;
  int recording_id = 0;
};

// --- pipeline -------------------------------------------------------------

enum class PipelineMode { Heart, Breath, Apnea };

std::string_view to_string(PipelineMode mode) noexcept;
PipelineMode pipeline_mode_from_string(std::string_view name);
LabelKind label_kind_for(PipelineMode mode) noexcept;

struct PipelineConfig {
  PipelineMode mode = PipelineMode::Heart;
  double window_s = 5.0;
  std::size_t stride = 1;
  std::optional<double> band_low_hz;   // overrides the mode default
  std::optional<double> band_high_hz;  // overrides the mode default
  int filter_order = 3;
  int savgol_window = 15;
  int savgol_order = 3;
  bool zero_phase = false;
  std::vector<std::size_t> subcarriers;  // empty = all
};

/// (low, high) in Hz for the mode, with explicit overrides applied.
std::pair<double, double> band_for(const PipelineConfig& config);
FilterSpec filter_spec_for(const PipelineConfig& config, double sample_rate_hz);

PipelineConfig pipeline_config_from_json(const nlohmann::json& block);
nlohmann::json to_json(const PipelineConfig& config);

/// amplitude -> subcarrier subset -> remove_dc -> band filter -> Savitzky-Golay.
AmplitudeSeries preprocess(const CsiStream& stream, const PipelineConfig& config);

/// Full pipeline without labels: standardized windows in start order.
std::vector<Eigen::MatrixXd> process_stream(const CsiStream& stream, const PipelineConfig& config);

/// Full pipeline with per-window labels (rate modes: mean; apnea: >= 50% rule).
std::vector<WindowSegment> run_pipeline(const AlignedRecording& recording, const PipelineConfig& config,
                                        int recording_id = 0);

// --- segment dump ("PSSEG1") ------------------------------------------------

void write_segment_dump(std::ostream& out, const std::vector<WindowSegment>& segments);
std::vector<WindowSegment> read_segment_dump(std::istream& in, double sample_rate_hz = 0.0);

}  // namespace pulsesense
