#include "pulsesense/dsp.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "pulsesense/error.hpp"

namespace pulsesense {
namespace {

using cplx = std::complex<double>;

Biquad pole_pair_section(cplx za, cplx zb, double b0, double b1, double b2) {
  Biquad s;
  s.b0 = b0;
  s.b1 = b1;
  s.b2 = b2;
  s.a1 = -(za + zb).real();
  s.a2 = (za * zb).real();
  return s;
}

cplx bilinear(cplx s, double fs2) { return (fs2 + s) / (fs2 - s); }

}  // namespace

void validate(const FilterSpec& spec) {
  if (!(spec.sample_rate_hz > 0.0)) throw Error(ErrorCode::ConfigInvalid, "sample rate must be positive");
  if (spec.order < 1 || spec.order > 8) {
    throw Error(ErrorCode::ConfigInvalid, "filter order must be in [1, 8], got " + std::to_string(spec.order));
  }
  const double nyquist = spec.sample_rate_hz / 2.0;
  if (!(spec.low_cut_hz >= 0.0) || !(spec.high_cut_hz > spec.low_cut_hz) || !(spec.high_cut_hz < nyquist)) {
    std::ostringstream msg;
    msg << "band [" << spec.low_cut_hz << ", " << spec.high_cut_hz << "] Hz invalid for Nyquist " << nyquist << " Hz";
    throw Error(ErrorCode::InvalidBand, msg.str());
  }
}

bool Biquad::stable() const noexcept { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }

double CascadeState::process(const BiquadCascade& cascade, double x) noexcept {
  double v = cascade.overall_gain * x;
  for (std::size_t k = 0; k < cascade.sections.size(); ++k) {
    const Biquad& s = cascade.sections[k];
    auto& z = z_[k];
    const double y = s.b0 * v + z[0];
    z[0] = s.b1 * v - s.a1 * y + z[1];
    z[1] = s.b2 * v - s.a2 * y;
    v = y;
  }
  return v;
}

void CascadeState::reset() noexcept {
  for (auto& z : z_) z = {0.0, 0.0};
}

BiquadCascade design_bandpass(const FilterSpec& spec) {
  validate(spec);
  const int n = spec.order;
  const double fs = spec.sample_rate_hz;
  const double fs2 = 2.0 * fs;
  const double pi = std::numbers::pi;

  // Analog Butterworth prototype poles with non-negative imaginary part; the
  // conjugates are implied.
  std::vector<cplx> proto;
  for (int m = -n + 1; m <= n - 1; m += 2) {
    const cplx p = -std::exp(cplx(0.0, pi * m / (2.0 * n)));
    if (m >= 0) proto.push_back(m == 0 ? cplx(p.real(), 0.0) : p);
  }

  BiquadCascade cascade;
  if (spec.low_cut_hz == 0.0) {
    const double wc = fs2 * std::tan(pi * spec.high_cut_hz / fs);
    cplx denom = 1.0;
    for (const cplx& p : proto) {
      const cplx s = p * wc;
      const cplx z = bilinear(s, fs2);
      if (p.imag() == 0.0) {
        denom *= (fs2 - s);
        Biquad sec;
        sec.b0 = 1.0;
        sec.b1 = 1.0;
        sec.b2 = 0.0;
        sec.a1 = -z.real();
        sec.a2 = 0.0;
        cascade.sections.push_back(sec);
      } else {
        denom *= (fs2 - s) * (fs2 - std::conj(s));
        cascade.sections.push_back(pole_pair_section(z, std::conj(z), 1.0, 2.0, 1.0));
      }
    }
    cascade.overall_gain = std::pow(wc, n) / denom.real();
    return cascade;
  }

  const double w1 = fs2 * std::tan(pi * spec.low_cut_hz / fs);
  const double w2 = fs2 * std::tan(pi * spec.high_cut_hz / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  cplx denom = 1.0;
  for (const cplx& p : proto) {
    const cplx half = p * (bw / 2.0);
    const cplx disc = std::sqrt(half * half - w0sq);
    const cplx s1 = half + disc;
    const cplx s2 = half - disc;
    const cplx z1 = bilinear(s1, fs2);
    const cplx z2 = bilinear(s2, fs2);
    if (p.imag() == 0.0) {
      // Real prototype pole: its two band-pass poles are a conjugate pair or two reals.
      denom *= (fs2 - s1) * (fs2 - s2);
      cascade.sections.push_back(pole_pair_section(z1, z2, 1.0, 0.0, -1.0));
    } else {
      denom *= (fs2 - s1) * (fs2 - std::conj(s1)) * (fs2 - s2) * (fs2 - std::conj(s2));
      cascade.sections.push_back(pole_pair_section(z1, std::conj(z1), 1.0, 0.0, -1.0));
      cascade.sections.push_back(pole_pair_section(z2, std::conj(z2), 1.0, 0.0, -1.0));
    }
  }
  // Analog gain bw^N, N zeros at s = 0 mapped to z = 1, N more at z = -1.
  cascade.overall_gain = std::pow(bw * fs2, n) / denom.real();
  return cascade;
}

std::complex<double> frequency_response(const BiquadCascade& cascade, double omega) {
  const cplx e1 = std::polar(1.0, -omega);
  const cplx e2 = e1 * e1;
  cplx h = cascade.overall_gain;
  for (const auto& s : cascade.sections) h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2);
  return h;
}

std::complex<double> frequency_response_hz(const BiquadCascade& cascade, double f_hz, double sample_rate_hz) {
  return frequency_response(cascade, 2.0 * std::numbers::pi * f_hz / sample_rate_hz);
}

AmplitudeSeries amplitude(const CsiStream& stream) {
  if (stream.empty()) throw Error(ErrorCode::EmptyStream, "amplitude of an empty stream");
  const auto t_count = static_cast<Eigen::Index>(stream.frames.size());
  const auto s_count = static_cast<Eigen::Index>(stream.subcarrier_count);
  AmplitudeSeries out;
  out.sample_rate_hz = stream.sample_rate_hz;
  out.values.resize(t_count, s_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    const auto& sc = stream.frames[t].subcarriers;
    if (static_cast<Eigen::Index>(sc.size()) != s_count) {
      throw Error(ErrorCode::InconsistentSubcarrierCount, "frame " + std::to_string(t) + " has wrong width");
    }
    for (Eigen::Index s = 0; s < s_count; ++s) out.values(t, s) = std::hypot(sc[s].real(), sc[s].imag());
  }
  return out;
}

AmplitudeSeries select_subcarriers(const AmplitudeSeries& series, const std::vector<std::size_t>& indices) {
  if (indices.empty()) return series;
  AmplitudeSeries out;
  out.sample_rate_hz = series.sample_rate_hz;
  out.values.resize(series.samples(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= static_cast<std::size_t>(series.subcarriers())) {
      throw Error(ErrorCode::ConfigInvalid, "subcarrier index " + std::to_string(indices[k]) + " out of range");
    }
    out.values.col(static_cast<Eigen::Index>(k)) = series.values.col(static_cast<Eigen::Index>(indices[k]));
  }
  return out;
}

Eigen::VectorXd column_means(const AmplitudeSeries& series) {
  Eigen::VectorXd mean(series.subcarriers());
  for (Eigen::Index s = 0; s < series.subcarriers(); ++s) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < series.samples(); ++t) acc += series.values(t, s);
    mean(s) = acc / static_cast<double>(series.samples());
  }
  return mean;
}

AmplitudeSeries remove_dc(const AmplitudeSeries& series) {
  AmplitudeSeries out = series;
  const Eigen::VectorXd mean = column_means(series);
  for (Eigen::Index s = 0; s < series.subcarriers(); ++s) {
    for (Eigen::Index t = 0; t < series.samples(); ++t) out.values(t, s) = series.values(t, s) - mean(s);
  }
  return out;
}

AmplitudeSeries apply_filter(const BiquadCascade& cascade, const AmplitudeSeries& series) {
  AmplitudeSeries out = series;
  CascadeState state(cascade.sections.size());
  for (Eigen::Index s = 0; s < series.subcarriers(); ++s) {
    state.reset();
    for (Eigen::Index t = 0; t < series.samples(); ++t) out.values(t, s) = state.process(cascade, series.values(t, s));
  }
  return out;
}

AmplitudeSeries apply_filter_zero_phase(const BiquadCascade& cascade, const AmplitudeSeries& series) {
  AmplitudeSeries forward = apply_filter(cascade, series);
  forward.values = forward.values.colwise().reverse().eval();
  AmplitudeSeries backward = apply_filter(cascade, forward);
  backward.values = backward.values.colwise().reverse().eval();
  return backward;
}

SavGolKernel savgol_kernel(int window, int poly_order) {
  if (window < 1 || window % 2 == 0 || poly_order < 0 || poly_order >= window) {
    throw Error(ErrorCode::InvalidKernelSpec, "window " + std::to_string(window) + ", order " +
                                                  std::to_string(poly_order) + " (need odd window > order >= 0)");
  }
  const int m = window / 2;
  // Offsets scaled to [-1, 1] for conditioning; the fitted value at offset 0 is
  // the constant coefficient under any scaling.
  const double scale = m > 0 ? static_cast<double>(m) : 1.0;
  Eigen::MatrixXd vander(window, poly_order + 1);
  for (int i = 0; i < window; ++i) {
    const double u = static_cast<double>(i - m) / scale;
    double p = 1.0;
    for (int j = 0; j <= poly_order; ++j) {
      vander(i, j) = p;
      p *= u;
    }
  }
  const Eigen::MatrixXd pinv =
      vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));

  SavGolKernel kernel;
  kernel.window = window;
  kernel.poly_order = poly_order;
  kernel.coefficients.resize(window);
  for (int i = 0; i < window; ++i) kernel.coefficients[i] = pinv(0, i);
  for (int k = 1; k <= m; ++k) {
    const double avg = 0.5 * (kernel.coefficients[m - k] + kernel.coefficients[m + k]);
    kernel.coefficients[m - k] = avg;
    kernel.coefficients[m + k] = avg;
  }
  return kernel;
}

AmplitudeSeries savgol_smooth(const SavGolKernel& kernel, const AmplitudeSeries& series) {
  const auto n = static_cast<std::ptrdiff_t>(series.samples());
  if (n < kernel.window) {
    throw Error(ErrorCode::SeriesTooShort, "series of " + std::to_string(n) + " samples shorter than window " +
                                               std::to_string(kernel.window));
  }
  AmplitudeSeries out = series;
  for (Eigen::Index s = 0; s < series.subcarriers(); ++s) {
    const auto col = series.values.col(s);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      out.values(i, s) = savgol_point(kernel, i, n, [&](std::ptrdiff_t j) { return col(j); });
    }
  }
  return out;
}

std::size_t window_length(double window_s, double sample_rate_hz) {
  if (!(window_s > 0.0) || !(sample_rate_hz > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "window_s and sample rate must be positive");
  }
  const auto w = std::llround(window_s * sample_rate_hz);
  if (w < 1) throw Error(ErrorCode::ConfigInvalid, "window shorter than one packet");
  return static_cast<std::size_t>(w);
}

std::vector<std::size_t> segment_starts(std::size_t total, std::size_t window, std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::ConfigInvalid, "stride must be >= 1");
  if (window > total) {
    throw Error(ErrorCode::WindowLongerThanSeries,
                "window of " + std::to_string(window) + " packets exceeds series of " + std::to_string(total));
  }
  std::vector<std::size_t> starts;
  starts.reserve((total - window) / stride + 1);
  for (std::size_t s = 0; s + window <= total; s += stride) starts.push_back(s);
  return starts;
}

std::vector<Eigen::MatrixXd> segment(const AmplitudeSeries& series, double window_s, std::size_t stride) {
  const std::size_t w = window_length(window_s, series.sample_rate_hz);
  std::vector<Eigen::MatrixXd> windows;
  for (const auto start : segment_starts(static_cast<std::size_t>(series.samples()), w, stride)) {
    windows.emplace_back(series.values.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(w)));
  }
  return windows;
}

Eigen::MatrixXd standardize(const Eigen::Ref<const Eigen::MatrixXd>& window) {
  const Eigen::Index w = window.rows();
  Eigen::MatrixXd out(w, window.cols());
  for (Eigen::Index s = 0; s < window.cols(); ++s) {
    double sum = 0.0;
    for (Eigen::Index t = 0; t < w; ++t) sum += window(t, s);
    const double mean = sum / static_cast<double>(w);
    double sq = 0.0;
    for (Eigen::Index t = 0; t < w; ++t) {
      const double d = window(t, s) - mean;
      sq += d * d;
    }
    const double sigma = std::sqrt(sq / static_cast<double>(w));
    if (sigma < 1e-12) {
      out.col(s).setZero();
    } else {
      for (Eigen::Index t = 0; t < w; ++t) out(t, s) = (window(t, s) - mean) / sigma;
    }
  }
  return out;
}

}  // namespace pulsesense
