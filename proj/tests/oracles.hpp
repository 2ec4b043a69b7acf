#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "pulsesense/dsp.hpp"

namespace testing {

// Ideal magnitude of the bilinear-transformed Butterworth band-pass (or low-pass)
// with both edges pre-warped: |H|^2 = 1 / (1 + x^(2N)) on the warped axis.
inline double butterworth_magnitude(const pulsesense::FilterSpec& spec, double f) {
  const double fs = spec.sample_rate_hz;
  auto warp = [&](double hz) { return 2.0 * fs * std::tan(std::numbers::pi * hz / fs); };
  const double w = warp(f);
  double x;
  if (spec.low_cut_hz == 0.0) {
    x = w / warp(spec.high_cut_hz);
  } else {
    const double w1 = warp(spec.low_cut_hz), w2 = warp(spec.high_cut_hz);
    x = (w * w - w1 * w2) / (w * (w2 - w1));
  }
  return 1.0 / std::sqrt(1.0 + std::pow(x * x, spec.order));
}

using Rational = boost::multiprecision::cpp_rational;

// Least-squares smoothing weights in exact arithmetic: solve (V^T V) a = e_j for
// the row of the pseudo-inverse that yields the fitted value at offset 0.
inline std::vector<double> savgol_oracle(int window, int order) {
  const int m = window / 2, p = order + 1;
  std::vector<std::vector<Rational>> a(p, std::vector<Rational>(p + 1));
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      Rational sum = 0;
      for (int k = -m; k <= m; ++k) {
        Rational term = 1;
        for (int e = 0; e < r + c; ++e) term *= k;
        sum += term;
      }
      a[r][c] = sum;
    }
    a[r][p] = r == 0 ? 1 : 0;
  }
  // Gauss-Jordan; the Gram matrix is symmetric positive definite.
  for (int col = 0; col < p; ++col) {
    int pivot = col;
    while (a[pivot][col] == 0) ++pivot;
    std::swap(a[pivot], a[col]);
    for (int r = 0; r < p; ++r) {
      if (r == col || a[r][col] == 0) continue;
      const Rational f = a[r][col] / a[col][col];
      for (int c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<Rational> coef(p);
  for (int r = 0; r < p; ++r) coef[r] = a[r][p] / a[r][r];
  std::vector<double> out;
  for (int k = -m; k <= m; ++k) {
    Rational v = 0, pow = 1;
    for (int e = 0; e < p; ++e, pow *= k) v += coef[e] * pow;
    out.push_back(static_cast<double>(v));
  }
  return out;
}

}  // namespace testing
