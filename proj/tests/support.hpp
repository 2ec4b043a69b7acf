#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "pulsesense/csi.hpp"
#include "pulsesense/error.hpp"

namespace testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline pulsesense::CsiStream random_stream(std::size_t frames, std::size_t subcarriers, double fs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 30.0);
  pulsesense::CsiStream s;
  s.sample_rate_hz = fs;
  s.subcarrier_count = subcarriers;
  for (std::size_t k = 0; k < frames; ++k) {
    pulsesense::CsiFrame f;
    f.timestamp = static_cast<double>(k) / fs;
    for (std::size_t j = 0; j < subcarriers; ++j) f.subcarriers.emplace_back(n(rng), n(rng));
    s.frames.push_back(std::move(f));
  }
  return s;
}

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

/// The code of the pulsesense::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<pulsesense::ErrorCode> error_code(F&& f) {
  try {
    f();
  } catch (const pulsesense::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pulsesense_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
