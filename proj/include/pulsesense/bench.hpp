#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "pulsesense/model.hpp"

namespace pulsesense {

struct ThroughputReport {
  std::string model;
  std::size_t seq_len = 0;
  std::size_t batch_size = 0;
  double cold_start_s = 0.0;    // first batch, reported separately
  double total_time_s = 0.0;    // steady-state batches only
  std::size_t n_preds = 0;      // predictions in the steady-state batches
  double throughput_preds_per_s = 0.0;
  double batch_mean_ms = 0.0;
  std::size_t workers = 1;
};

struct BenchOptions {
  std::size_t seq_len = 400;
  std::size_t batch_size = 64;
  std::size_t n_preds_target = 6400;
  /// Values above 1 run batches on several threads; such rows are not comparable
  /// to single-threaded figures.
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::string model_name = "lstm";
};

/// Times batched inference on pre-generated random segments.
ThroughputReport bench_inference(const ModelParams& params, const BenchOptions& options);

/// Fills the two derived columns from the recorded counters.
void finalize(ThroughputReport& report);

std::string bench_csv_header();
std::string bench_csv_row(const ThroughputReport& report);

}  // namespace pulsesense
