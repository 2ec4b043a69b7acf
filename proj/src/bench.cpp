#include "pulsesense/bench.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "pulsesense/error.hpp"
#include "random.hpp"

namespace pulsesense {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void finalize(ThroughputReport& r) {
  r.throughput_preds_per_s = r.total_time_s > 0.0 ? static_cast<double>(r.n_preds) / r.total_time_s : 0.0;
  r.batch_mean_ms = r.throughput_preds_per_s > 0.0
                        ? 1000.0 * static_cast<double>(r.batch_size) / r.throughput_preds_per_s
                        : 0.0;
}

ThroughputReport bench_inference(const ModelParams& params, const BenchOptions& o) {
  if (o.seq_len < 1 || o.batch_size < 1 || o.n_preds_target < 1 || o.workers < 1) {
    throw Error(ErrorCode::ConfigInvalid, "bench sizes must all be >= 1");
  }
  const std::size_t steady_batches = (o.n_preds_target + o.batch_size - 1) / o.batch_size;
  const std::size_t distinct = std::min<std::size_t>(steady_batches + 1, 4);

  // Inputs are generated up front so generation stays out of the timings.
  std::mt19937_64 rng(detail::derive_seed(o.seed, 0xBE4C));
  const auto dim = static_cast<Eigen::Index>(params.config().input_dim);
  std::vector<Eigen::MatrixXd> pool(distinct * o.batch_size);
  for (auto& m : pool) {
    m.resize(static_cast<Eigen::Index>(o.seq_len), dim);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = detail::standard_normal(rng);
  }
  std::vector<std::vector<const Eigen::MatrixXd*>> batches(distinct);
  for (std::size_t b = 0; b < distinct; ++b)
    for (std::size_t k = 0; k < o.batch_size; ++k) batches[b].push_back(&pool[b * o.batch_size + k]);

  ThroughputReport r;
  r.model = o.model_name;
  r.seq_len = o.seq_len;
  r.batch_size = o.batch_size;
  r.workers = o.workers;

  auto start = Clock::now();
  predict_batch(params, batches[0], o.batch_size);
  r.cold_start_s = seconds_since(start);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b; (b = next.fetch_add(1)) < steady_batches;) {
      predict_batch(params, batches[(b + 1) % distinct], o.batch_size);
    }
  };
  start = Clock::now();
  if (o.workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool_threads;
    for (std::size_t w = 0; w < o.workers; ++w) pool_threads.emplace_back(worker);
  }
  r.total_time_s = seconds_since(start);
  r.n_preds = steady_batches * o.batch_size;
  finalize(r);
  return r;
}

std::string bench_csv_header() { return "model,seq_len,batch,cold_start_s,total_s,n_preds,preds_per_s,batch_mean_ms"; }

std::string bench_csv_row(const ThroughputReport& r) {
  // Shortest text that parses back to the same double.
  const auto num = [](double v) {
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  std::ostringstream out;
  out << r.model << ',' << r.seq_len << ',' << r.batch_size << ',' << num(r.cold_start_s) << ','
      << num(r.total_time_s) << ',' << r.n_preds << ',' << num(r.throughput_preds_per_s) << ','
      << num(r.batch_mean_ms);
  return out.str();
}

}  // namespace pulsesense
