#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "reuse/geometry.hpp"
#include "reuse/schedule.hpp"

namespace reuse {

struct McBudget {
  long n_samples = 100000;
  int n_batches = 32;
  int n_workers = 1;
};

struct RiskEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::vector<double> per_node;
  long n_samples = 0;
  std::uint64_t seed = 0;
};

// Time-averaged Monte Carlo estimates of several quantities sharing one
// sample stream, with batch-means standard errors.
struct MultiEstimate {
  std::vector<RiskEstimate> quantities;
  Mat batch_values;  // quantities x batches, time-averaged per batch

  // Standard error of (quantity a - quantity b) from the paired batches.
  double paired_stderr(int a, int b) const;
};

// Per-batch kernel: fill `sums` (n_quantities x n_nodes) with sums over
// `count` samples drawn from seed `batch_seed`.
using BatchKernel = std::function<void(long count, std::uint64_t batch_seed, Mat& sums)>;

// Splits the budget into batches; each batch is seeded from (seed, batch
// index), so results do not depend on the worker count.
MultiEstimate run_batches(const DiffusionSchedule& sched, int n_quantities, const McBudget& budget,
                          std::uint64_t seed, const BatchKernel& kernel);

// Batch-means estimate for a scalar per-sample statistic (no time grid).
struct ScalarEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};
ScalarEstimate batch_means(const std::vector<double>& values, int n_batches = 32);

// Runs fn(i) for i in [0, n) across n_workers threads.
void parallel_for(int n, int n_workers, const std::function<void(int)>& fn);

}  // namespace reuse
