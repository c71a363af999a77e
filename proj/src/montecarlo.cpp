#include "reuse/montecarlo.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "reuse/error.hpp"
#include "reuse/rng.hpp"

namespace reuse {

void parallel_for(int n, int n_workers, const std::function<void(int)>& fn) {
  n_workers = std::max(1, std::min(n_workers, n));
  if (n_workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (int w = 0; w < n_workers; ++w) {
    threads.emplace_back([&, w] {
      for (int i = w; i < n; i += n_workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (failure) std::rethrow_exception(failure);
}

double MultiEstimate::paired_stderr(int a, int b) const {
  const Vec diff = (batch_values.row(a) - batch_values.row(b)).transpose();
  const auto nb = static_cast<double>(diff.size());
  const double mean = diff.mean();
  const double var = (diff.array() - mean).square().sum() / (nb - 1.0);
  return std::sqrt(var / nb);
}

MultiEstimate run_batches(const DiffusionSchedule& sched, int n_quantities, const McBudget& budget,
                          std::uint64_t seed, const BatchKernel& kernel) {
  if (budget.n_batches < 2 || budget.n_samples < budget.n_batches) {
    throw Error(ErrorCode::InvalidArgument, "need at least 2 batches and one sample per batch");
  }
  const int nb = budget.n_batches;
  const int nn = sched.n_nodes();
  std::vector<Mat> sums(static_cast<std::size_t>(nb), Mat::Zero(n_quantities, nn));
  std::vector<long> counts(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    counts[b] = budget.n_samples / nb + (b < budget.n_samples % nb ? 1 : 0);
  }
  parallel_for(nb, budget.n_workers, [&](int b) {
    kernel(counts[b], derive_seed(seed, static_cast<std::uint64_t>(b)), sums[b]);
  });

  MultiEstimate out;
  out.batch_values.resize(n_quantities, nb);
  Mat total = Mat::Zero(n_quantities, nn);
  for (int b = 0; b < nb; ++b) {
    total += sums[b];
    for (int q = 0; q < n_quantities; ++q) {
      std::vector<double> node(static_cast<std::size_t>(nn));
      for (int k = 0; k < nn; ++k) node[k] = sums[b](q, k) / static_cast<double>(counts[b]);
      out.batch_values(q, b) = average_node_values(sched, node);
    }
  }
  for (int q = 0; q < n_quantities; ++q) {
    RiskEstimate est;
    est.n_samples = budget.n_samples;
    est.seed = seed;
    est.per_node.resize(static_cast<std::size_t>(nn));
    for (int k = 0; k < nn; ++k) est.per_node[k] = total(q, k) / static_cast<double>(budget.n_samples);
    est.value = average_node_values(sched, est.per_node);
    const Vec bv = out.batch_values.row(q).transpose();
    const double mean = bv.mean();
    const double var = (bv.array() - mean).square().sum() / (nb - 1.0);
    est.stderr_ = std::sqrt(var / nb);
    out.quantities.push_back(std::move(est));
  }
  return out;
}

ScalarEstimate batch_means(const std::vector<double>& values, int n_batches) {
  const auto n = static_cast<long>(values.size());
  if (n_batches < 2 || n < n_batches) throw Error(ErrorCode::InvalidArgument, "too few values for batch means");
  std::vector<double> means(static_cast<std::size_t>(n_batches), 0.0);
  long start = 0;
  double total = 0.0;
  for (int b = 0; b < n_batches; ++b) {
    const long count = n / n_batches + (b < n % n_batches ? 1 : 0);
    double acc = 0.0;
    for (long i = start; i < start + count; ++i) acc += values[static_cast<std::size_t>(i)];
    total += acc;
    means[b] = acc / static_cast<double>(count);
    start += count;
  }
  ScalarEstimate out;
  out.mean = total / static_cast<double>(n);
  double var = 0.0;
  double bm = 0.0;
  for (const double m : means) bm += m;
  bm /= n_batches;
  for (const double m : means) var += (m - bm) * (m - bm);
  var /= (n_batches - 1.0);
  out.stderr_ = std::sqrt(var / n_batches);
  return out;
}

}  // namespace reuse
