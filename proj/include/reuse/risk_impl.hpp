#pragma once

#include "reuse/rng.hpp"

namespace reuse {

template <typename Prepare, typename Visit>
MultiEstimate sweep_forward(const Reference& ref, const DiffusionSchedule& sched, int n_quantities,
                            const McBudget& budget, std::uint64_t seed, Prepare prepare, Visit visit) {
  return run_batches(sched, n_quantities, budget, seed, [&](long count, std::uint64_t batch_seed, Mat& sums) {
    const Mat x0 = sample_reference(ref, count, batch_seed, 0);
    const auto& nodes = sched.nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const double t = nodes[k];
      auto ctx = prepare(t);
      const ScheduleValues sv = schedule_eval(t);
      const double sqrt_h = std::sqrt(sv.h);
      Philox rng(batch_seed, 1 + k);
      for (long i = 0; i < count; ++i) {
        const Vec x = x0.row(i).transpose();
        const Vec xt = sv.alpha * x + sqrt_h * rng.normal_vector(x.size());
        visit(static_cast<int>(k), t, sv, x, xt, ctx, sums);
      }
    }
  });
}

}  // namespace reuse
