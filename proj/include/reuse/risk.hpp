#pragma once

#include <array>
#include <cstdint>
#include <variant>

#include "reuse/montecarlo.hpp"
#include "reuse/score.hpp"

namespace reuse {

// f_comp(z, t) = B g_2(B^+ z, t) with B = V1^T A2.
struct FrozenComparator {
  Mat B;
  Mat B_pinv;
  int B_rank = 0;
  CoreMap core;
  ScoreField score;
  // Set when some principal angle is pi/2 and d1 == d2: the comparator is
  // still defined through the pseudoinverse, but the upper-bound hypotheses
  // do not hold.
  bool outside_upper_bound_hypotheses = false;
};

FrozenComparator frozen_comparator(const NoisyLowDimModel& target, const Frame& V1);

// psi_i(z, t) = H_i g_i(H_i^+ z, t), H_i = U^T A_i.
CoreMap component_comparator(const NoisyLowDimModel& model, const Frame& U);

// f_mix = pi_1^U psi_1 + pi_2^U psi_2.
struct MixedComparator {
  std::array<Mat, 2> H;
  std::array<Mat, 2> H_pinv;
  std::array<CoreMap, 2> psi;
  CoreMap core;
  ScoreField score;
};

MixedComparator mixed_comparator(const MixtureModel& mix, const Frame& U);

using Reference = std::variant<NoisyLowDimModel, MixtureModel>;

// Draws X_0 rows from the reference law.
Mat sample_reference(const Reference& ref, Eigen::Index n, std::uint64_t seed, std::uint64_t stream = 0);
ScoreField reference_score(const Reference& ref);

// Time-averaged E||s(X_t, t) - grad log p_t(X_t)||^2 on the schedule grid.
// Each batch reuses its X_0 draws at every node with fresh forward noise.
RiskEstimate estimate_risk(const ScoreField& s, const Reference& ref, const DiffusionSchedule& sched,
                           const McBudget& budget, std::uint64_t seed);

// Time-averaged (1/h^2) E||f_a(U^T X_t, t) - f_b(U^T X_t, t)||^2.
RiskEstimate estimate_comparator_approx(const CoreMap& f_a, const CoreMap& f_b, const Frame& U, const Reference& ref,
                                        const DiffusionSchedule& sched, const McBudget& budget, std::uint64_t seed);

// Shared sampling loop: for every batch sample and node, calls
// visit(node index, t, schedule values, x0, x_t, ctx, sums) where ctx is the
// node's evaluator bundle returned by prepare(t).
template <typename Prepare, typename Visit>
MultiEstimate sweep_forward(const Reference& ref, const DiffusionSchedule& sched, int n_quantities,
                            const McBudget& budget, std::uint64_t seed, Prepare prepare, Visit visit);

}  // namespace reuse

#include "reuse/risk_impl.hpp"
