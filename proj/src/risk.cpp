#include "reuse/risk.hpp"

#include <cmath>

#include "reuse/error.hpp"

namespace reuse {

FrozenComparator frozen_comparator(const NoisyLowDimModel& target, const Frame& V1) {
  if (V1.ambient_dim() != target.ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "frozen projector and target differ in ambient dimension");
  }
  const SubspaceReport rep = subspace_report(V1, target.frame);
  auto shared = std::make_shared<const NoisyLowDimModel>(target);
  const Mat B = rep.B;
  const Mat B_pinv = rep.B_pinv;
  CoreMap core(V1.latent_dim(), [shared, B, B_pinv](double t) -> CoreMap::Evaluator {
    auto slice = std::make_shared<ModelSlice>(*shared, t);
    return [shared, slice, B, B_pinv](const Vec& z) -> Vec { return B * slice->g(B_pinv * z); };
  });
  FrozenComparator out{rep.B, rep.B_pinv, rep.B_rank, core, projected_score(V1, core, "frozen_comparator"), false};
  out.outside_upper_bound_hypotheses =
      V1.latent_dim() == target.latent_dim() && rep.B_rank < static_cast<int>(target.latent_dim());
  return out;
}

CoreMap component_comparator(const NoisyLowDimModel& model, const Frame& U) {
  if (U.ambient_dim() != model.ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "projector and model differ in ambient dimension");
  }
  auto shared = std::make_shared<const NoisyLowDimModel>(model);
  const Mat H = U.data().transpose() * model.frame.data();
  const Mat H_pinv = pseudo_inverse(H);
  return CoreMap(U.latent_dim(), [shared, H, H_pinv](double t) -> CoreMap::Evaluator {
    auto slice = std::make_shared<ModelSlice>(*shared, t);
    return [shared, slice, H, H_pinv](const Vec& z) -> Vec { return H * slice->g(H_pinv * z); };
  });
}

MixedComparator mixed_comparator(const MixtureModel& mix, const Frame& U) {
  auto shared = std::make_shared<const MixtureModel>(mix);
  std::array<CoreMap, 2> psi{component_comparator(mix.components[0], U), component_comparator(mix.components[1], U)};
  CoreMap core(U.latent_dim(), [shared, U, psi](double t) -> CoreMap::Evaluator {
    auto proj = std::make_shared<ProjectedMixture>(*shared, U, t);
    auto p1 = psi[0].at(t);
    auto p2 = psi[1].at(t);
    return [shared, proj, p1, p2](const Vec& z) -> Vec {
      const auto pi = proj->posterior(z);
      Vec out = Vec::Zero(z.size());
      if (pi[0] > 0.0) out += pi[0] * p1(z);
      if (pi[1] > 0.0) out += pi[1] * p2(z);
      return out;
    };
  });
  MixedComparator out{{}, {}, psi, core, projected_score(U, core, "mixed_comparator")};
  for (int i = 0; i < 2; ++i) {
    out.H[i] = U.data().transpose() * mix.components[i].frame.data();
    out.H_pinv[i] = pseudo_inverse(out.H[i]);
  }
  return out;
}

Mat sample_reference(const Reference& ref, Eigen::Index n, std::uint64_t seed, std::uint64_t stream) {
  if (const auto* model = std::get_if<NoisyLowDimModel>(&ref)) return sample_data(*model, n, seed, stream);
  return sample_mixture(std::get<MixtureModel>(ref), n, seed, stream).x;
}

ScoreField reference_score(const Reference& ref) {
  if (const auto* model = std::get_if<NoisyLowDimModel>(&ref)) return analytic_score(*model);
  return analytic_score(std::get<MixtureModel>(ref));
}

RiskEstimate estimate_risk(const ScoreField& s, const Reference& ref, const DiffusionSchedule& sched,
                           const McBudget& budget, std::uint64_t seed) {
  const ScoreField truth = reference_score(ref);
  struct Ctx {
    ScoreField::Evaluator s, truth;
  };
  auto est = sweep_forward(
      ref, sched, 1, budget, seed, [&](double t) { return Ctx{s.at(t), truth.at(t)}; },
      [](int k, double, const ScheduleValues&, const Vec&, const Vec& xt, const Ctx& ctx, Mat& sums) {
        sums(0, k) += (ctx.s(xt) - ctx.truth(xt)).squaredNorm();
      });
  return est.quantities.front();
}

RiskEstimate estimate_comparator_approx(const CoreMap& f_a, const CoreMap& f_b, const Frame& U, const Reference& ref,
                                        const DiffusionSchedule& sched, const McBudget& budget, std::uint64_t seed) {
  struct Ctx {
    CoreMap::Evaluator a, b;
  };
  auto est = sweep_forward(
      ref, sched, 1, budget, seed, [&](double t) { return Ctx{f_a.at(t), f_b.at(t)}; },
      [&U](int k, double, const ScheduleValues& sv, const Vec&, const Vec& xt, const Ctx& ctx, Mat& sums) {
        const Vec z = U.data().transpose() * xt;
        sums(0, k) += (ctx.a(z) - ctx.b(z)).squaredNorm() / (sv.h * sv.h);
      });
  return est.quantities.front();
}

}  // namespace reuse
