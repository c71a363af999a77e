#include <gtest/gtest.h>

#include <cmath>

#include "reuse/bounds.hpp"
#include "reuse/risk.hpp"
#include "reuse/trainer.hpp"

using namespace reuse;

namespace {

const double kPi = std::acos(-1.0);

Frame line2(double theta) {
  Mat v(2, 1);
  v << std::cos(theta), std::sin(theta);
  return make_frame(v);
}

NoisyLowDimModel std1(double sigma = 0.0) {
  return NoisyLowDimModel(axis_frame(2, 1), LatentDistribution::standard(1), sigma);
}

McBudget budget(long n, int batches = 32) {
  McBudget b;
  b.n_samples = n;
  b.n_batches = batches;
  return b;
}

CoreMap null_core(Eigen::Index m) {
  return CoreMap(m, [m](double) { return [m](const Vec&) -> Vec { return Vec::Zero(m); }; });
}

}  // namespace

TEST(FrozenComparator, AlignedIsExact) {
  const auto m = std1();
  const FrozenComparator fc = frozen_comparator(m, m.frame);
  Philox rng(1);
  for (int r = 0; r < 20; ++r) {
    const Vec x = rng.normal_vector(2);
    const double t = 0.02 + rng.uniform();
    EXPECT_LE((fc.score(x, t) - ambient_score(m, x, t).total).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + x.norm() / t));
    const Vec z = m.frame.data().transpose() * x;
    EXPECT_LE((fc.core(z, t) - latent_maps(m, z, t).g).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FrozenComparator, ZeroMeanOriginAndOrthogonalCollapse) {
  const FrozenComparator fc = frozen_comparator(std1(), line2(kPi / 3));
  EXPECT_LE(fc.core(Vec::Zero(1), 0.4).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_FALSE(fc.outside_upper_bound_hypotheses);
  const FrozenComparator orth = frozen_comparator(std1(), line2(kPi / 2));
  EXPECT_EQ(orth.B_rank, 0);
  EXPECT_TRUE(orth.outside_upper_bound_hypotheses);
  Vec x(2);
  x << 0.7, -1.1;
  const double h = schedule_eval(0.3).h;
  EXPECT_LE((orth.score(x, 0.3) + x / h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MixedComparator, IdenticalComponentsAligned) {
  const auto m = std1();
  const MixedComparator mc = mixed_comparator(MixtureModel(0.4, m, m), m.frame);
  Philox rng(2);
  for (int r = 0; r < 10; ++r) {
    const Vec z = rng.normal_vector(1);
    EXPECT_LE((mc.core(z, 0.3) - latent_maps(m, z, 0.3).g).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MixedComparator, DegenerateWeightUsesFirstComponent) {
  const auto a = std1();
  const NoisyLowDimModel b(axis_frame(2, 1, 1), LatentDistribution::standard(1), 0.0);
  const MixtureModel mix(1.0, a, b);
  const Frame U = line2(0.3);
  const MixedComparator mc = mixed_comparator(mix, U);
  Philox rng(3);
  for (int r = 0; r < 10; ++r) {
    const Vec z = rng.normal_vector(1);
    EXPECT_LE((mc.core(z, 0.5) - mc.psi[0](z, 0.5)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EstimateRisk, AnalyticIsZero) {
  const DiffusionSchedule s(0.01, 1.0, 9);
  const RiskEstimate r = estimate_risk(analytic_score(std1(0.2)), Reference{std1(0.2)}, s, budget(2000), 4);
  EXPECT_NEAR(r.value, 0.0, 1e-12);
  EXPECT_GE(r.stderr_, 0.0);
}

TEST(EstimateRisk, NullCoreMatchesClosedForm) {
  const DiffusionSchedule s(0.01, 1.0, 33);
  const auto m = std1();
  const RiskEstimate r = estimate_risk(projected_score(m.frame, null_core(1), "null"), Reference{m}, s, budget(50000), 5);
  const double want = time_average(s, [](double t) {
                        const ScheduleValues sv = schedule_eval(t);
                        return std::pow(sv.alpha, 4) / (sv.h * sv.h);
                      }).value;
  EXPECT_NEAR(r.value, want, 3.0 * r.stderr_);
  EXPECT_EQ(r.per_node.size(), s.nodes().size());
  EXPECT_EQ(r.n_samples, 50000);
}

TEST(EstimateRisk, AlignedComparatorIsZero) {
  const DiffusionSchedule s(0.01, 1.0, 9);
  const auto m = std1();
  const RiskEstimate r = estimate_risk(frozen_comparator(m, m.frame).score, Reference{m}, s, budget(4000), 6);
  EXPECT_NEAR(r.value, 0.0, 3.0 * r.stderr_ + 1e-12);
}

TEST(EstimateRisk, SeedReproducibleAndWorkerIndependent) {
  const DiffusionSchedule s(0.01, 1.0, 9);
  const auto m = std1(0.1);
  const ScoreField f = frozen_comparator(m, line2(0.5)).score;
  McBudget b = budget(4000, 8);
  const RiskEstimate a = estimate_risk(f, Reference{m}, s, b, 7);
  const RiskEstimate c = estimate_risk(f, Reference{m}, s, b, 7);
  b.n_workers = 3;
  const RiskEstimate d = estimate_risk(f, Reference{m}, s, b, 7);
  EXPECT_EQ(a.value, c.value);
  EXPECT_EQ(a.stderr_, c.stderr_);
  EXPECT_EQ(a.value, d.value);
}

TEST(EstimateRisk, MixtureReference) {
  const DiffusionSchedule s(0.01, 1.0, 9);
  const NoisyLowDimModel a = std1(0.1);
  const NoisyLowDimModel b(axis_frame(2, 1, 1), LatentDistribution::standard(1), 0.1);
  const MixtureModel mix(0.5, a, b);
  const RiskEstimate r = estimate_risk(analytic_score(mix), Reference{mix}, s, budget(2000), 8);
  EXPECT_NEAR(r.value, 0.0, 1e-12);
}

TEST(ComparatorApprox, SameMapIsZero) {
  const DiffusionSchedule s(0.01, 1.0, 9);
  const auto m = std1();
  const FrozenComparator fc = frozen_comparator(m, line2(0.4));
  const RiskEstimate r = estimate_comparator_approx(fc.core, fc.core, line2(0.4), Reference{m}, s, budget(2000), 9);
  EXPECT_EQ(r.value, 0.0);
}

TEST(ComparatorApprox, ConstantOffset) {
  const DiffusionSchedule s(0.01, 1.0, 17);
  const auto m = std1();
  const Frame V1 = line2(0.4);
  const FrozenComparator fc = frozen_comparator(m, V1);
  const double delta = 0.01;
  const CoreMap shifted(1, [&fc, delta](double t) {
    auto base = fc.core.at(t);
    return [base, delta](const Vec& z) -> Vec { return base(z) + Vec::Constant(1, delta); };
  });
  const RiskEstimate r = estimate_comparator_approx(shifted, fc.core, V1, Reference{m}, s, budget(2000), 10);
  const double want = delta * delta * time_average(s, [](double t) {
                                        const double h = schedule_eval(t).h;
                                        return 1.0 / (h * h);
                                      }).value;
  EXPECT_NEAR(r.value, want, 3.0 * r.stderr_ + 1e-9 * want);
}

TEST(ComparatorRisk, AboveExactOracle) {
  const DiffusionSchedule s(0.01, 1.0, 17);
  for (const double theta : {kPi / 6, kPi / 3}) {
    const auto m = std1(0.1);
    const Frame V1 = line2(theta);
    const RiskEstimate u = estimate_risk(frozen_comparator(m, V1).score, Reference{m}, s, budget(20000), 11);
    const double oracle = exact_structural_oracle(m, V1, s).total;
    EXPECT_GE(u.value, oracle - 3.0 * u.stderr_);
  }
}

TEST(ComparatorRisk, TransferInequalityForTrainedCore) {
  const DiffusionSchedule s(0.01, 1.0, 17);
  const auto m = std1();
  const Frame V1 = line2(kPi / 6);
  TrainConfig cfg;
  cfg.n_epochs = 5;
  cfg.batch_size = 64;
  cfg.step_size = 2e-3;
  cfg.n_hidden = 2;
  cfg.width = 16;
  cfg.seed = 12;
  const TrainResult tr = train(sample_data(m, 2048, 13), V1, cfg);
  const CoreMap f = as_core_map(tr.core);
  const FrozenComparator fc = frozen_comparator(m, V1);
  const McBudget b = budget(20000);
  const RiskEstimate L = estimate_risk(projected_score(V1, f, "trained"), Reference{m}, s, b, 14);
  const RiskEstimate U = estimate_risk(fc.score, Reference{m}, s, b, 15);
  const RiskEstimate A = estimate_comparator_approx(f, fc.core, V1, Reference{m}, s, b, 16);
  for (const double eta : {0.5, 1.0, 2.0}) {
    const double rhs = (1 + eta) * U.value + (1 + 1 / eta) * A.value;
    const double se = std::sqrt(L.stderr_ * L.stderr_ + std::pow((1 + eta) * U.stderr_, 2) +
                                std::pow((1 + 1 / eta) * A.stderr_, 2));
    EXPECT_LE(L.value, rhs + 4.0 * se);
  }
}

TEST(SweepForward, CustomQuantity) {
  const DiffusionSchedule s(0.01, 1.0, 5);
  const auto m = std1();
  // E||X_t||^2 = alpha^2 + 2h for STD1
  const MultiEstimate est = sweep_forward(
      Reference{m}, s, 1, budget(20000), 17, [](double) { return 0; },
      [](int k, double, const ScheduleValues&, const Vec&, const Vec& xt, int, Mat& sums) {
        sums(0, k) += xt.squaredNorm();
      });
  const double want = time_average(s, [](double t) {
                        const ScheduleValues sv = schedule_eval(t);
                        return sv.alpha * sv.alpha + 2.0 * sv.h;
                      }).value;
  EXPECT_NEAR(est.quantities[0].value, want, 4.0 * est.quantities[0].stderr_);
}
