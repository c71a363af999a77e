#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "reuse/error.hpp"
#include "reuse/trainer.hpp"

using namespace reuse;

namespace {

NoisyLowDimModel std1(double sigma = 0.0) {
  return NoisyLowDimModel(axis_frame(2, 1), LatentDistribution::standard(1), sigma);
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig c;
  c.n_epochs = 3;
  c.batch_size = 32;
  c.step_size = 1e-3;
  c.n_hidden = 2;
  c.width = 8;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(ReluCore, ZeroWeightsGiveZero) {
  ReluCore core({3, 5, 2}, 10.0, 50.0);
  core.set_params(Vec::Zero(core.n_params()));
  EXPECT_EQ(core.forward(Vec::Constant(2, 3.0), 0.4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ReluCore, IdentityLayer) {
  ReluCore core({3, 2}, 1e6, 50.0);
  core.weights()[0].setZero();
  core.weights()[0].leftCols(2).setIdentity();
  core.biases()[0].setZero();
  Vec z(2);
  z << -1.5, 2.25;
  EXPECT_LE((core.forward(z, 0.7) - z).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ReluCore, ParamsRoundTripAndClamp) {
  ReluCore core = ReluCore::with_hidden(2, 2, 6, 5.0, 0.1, 1);
  const Vec p = core.params();
  ReluCore copy = core;
  copy.set_params(p);
  EXPECT_EQ((copy.params() - p).cwiseAbs().maxCoeff(), 0.0);
  copy.set_params(Vec::Constant(p.size(), 3.0));
  copy.clamp_params();
  EXPECT_LE(copy.params().cwiseAbs().maxCoeff(), 0.1);
  EXPECT_THROW(copy.set_params(Vec::Zero(p.size() + 1)), Error);
}

TEST(ReluCore, GradientMatchesFiniteDifferences) {
  Philox rng(2);
  for (std::uint64_t seed = 3; seed < 6; ++seed) {
    const ReluCore core = ReluCore::with_hidden(2, 2, 7, 100.0, 50.0, seed);
    const int n = 6;
    Mat Z(2, n), Y(2, n);
    Vec t(n), w(n);
    for (int i = 0; i < n; ++i) {
      Z.col(i) = rng.normal_vector(2);
      Y.col(i) = rng.normal_vector(2);
      t(i) = 0.05 + rng.uniform();
      w(i) = 0.5 + rng.uniform();
    }
    const GradCheck gc = gradient_check(core, Z, t, Y, w, 20, 1e-5, seed);
    EXPECT_EQ(gc.checked.size(), 20u);
    EXPECT_LE(gc.max_rel_error, 1e-4);
  }
}

TEST(ReluCore, GradientThroughActiveClip) {
  Philox rng(7);
  const ReluCore core = ReluCore::with_hidden(2, 1, 6, 0.05, 50.0, 8);
  Mat Z = 3.0 * Mat::Ones(2, 4);
  Z(0, 1) = -2.0;
  Z(1, 2) = 1.5;
  Mat Y = Mat::Zero(2, 4);
  const Vec t = Vec::Constant(4, 0.3), w = Vec::Ones(4);
  EXPECT_LE(gradient_check(core, Z, t, Y, w, 20, 1e-6, 9).max_rel_error, 1e-4);
}

TEST(ReluCore, OutputBound) {
  const ReluCore core = ReluCore::with_hidden(3, 3, 32, 0.5, 50.0, 10);
  Philox rng(11);
  const int n = 100000;
  Mat Z(3, n);
  Vec t(n);
  for (int i = 0; i < n; ++i) {
    Z.col(i) = 10.0 * rng.normal_vector(3);
    t(i) = rng.uniform();
  }
  const Mat out = core.forward(Z, t);
  EXPECT_LE(out.colwise().norm().maxCoeff(), 0.5 * (1 + 1e-12));
}

TEST(ReluCore, InputJacobianMatchesFiniteDifferences) {
  const ReluCore core = ReluCore::with_hidden(2, 2, 8, 100.0, 50.0, 12);
  Vec z(2);
  z << 0.3, -0.4;
  const double t = 0.6, e = 1e-6;
  const Mat J = core.input_jacobian(z, t);
  for (int j = 0; j < 3; ++j) {
    Vec zp = z, zm = z;
    double tp = t, tm = t;
    if (j < 2) {
      zp(j) += e;
      zm(j) -= e;
    } else {
      tp += e;
      tm -= e;
    }
    const Vec fd = (core.forward(zp, tp) - core.forward(zm, tm)) / (2 * e);
    EXPECT_LE((fd - J.col(j)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Train, ZeroEpochsReturnsInit) {
  TrainConfig c = small_config(13);
  c.n_epochs = 0;
  const ReluCore init = ReluCore::with_hidden(1, 2, 8, 10.0, 50.0, 14);
  const TrainResult r = train(sample_data(std1(), 64, 15), axis_frame(2, 1), c, init);
  EXPECT_EQ((r.core.params() - init.params()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(r.loss_trace.empty());
}

TEST(Train, DeterministicAndClamped) {
  TrainConfig c = small_config(16);
  c.kappa = 0.2;
  const Mat X = sample_data(std1(), 256, 17);
  const TrainResult a = train(X, axis_frame(2, 1), c);
  const TrainResult b = train(X, axis_frame(2, 1), c);
  EXPECT_EQ((a.core.params() - b.core.params()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_EQ(a.loss_trace.size(), 3u);
  EXPECT_LE(a.core.params().cwiseAbs().maxCoeff(), 0.2);
}

TEST(Train, LossDecreasesOnAlignedFixture) {
  TrainConfig c = small_config(18);
  c.n_epochs = 15;
  c.width = 32;
  c.step_size = 2e-3;
  const TrainResult r = train(sample_data(std1(), 2048, 19), axis_frame(2, 1), c);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(Train, DivergedOnNonFiniteData) {
  Mat X = sample_data(std1(), 64, 20);
  X(3, 0) = std::numeric_limits<double>::infinity();
  try {
    train(X, axis_frame(2, 1), small_config(21));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Diverged);
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig c = small_config(22);
  c.step_size = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = small_config(22);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, TruncationFilters) {
  const auto m = std1();
  TruncationRegion region = truncation_radii(m, 1000, 0.05, 1.0, 1.0);
  region.R_z = 0.5;
  const Mat X = sample_data(m, 512, 23);
  TrainConfig c = small_config(24);
  c.truncation = true;
  const TrainResult r = train(X, axis_frame(2, 1), c, &region);
  long inside = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) inside += region.contains(X.row(i).transpose());
  EXPECT_EQ(r.n_used, inside);
  EXPECT_LT(r.n_used, 512);
}

TEST(InverseH2, SamplerMatchesDensity) {
  const double t0 = 0.01, T = 1.0;
  EXPECT_NEAR(sample_inverse_h2(t0, T, 1e-15), t0, 1e-9);
  EXPECT_NEAR(sample_inverse_h2(t0, T, 1.0 - 1e-15), T, 1e-9);
  // F' = 1/h^2
  const double t = 0.3, e = 1e-6;
  const double h = 1 - std::exp(-t);
  EXPECT_NEAR((inverse_h2_antiderivative(t + e) - inverse_h2_antiderivative(t - e)) / (2 * e), 1 / (h * h), 1e-4);
  // median splits the mass
  const double med = sample_inverse_h2(t0, T, 0.5);
  const double F0 = inverse_h2_antiderivative(t0), F1 = inverse_h2_antiderivative(T);
  EXPECT_NEAR((inverse_h2_antiderivative(med) - F0) / (F1 - F0), 0.5, 1e-10);
}

TEST(DenoisingLoss, MatchingTargetIsZero) {
  Vec x0(2);
  x0 << 0.4, -0.2;
  const ScoreField s("match", 2, [x0](double t) {
    const ScheduleValues sv = schedule_eval(t);
    return [x0, sv](const Vec& x) -> Vec { return (sv.alpha * x0 - x) / sv.h; };
  });
  EXPECT_NEAR(denoising_loss(x0, s, DiffusionSchedule(0.01, 1.0, 17), 20, 25), 0.0, 1e-12);
}

TEST(DenoisingLoss, TrueScoreGapIsE2) {
  const auto m = std1();
  const DiffusionSchedule s(0.1, 1.0, 33);
  McBudget b;
  b.n_samples = 40000;
  const MultiEstimate est = denoising_gap({analytic_score(m)}, Reference{m}, s, b, 26);
  EXPECT_NEAR(est.quantities[1].value, 0.0, 1e-12);
  const double exact = e2_exact_gaussian(m, s);
  EXPECT_NEAR(est.quantities[0].value, exact, 3.0 * est.quantities[0].stderr_);
  EXPECT_LE(exact, e2_upper_bound(2, s) + 1e-12);
}

TEST(DenoisingLoss, GapIsConstantAcrossFields) {
  const auto m = std1(0.1);
  const DiffusionSchedule s(0.05, 1.0, 17);
  McBudget b;
  b.n_samples = 20000;
  const ScoreField a = analytic_score(m);
  const ScoreField zero("neg_x_over_h", 2, [](double t) {
    const double h = schedule_eval(t).h;
    return [h](const Vec& x) -> Vec { return -x / h; };
  });
  const ScoreField lin("half", 2, [](double t) {
    const double h = schedule_eval(t).h;
    return [h](const Vec& x) -> Vec { return -0.5 * x / h - 0.5 * x; };
  });
  const MultiEstimate est = denoising_gap({a, zero, lin}, Reference{m}, s, b, 27);
  // gap_j = loss_j - risk_j; pairwise differences of gaps vanish
  const int nb = static_cast<int>(est.batch_values.cols());
  Eigen::MatrixXd gaps(3, nb);
  for (int j = 0; j < 3; ++j) gaps.row(j) = est.batch_values.row(2 * j) - est.batch_values.row(2 * j + 1);
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const Eigen::RowVectorXd d = gaps.row(i) - gaps.row(j);
      std::vector<double> v(d.data(), d.data() + d.size());
      const ScalarEstimate se = batch_means(v, nb);
      EXPECT_LE(std::abs(se.mean), 4.0 * se.stderr_ + 1e-12) << i << " " << j;
    }
  }
}

TEST(E2Bound, ClosedForm) {
  EXPECT_NEAR(e2_upper_bound(2, 0.1, 1.0), 2.0 / 0.9 * std::log((std::exp(1.0) - 1) / (std::exp(0.1) - 1)), 1e-12);
  EXPECT_NEAR(e2_upper_bound(2, 0.1, 1.0), 6.208, 5e-4);
  EXPECT_NEAR(e2_upper_bound(4, 0.1, 1.0), 2.0 * e2_upper_bound(2, 0.1, 1.0), 1e-12);
  const double near = e2_upper_bound(2, 0.5, 0.5 + 1e-9);
  EXPECT_TRUE(std::isfinite(near));
  EXPECT_GT(near, 0.0);
}

TEST(Truncation, Radii) {
  const auto m = std1();
  const TruncationRegion r = truncation_radii(m, 10000, 0.05, 2.0, 2.0);
  EXPECT_EQ(r.R_perp, 0.0);
  const double L = std::sqrt(std::log(8 * 10000 / 0.05));
  EXPECT_NEAR(r.R_z, 2.0 * (1.0 + L), 1e-12);
  const Mat X = sample_data(m, 1000, 28);
  for (Eigen::Index i = 0; i < X.rows(); ++i) EXPECT_TRUE(r.contains(X.row(i).transpose()));
  Vec far(2);
  far << r.R_z + 1.0, 0.0;
  EXPECT_FALSE(r.contains(far));
  EXPECT_THROW(truncation_radii(m, 10, 1.5, 1, 1), Error);
}

TEST(Truncation, RejectionTail) {
  const NoisyLowDimModel m(haar_frame(4, 2, 29), LatentDistribution::standard(2), 0.3);
  const long N = 10000;
  const double delta = 0.05;
  const TruncationRegion r = truncation_radii(m, N, delta, 2.0, 2.0);
  const long n = 100000;
  const Mat X = sample_data(m, n, 30);
  long out = 0;
  for (Eigen::Index i = 0; i < n; ++i) out += !r.contains(X.row(i).transpose());
  EXPECT_LE(static_cast<double>(out) / n, delta / (4.0 * N) * 10.0);
}

TEST(CoreJson, RoundTrip) {
  const ReluCore core = ReluCore::with_hidden(2, 2, 5, 3.0, 7.0, 31);
  TrainConfig c = small_config(32);
  const nlohmann::json j = to_json(core, c);
  const ReluCore back = core_from_json(j);
  EXPECT_EQ(back.widths(), core.widths());
  EXPECT_EQ(back.K(), 3.0);
  EXPECT_EQ(back.kappa(), 7.0);
  EXPECT_EQ((back.params() - core.params()).cwiseAbs().maxCoeff(), 0.0);
  const TrainConfig c2 = train_config_from_json(to_json(c));
  EXPECT_EQ(c2.n_epochs, c.n_epochs);
  EXPECT_EQ(c2.seed, c.seed);
}

TEST(CoreMetrics, Counts) {
  ReluCore core({3, 4, 2}, 2.0, 50.0);
  core.set_params(Vec::Zero(core.n_params()));
  core.weights()[0](0, 0) = 1.0;
  Mat Z = Mat::Ones(2, 5);
  const CoreMetrics cm = measure_core(core, Z, Vec::Constant(5, 0.2));
  EXPECT_EQ(cm.n_params, core.n_params());
  EXPECT_EQ(cm.n_nonzero, 1);
  EXPECT_EQ(cm.max_abs_param, 1.0);
}
