#include <gtest/gtest.h>

#include <cmath>

#include "reuse/datamodel.hpp"
#include "reuse/error.hpp"
#include "reuse/schedule.hpp"

using namespace reuse;

namespace {

Mat sample_cov(const Mat& X) {
  const Mat c = X.rowwise() - X.colwise().mean();
  return c.transpose() * c / static_cast<double>(X.rows() - 1);
}

NoisyLowDimModel std1(double sigma = 0.0) {
  return NoisyLowDimModel(axis_frame(2, 1), LatentDistribution::standard(1), sigma);
}

}  // namespace

TEST(Latent, CovarianceClampAndValidation) {
  Mat c(2, 2);
  c << 1.0, 0.0, 0.0, -5e-11;
  const auto z = LatentDistribution::gaussian(Vec::Zero(2), c);
  EXPECT_GE(z.components()[0].cov.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff(), 0.0);
  Mat bad(2, 2);
  bad << 1.0, 0.0, 0.0, -1e-3;
  EXPECT_THROW(LatentDistribution::gaussian(Vec::Zero(2), bad), Error);
  EXPECT_THROW(LatentDistribution::mixture({0.5, 0.6}, {{Vec::Zero(1), Mat::Identity(1, 1)}, {Vec::Zero(1), Mat::Identity(1, 1)}}),
               Error);
}

TEST(Model, LatentDimensionMustMatchFrame) {
  EXPECT_THROW(NoisyLowDimModel(axis_frame(3, 2), LatentDistribution::standard(1), 0.0), Error);
  EXPECT_THROW(NoisyLowDimModel(axis_frame(3, 1), LatentDistribution::standard(1), -0.1), Error);
}

TEST(SampleData, PointMass) {
  Vec m(2);
  m << 0.3, -1.2;
  const Frame A = haar_frame(4, 2, 5);
  const NoisyLowDimModel model(A, LatentDistribution::gaussian(m, Mat::Zero(2, 2)), 0.0);
  const Mat X = sample_data(model, 20, 1);
  const Vec want = A.data() * m;
  for (Eigen::Index i = 0; i < X.rows(); ++i) EXPECT_LE((X.row(i).transpose() - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SampleData, Std1Covariance) {
  const long n = 100000;
  const Mat C = sample_cov(sample_data(std1(), n, 3));
  EXPECT_NEAR(C(0, 0), 1.0, 3.0 * std::sqrt(2.0 / n));
  EXPECT_EQ(C(1, 1), 0.0);
  EXPECT_EQ(C(0, 1), 0.0);
}

TEST(SampleData, NoisyCovariance) {
  const long n = 100000;
  const Mat C = sample_cov(sample_data(std1(0.5), n, 4));
  EXPECT_NEAR(C(0, 0), 1.25, 4.0 * 1.25 * std::sqrt(2.0 / n));
  EXPECT_NEAR(C(1, 1), 0.25, 4.0 * 0.25 * std::sqrt(2.0 / n));
  EXPECT_NEAR(C(0, 1), 0.0, 4.0 * std::sqrt(1.25 * 0.25 / n));
}

TEST(SampleData, Reproducible) {
  const Mat a = sample_data(std1(0.2), 50, 9, 2);
  const Mat b = sample_data(std1(0.2), 50, 9, 2);
  const Mat c = sample_data(std1(0.2), 50, 9, 3);
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((a - c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NoiseForward, TimeZeroAndDeterminism) {
  Vec x(3);
  x << 1.0, -2.0, 0.5;
  EXPECT_EQ((noise_forward(x, 0.0, 1) - x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((noise_forward(x, 0.4, 7) - noise_forward(x, 0.4, 7)).cwiseAbs().maxCoeff(), 0.0);
  try {
    noise_forward(x, -1.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeTime);
  }
}

TEST(NoiseForward, StationaryLaw) {
  const int n = 50000;
  Mat X(n, 2);
  Philox rng(5);
  for (int i = 0; i < n; ++i) X.row(i) = noise_forward(Vec::Zero(2), 30.0, rng).transpose();
  const Mat C = sample_cov(X);
  EXPECT_NEAR(C(0, 0), 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(C(1, 1), 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(C(0, 1), 0.0, 4.0 / std::sqrt(n));
}

TEST(SampleMixture, Labels) {
  const long n = 100000;
  const MixtureModel mix(0.5, std1(), NoisyLowDimModel(axis_frame(2, 1, 1), LatentDistribution::standard(1), 0.0));
  const MixtureSample s = sample_mixture(mix, n, 2);
  long ones = 0;
  for (const int l : s.labels) ones += l == 1;
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
  // label 1 rows live on e1, label 2 rows on e2
  for (long i = 0; i < 100; ++i) EXPECT_EQ(s.x(i, s.labels[i] == 1 ? 1 : 0), 0.0);
}

TEST(SampleMixture, DegenerateWeight) {
  const MixtureSample s = sample_mixture(MixtureModel(1.0, std1(), std1(0.3)), 1000, 3);
  for (const int l : s.labels) EXPECT_EQ(l, 1);
}

TEST(SampleMixture, OmegaValidation) {
  EXPECT_THROW(MixtureModel(-0.1, std1(), std1()), Error);
  EXPECT_THROW(MixtureModel(1.5, std1(), std1()), Error);
  EXPECT_THROW(MixtureModel(0.5, std1(), NoisyLowDimModel(axis_frame(3, 1), LatentDistribution::standard(1), 0.0)),
               Error);
}

TEST(SampleMixture, IdenticalComponentsMatchSingleModel) {
  const long n = 100000;
  const MixtureModel mix(0.3, std1(0.2), std1(0.2));
  const Mat C = sample_cov(sample_mixture(mix, n, 8).x);
  EXPECT_NEAR(C(0, 0), 1.04, 4.0 * 1.04 * std::sqrt(2.0 / n));
  EXPECT_NEAR(C(1, 1), 0.04, 4.0 * 0.04 * std::sqrt(2.0 / n));
}

TEST(AmbientGaussian, Std1) {
  for (const double t : {0.01, 0.3, 1.0}) {
    const auto p = ambient_gaussian_params(std1(), t);
    ASSERT_EQ(p.size(), 1u);
    const double h = schedule_eval(t).h;
    EXPECT_LE(p[0].mean.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_NEAR(p[0].cov(0, 0), 1.0, 1e-14);
    EXPECT_NEAR(p[0].cov(1, 1), h, 1e-15);
    EXPECT_EQ(p[0].cov(0, 1), 0.0);
  }
}

TEST(AmbientGaussian, TimeZeroNoiseless) {
  Vec m(2);
  m << 1.0, 2.0;
  Mat S(2, 2);
  S << 2.0, 0.3, 0.3, 0.5;
  const Frame A = haar_frame(5, 2, 1);
  const auto p = ambient_gaussian_params(NoisyLowDimModel(A, LatentDistribution::gaussian(m, S), 0.0), 0.0);
  EXPECT_LE((p[0].mean - A.data() * m).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((p[0].cov - A.data() * S * A.data().transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AmbientGaussian, MatchesNoisedSamples) {
  const NoisyLowDimModel model(haar_frame(3, 1, 4), LatentDistribution::standard(1), 0.4);
  const double t = 0.3;
  const long n = 100000;
  const Mat X0 = sample_data(model, n, 12);
  Mat Xt(n, 3);
  Philox rng(13);
  for (long i = 0; i < n; ++i) Xt.row(i) = noise_forward(X0.row(i).transpose(), t, rng).transpose();
  const auto p = ambient_gaussian_params(model, t);
  const Mat C = sample_cov(Xt);
  const Vec mean = Xt.colwise().mean().transpose();
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(mean(i), 0.0, 4.0 * std::sqrt(p[0].cov(i, i) / n));
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((p[0].cov(i, i) * p[0].cov(j, j) + p[0].cov(i, j) * p[0].cov(i, j)) / n);
      EXPECT_NEAR(C(i, j), p[0].cov(i, j), 4.0 * se);
    }
  }
}

TEST(AmbientGaussian, MixtureEntries) {
  const auto z = LatentDistribution::mixture({0.25, 0.75}, {{Vec::Constant(1, -1.0), Mat::Identity(1, 1)},
                                                          {Vec::Constant(1, 2.0), Mat::Identity(1, 1) * 0.5}});
  const auto p = ambient_gaussian_params(NoisyLowDimModel(axis_frame(2, 1), z, 0.0), 0.5);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_DOUBLE_EQ(p[0].weight, 0.25);
  EXPECT_NEAR(p[1].mean(0), 2.0 * std::exp(-0.25), 1e-14);
}

TEST(ModelJson, RoundTrip) {
  const auto z = LatentDistribution::mixture({0.4, 0.6}, {{Vec::Constant(2, 1.0), Mat::Identity(2, 2)},
                                                         {Vec::Constant(2, -1.0), Mat::Identity(2, 2) * 2.0}});
  const NoisyLowDimModel m(haar_frame(4, 2, 3), z, 0.25);
  const MixtureModel mix(0.3, m, NoisyLowDimModel(axis_frame(4, 1), LatentDistribution::standard(1), 0.0));
  const MixtureModel back = mixture_from_json(to_json(mix));
  EXPECT_EQ(to_json(back).dump(), to_json(mix).dump());
  EXPECT_DOUBLE_EQ(back.omega[0], 0.3);
  EXPECT_EQ(to_json(back.components[0])["latent"]["type"], "gaussian_mixture");
}
