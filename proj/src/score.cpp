#include "reuse/score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "reuse/error.hpp"

namespace reuse {

double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (const double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

void GaussianMixtureLaw::add(double weight, Vec mean, const Mat& cov) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularCovariance, "covariance is not positive definite");
  }
  const Mat L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const auto n = static_cast<double>(mean.size());
  log_w_.push_back(std::log(weight));
  log_norm_.push_back(-0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi));
  precision_.push_back(llt.solve(Mat::Identity(cov.rows(), cov.cols())));
  llt_.push_back(std::move(llt));
  means_.push_back(std::move(mean));
}

void GaussianMixtureLaw::component_terms(const Vec& x, std::vector<double>& logp, std::vector<Vec>& scores) const {
  logp.resize(means_.size());
  scores.resize(means_.size());
  for (std::size_t k = 0; k < means_.size(); ++k) {
    const Vec diff = x - means_[k];
    const Vec sol = llt_[k].solve(diff);
    logp[k] = log_w_[k] + log_norm_[k] - 0.5 * diff.dot(sol);
    scores[k] = -sol;
  }
}

double GaussianMixtureLaw::log_density(const Vec& x) const {
  std::vector<double> logp;
  std::vector<Vec> scores;
  component_terms(x, logp, scores);
  return log_sum_exp(logp);
}

Vec GaussianMixtureLaw::score(const Vec& x, std::vector<double>* resp) const {
  std::vector<double> logp;
  std::vector<Vec> scores;
  component_terms(x, logp, scores);
  if (means_.size() == 1) {
    if (resp) *resp = {1.0};
    return scores.front();
  }
  const double lse = log_sum_exp(logp);
  Vec out = Vec::Zero(x.size());
  if (resp) resp->resize(means_.size());
  for (std::size_t k = 0; k < means_.size(); ++k) {
    const double r = std::exp(logp[k] - lse);
    if (resp) (*resp)[k] = r;
    out += r * scores[k];
  }
  return out;
}

Mat GaussianMixtureLaw::score_jacobian(const Vec& x) const {
  std::vector<double> logp;
  std::vector<Vec> scores;
  component_terms(x, logp, scores);
  const double lse = log_sum_exp(logp);
  const Eigen::Index n = x.size();
  Mat jac = Mat::Zero(n, n);
  Vec mean_score = Vec::Zero(n);
  for (std::size_t k = 0; k < means_.size(); ++k) {
    const double r = std::exp(logp[k] - lse);
    jac += r * (scores[k] * scores[k].transpose() - precision_[k]);
    mean_score += r * scores[k];
  }
  jac -= mean_score * mean_score.transpose();
  return jac;
}

ModelSlice::ModelSlice(const NoisyLowDimModel& model, double t) : model_(&model), sv_(schedule_eval(t, model.sigma)) {
  if (!(sv_.h_tilde > 0.0)) {
    throw Error(ErrorCode::SingularCovariance, "h_tilde vanishes (t = 0 with sigma = 0)");
  }
  const auto& z = model.latent;
  const Eigen::Index d = z.dim();
  const Mat I = Mat::Identity(d, d);
  for (std::size_t k = 0; k < z.components().size(); ++k) {
    const auto& c = z.components()[k];
    latent_.add(z.weights()[k], sv_.alpha * c.mean, sv_.alpha * sv_.alpha * c.cov + sv_.h_tilde * I);
  }
}

Vec ModelSlice::g(const Vec& y) const { return y + sv_.h * latent_.score(y); }

Vec ModelSlice::f_star(const Vec& y) const { return y + sv_.h_tilde * latent_.score(y); }

Mat ModelSlice::g_jacobian(const Vec& y) const {
  return Mat::Identity(y.size(), y.size()) + sv_.h * latent_.score_jacobian(y);
}

Vec ModelSlice::score(const Vec& x) const {
  const Mat& A = model_->frame.data();
  const Vec y = A.transpose() * x;
  const Vec perp = x - A * y;
  return A * latent_.score(y) - perp / sv_.h_tilde;
}

Vec ModelSlice::G(const Vec& x) const {
  const Mat& A = model_->frame.data();
  const Vec y = A.transpose() * x;
  const Vec perp = x - A * y;
  return A * g(y) + sv_.rho * perp;
}

double ModelSlice::log_density(const Vec& x) const {
  const Mat& A = model_->frame.data();
  const Vec y = A.transpose() * x;
  const Vec perp = x - A * y;
  const auto k = static_cast<double>(model_->ambient_dim() - model_->latent_dim());
  return latent_.log_density(y) - 0.5 * perp.squaredNorm() / sv_.h_tilde -
         0.5 * k * std::log(2.0 * std::numbers::pi * sv_.h_tilde);
}

LatentMaps latent_maps(const NoisyLowDimModel& model, const Vec& y, double t) {
  const ModelSlice slice(model, t);
  LatentMaps out;
  out.latent_score = slice.latent_score(y);
  out.g = y + slice.sched().h * out.latent_score;
  out.f_star = y + slice.sched().h_tilde * out.latent_score;
  return out;
}

AmbientScore ambient_score(const NoisyLowDimModel& model, const Vec& x, double t) {
  const ModelSlice slice(model, t);
  const Mat& A = model.frame.data();
  const Vec y = A.transpose() * x;
  AmbientScore out;
  out.on_support = A * slice.latent_score(y);
  out.orthogonal = -(x - A * y) / slice.sched().h_tilde;
  out.total = out.on_support + out.orthogonal;
  return out;
}

Vec G_field(const NoisyLowDimModel& model, const Vec& x, double t) { return ModelSlice(model, t).G(x); }

double log_density(const NoisyLowDimModel& model, const Vec& x, double t) {
  return ModelSlice(model, t).log_density(x);
}

AffineMap gaussian_g_affine(const NoisyLowDimModel& model, double t) {
  if (!model.latent.is_gaussian()) throw Error(ErrorCode::NotGaussian, "affine g requires a Gaussian latent");
  const ScheduleValues sv = schedule_eval(t, model.sigma);
  const auto& c = model.latent.components().front();
  const Eigen::Index d = c.mean.size();
  const Mat I = Mat::Identity(d, d);
  Eigen::LLT<Mat> llt(sv.alpha * sv.alpha * c.cov + sv.h_tilde * I);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "alpha^2 S + h_tilde I");
  AffineMap g;
  g.C = I - sv.h * llt.solve(I);
  g.C = 0.5 * (g.C + g.C.transpose());
  g.b = sv.h * llt.solve(sv.alpha * c.mean);
  return g;
}

MixtureSlice::MixtureSlice(const MixtureModel& mix, double t)
    : mix_(&mix), comps_{ModelSlice(mix.components[0], t), ModelSlice(mix.components[1], t)} {}

std::array<double, 2> MixtureSlice::posterior(const Vec& x) const {
  std::array<double, 2> pi{};
  if (mix_->omega[1] == 0.0) return {1.0, 0.0};
  if (mix_->omega[0] == 0.0) return {0.0, 1.0};
  const double l1 = std::log(mix_->omega[0]) + comps_[0].log_density(x);
  const double l2 = std::log(mix_->omega[1]) + comps_[1].log_density(x);
  // Logistic form keeps pi_1 + pi_2 == 1 and avoids overflow for any gap.
  const double gap = l2 - l1;
  if (gap > 0) {
    const double e = std::exp(-gap);
    pi[1] = 1.0 / (1.0 + e);
    pi[0] = 1.0 - pi[1];
  } else {
    const double e = std::exp(gap);
    pi[0] = 1.0 / (1.0 + e);
    pi[1] = 1.0 - pi[0];
  }
  return pi;
}

Vec MixtureSlice::score(const Vec& x, std::array<double, 2>* pi_out) const {
  const auto pi = posterior(x);
  if (pi_out) *pi_out = pi;
  Vec s = Vec::Zero(x.size());
  if (pi[0] > 0.0) s += pi[0] * comps_[0].score(x);
  if (pi[1] > 0.0) s += pi[1] * comps_[1].score(x);
  return s;
}

double MixtureSlice::log_density(const Vec& x) const {
  std::vector<double> terms;
  for (int i = 0; i < 2; ++i) {
    if (mix_->omega[i] > 0.0) terms.push_back(std::log(mix_->omega[i]) + comps_[i].log_density(x));
  }
  return log_sum_exp(terms);
}

MixtureScore mixture_score(const MixtureModel& mix, const Vec& x, double t) {
  const MixtureSlice slice(mix, t);
  MixtureScore out;
  out.score = slice.score(x, &out.pi);
  return out;
}

ProjectedMixture::ProjectedMixture(const MixtureModel& mix, const Frame& U, double t) {
  for (int i = 0; i < 2; ++i) {
    const auto& model = mix.components[i];
    if (model.ambient_dim() != U.ambient_dim()) {
      throw Error(ErrorCode::DimensionMismatch, "projector and model differ in ambient dimension");
    }
    log_omega_[i] = mix.omega[i] > 0.0 ? std::log(mix.omega[i]) : -std::numeric_limits<double>::infinity();
    const ScheduleValues sv = schedule_eval(t, model.sigma);
    const Mat H = U.data().transpose() * model.frame.data();
    const Eigen::Index m = U.latent_dim();
    const auto& z = model.latent;
    for (std::size_t k = 0; k < z.components().size(); ++k) {
      const auto& c = z.components()[k];
      laws_[i].add(z.weights()[k], sv.alpha * (H * c.mean),
                   sv.alpha * sv.alpha * (H * c.cov * H.transpose()) + sv.h_tilde * Mat::Identity(m, m));
    }
  }
}

std::array<double, 2> ProjectedMixture::posterior(const Vec& z) const {
  if (!std::isfinite(log_omega_[1])) return {1.0, 0.0};
  if (!std::isfinite(log_omega_[0])) return {0.0, 1.0};
  const double gap = (log_omega_[1] + laws_[1].log_density(z)) - (log_omega_[0] + laws_[0].log_density(z));
  std::array<double, 2> pi{};
  if (gap > 0) {
    pi[1] = 1.0 / (1.0 + std::exp(-gap));
    pi[0] = 1.0 - pi[1];
  } else {
    pi[0] = 1.0 / (1.0 + std::exp(gap));
    pi[1] = 1.0 - pi[0];
  }
  return pi;
}

std::array<double, 2> projected_posterior(const MixtureModel& mix, const Frame& U, const Vec& z, double t) {
  return ProjectedMixture(mix, U, t).posterior(z);
}

ScoreField analytic_score(const NoisyLowDimModel& model) {
  auto shared = std::make_shared<const NoisyLowDimModel>(model);
  return ScoreField("analytic", model.ambient_dim(), [shared](double t) -> ScoreField::Evaluator {
    auto slice = std::make_shared<ModelSlice>(*shared, t);
    return [shared, slice](const Vec& x) { return slice->score(x); };
  });
}

ScoreField analytic_score(const MixtureModel& mix) {
  auto shared = std::make_shared<const MixtureModel>(mix);
  return ScoreField("analytic", mix.ambient_dim(), [shared](double t) -> ScoreField::Evaluator {
    auto slice = std::make_shared<MixtureSlice>(*shared, t);
    return [shared, slice](const Vec& x) { return slice->score(x); };
  });
}

ScoreField projected_score(const Frame& U, CoreMap core, std::string kind) {
  return ScoreField(std::move(kind), U.ambient_dim(), [U, core = std::move(core)](double t) -> ScoreField::Evaluator {
    const double h = schedule_eval(t).h;
    auto f = core.at(t);
    return [U, f, h](const Vec& x) -> Vec {
      const Vec z = U.data().transpose() * x;
      return (U.data() * f(z) - x) / h;
    };
  });
}

}  // namespace reuse
