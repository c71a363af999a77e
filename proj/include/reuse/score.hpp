#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "reuse/datamodel.hpp"
#include "reuse/schedule.hpp"

namespace reuse {

// Finite Gaussian mixture with cached Cholesky factors; all evaluation is in
// log space.
class GaussianMixtureLaw {
 public:
  GaussianMixtureLaw() = default;
  void add(double weight, Vec mean, const Mat& cov);

  Eigen::Index dim() const { return means_.empty() ? 0 : means_.front().size(); }
  std::size_t size() const { return means_.size(); }

  double log_density(const Vec& x) const;
  // Score and (optionally) responsibilities of each component at x.
  Vec score(const Vec& x, std::vector<double>* resp = nullptr) const;
  Mat score_jacobian(const Vec& x) const;

 private:
  void component_terms(const Vec& x, std::vector<double>& logp, std::vector<Vec>& scores) const;

  std::vector<double> log_w_;
  std::vector<Vec> means_;
  std::vector<Eigen::LLT<Mat>> llt_;
  std::vector<Mat> precision_;
  std::vector<double> log_norm_;
};

double log_sum_exp(const std::vector<double>& v);

// A NoisyLowDimModel frozen at diffusion time t. Evaluation reuses the
// factorizations of alpha^2 S + h_tilde I.
class ModelSlice {
 public:
  ModelSlice(const NoisyLowDimModel& model, double t);

  const ScheduleValues& sched() const { return sv_; }
  const NoisyLowDimModel& model() const { return *model_; }

  Vec latent_score(const Vec& y) const { return latent_.score(y); }
  Vec g(const Vec& y) const;
  Vec f_star(const Vec& y) const;
  Mat g_jacobian(const Vec& y) const;
  double latent_log_density(const Vec& y) const { return latent_.log_density(y); }

  Vec score(const Vec& x) const;
  Vec G(const Vec& x) const;
  double log_density(const Vec& x) const;

 private:
  const NoisyLowDimModel* model_;
  ScheduleValues sv_;
  GaussianMixtureLaw latent_;
};

struct LatentMaps {
  Vec latent_score;
  Vec g;
  Vec f_star;
};

LatentMaps latent_maps(const NoisyLowDimModel& model, const Vec& y, double t);

struct AmbientScore {
  Vec total;
  Vec on_support;
  Vec orthogonal;
};

AmbientScore ambient_score(const NoisyLowDimModel& model, const Vec& x, double t);
Vec G_field(const NoisyLowDimModel& model, const Vec& x, double t);
double log_density(const NoisyLowDimModel& model, const Vec& x, double t);

// g(y) = C y + b.
struct AffineMap {
  Mat C;
  Vec b;
  Vec operator()(const Vec& y) const { return C * y + b; }
};

AffineMap gaussian_g_affine(const NoisyLowDimModel& model, double t);

// Mixture of two models at time t, with full and projected posteriors.
class MixtureSlice {
 public:
  MixtureSlice(const MixtureModel& mix, double t);

  const ModelSlice& component(int i) const { return comps_[static_cast<std::size_t>(i)]; }
  // Posterior weights (pi_1, pi_2) of the full ambient point.
  std::array<double, 2> posterior(const Vec& x) const;
  Vec score(const Vec& x, std::array<double, 2>* pi = nullptr) const;
  double log_density(const Vec& x) const;

 private:
  const MixtureModel* mix_;
  std::array<ModelSlice, 2> comps_;
};

struct MixtureScore {
  Vec score;
  std::array<double, 2> pi;
};

MixtureScore mixture_score(const MixtureModel& mix, const Vec& x, double t);

// Law of U^T X_t under each mixture component.
class ProjectedMixture {
 public:
  ProjectedMixture(const MixtureModel& mix, const Frame& U, double t);
  std::array<double, 2> posterior(const Vec& z) const;
  const GaussianMixtureLaw& law(int i) const { return laws_[static_cast<std::size_t>(i)]; }

 private:
  std::array<double, 2> log_omega_;
  std::array<GaussianMixtureLaw, 2> laws_;
};

std::array<double, 2> projected_posterior(const MixtureModel& mix, const Frame& U, const Vec& z, double t);

// Evaluable vector field s(x, t). Factories return a per-time evaluator so
// callers can reuse precomputation across many points at one t.
class ScoreField {
 public:
  using Evaluator = std::function<Vec(const Vec&)>;
  using Factory = std::function<Evaluator(double)>;

  ScoreField(std::string kind, Eigen::Index ambient_dim, Factory factory)
      : kind_(std::move(kind)), dim_(ambient_dim), factory_(std::move(factory)) {}

  const std::string& kind() const { return kind_; }
  Eigen::Index ambient_dim() const { return dim_; }
  Evaluator at(double t) const { return factory_(t); }
  Vec operator()(const Vec& x, double t) const { return factory_(t)(x); }

 private:
  std::string kind_;
  Eigen::Index dim_;
  Factory factory_;
};

// Map f(z, t) on projected coordinates, same per-time evaluator pattern.
class CoreMap {
 public:
  using Evaluator = std::function<Vec(const Vec&)>;
  using Factory = std::function<Evaluator(double)>;

  CoreMap(Eigen::Index dim, Factory factory) : dim_(dim), factory_(std::move(factory)) {}
  Eigen::Index dim() const { return dim_; }
  Evaluator at(double t) const { return factory_(t); }
  Vec operator()(const Vec& z, double t) const { return factory_(t)(z); }

 private:
  Eigen::Index dim_;
  Factory factory_;
};

ScoreField analytic_score(const NoisyLowDimModel& model);
ScoreField analytic_score(const MixtureModel& mix);

// s(x, t) = (1/h) U f(U^T x, t) - x / h.
ScoreField projected_score(const Frame& U, CoreMap core, std::string kind);

}  // namespace reuse
