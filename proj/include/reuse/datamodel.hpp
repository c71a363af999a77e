#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "reuse/geometry.hpp"
#include "reuse/rng.hpp"

namespace reuse {

struct GaussianComponent {
  Vec mean;
  Mat cov;   // symmetric PSD after clamping
  Mat root;  // root * root^T == cov
};

// Latent law p_z: a single Gaussian or a finite Gaussian mixture.
class LatentDistribution {
 public:
  enum class Kind { Gaussian, GaussianMixture };

  static LatentDistribution gaussian(Vec mean, Mat cov);
  static LatentDistribution standard(Eigen::Index dim);
  static LatentDistribution mixture(std::vector<double> weights, std::vector<std::pair<Vec, Mat>> components);

  Kind kind() const { return kind_; }
  bool is_gaussian() const { return kind_ == Kind::Gaussian; }
  Eigen::Index dim() const { return components_.front().mean.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<GaussianComponent>& components() const { return components_; }

  Vec sample(Philox& rng) const;

 private:
  Kind kind_ = Kind::Gaussian;
  std::vector<double> weights_;
  std::vector<GaussianComponent> components_;
};

struct NoisyLowDimModel {
  Frame frame;
  LatentDistribution latent;
  double sigma = 0.0;

  NoisyLowDimModel(Frame f, LatentDistribution z, double noise);

  Eigen::Index ambient_dim() const { return frame.ambient_dim(); }
  Eigen::Index latent_dim() const { return frame.latent_dim(); }
};

struct MixtureModel {
  std::array<double, 2> omega;
  std::array<NoisyLowDimModel, 2> components;

  MixtureModel(double omega1, NoisyLowDimModel first, NoisyLowDimModel second);

  Eigen::Index ambient_dim() const { return components[0].ambient_dim(); }
};

// Rows are samples.
Mat sample_data(const NoisyLowDimModel& model, Eigen::Index n, std::uint64_t seed, std::uint64_t stream = 0);

// Draws x_t ~ N(alpha(t) x0, h(t) I).
Vec noise_forward(const Vec& x0, double t, std::uint64_t seed, std::uint64_t stream = 0);
Vec noise_forward(const Vec& x0, double t, Philox& rng);

struct MixtureSample {
  Mat x;                    // rows are samples
  std::vector<int> labels;  // 1 or 2
};

MixtureSample sample_mixture(const MixtureModel& mix, Eigen::Index n, std::uint64_t seed, std::uint64_t stream = 0);

struct AmbientGaussian {
  double weight = 1.0;
  Vec mean;
  Mat cov;
};

// Law of X_t: one Gaussian per latent mixture component.
std::vector<AmbientGaussian> ambient_gaussian_params(const NoisyLowDimModel& model, double t);

nlohmann::json to_json(const LatentDistribution& z);
LatentDistribution latent_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NoisyLowDimModel& model);
NoisyLowDimModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MixtureModel& mix);
MixtureModel mixture_from_json(const nlohmann::json& j);

}  // namespace reuse
