#include "reuse/datamodel.hpp"

#include <cmath>
#include <numeric>

#include "reuse/error.hpp"
#include "reuse/schedule.hpp"

namespace reuse {

namespace {

GaussianComponent make_component(Vec mean, Mat cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw Error(ErrorCode::DimensionMismatch, "covariance shape does not match mean");
  }
  if (max_abs(cov - cov.transpose()) > 1e-10 * std::max(1.0, max_abs(cov))) {
    throw Error(ErrorCode::InvalidArgument, "covariance is not symmetric");
  }
  Mat sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  Vec lam = es.eigenvalues();
  if (lam.size() && lam.minCoeff() < -1e-10) {
    throw Error(ErrorCode::InvalidArgument, "covariance is not positive semidefinite");
  }
  lam = lam.cwiseMax(0.0);
  GaussianComponent c;
  c.mean = std::move(mean);
  c.cov = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  c.root = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
  return c;
}

Mat matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  if (j.is_array() && !j.empty() && j.front().is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != rows) throw Error(ErrorCode::InvalidArgument, "matrix row count");
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& row = j.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::InvalidArgument, "matrix column count");
      for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
  }
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw Error(ErrorCode::InvalidArgument, "matrix size");
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = flat[static_cast<std::size_t>(i * cols + c)];
  return m;
}

nlohmann::json matrix_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(i, c);
    rows.push_back(row);
  }
  return rows;
}

Vec vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

LatentDistribution LatentDistribution::gaussian(Vec mean, Mat cov) {
  if (mean.size() < 1) throw Error(ErrorCode::InvalidArgument, "latent dimension must be positive");
  LatentDistribution z;
  z.kind_ = Kind::Gaussian;
  z.weights_ = {1.0};
  z.components_.push_back(make_component(std::move(mean), std::move(cov)));
  return z;
}

LatentDistribution LatentDistribution::standard(Eigen::Index dim) {
  return gaussian(Vec::Zero(dim), Mat::Identity(dim, dim));
}

LatentDistribution LatentDistribution::mixture(std::vector<double> weights,
                                               std::vector<std::pair<Vec, Mat>> components) {
  if (weights.empty() || weights.size() != components.size()) {
    throw Error(ErrorCode::InvalidArgument, "mixture needs one weight per component");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "mixture weights must sum to 1");
  for (const double w : weights) {
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidArgument, "mixture weights must be positive");
  }
  LatentDistribution z;
  z.kind_ = Kind::GaussianMixture;
  z.weights_ = std::move(weights);
  for (auto& [m, c] : components) z.components_.push_back(make_component(std::move(m), std::move(c)));
  for (const auto& c : z.components_) {
    if (c.mean.size() != z.components_.front().mean.size()) {
      throw Error(ErrorCode::DimensionMismatch, "mixture components differ in dimension");
    }
  }
  return z;
}

Vec LatentDistribution::sample(Philox& rng) const {
  std::size_t k = 0;
  if (components_.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    k = components_.size() - 1;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      acc += weights_[i];
      if (u < acc) {
        k = i;
        break;
      }
    }
  }
  const auto& c = components_[k];
  return c.mean + c.root * rng.normal_vector(c.mean.size());
}

NoisyLowDimModel::NoisyLowDimModel(Frame f, LatentDistribution z, double noise)
    : frame(std::move(f)), latent(std::move(z)), sigma(noise) {
  if (latent.dim() != frame.latent_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "latent dimension does not match frame");
  }
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be nonnegative");
}

MixtureModel::MixtureModel(double omega1, NoisyLowDimModel first, NoisyLowDimModel second)
    : omega{omega1, 1.0 - omega1}, components{std::move(first), std::move(second)} {
  if (!(omega1 >= 0.0 && omega1 <= 1.0)) throw Error(ErrorCode::InvalidArgument, "omega must lie in [0, 1]");
  if (components[0].ambient_dim() != components[1].ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "mixture components differ in ambient dimension");
  }
}

namespace {

Vec draw_point(const NoisyLowDimModel& model, Philox& rng) {
  const Vec z = model.latent.sample(rng);
  Vec x = model.frame.data() * z;
  if (model.sigma > 0.0) x += model.sigma * rng.normal_vector(model.ambient_dim());
  return x;
}

}  // namespace

Mat sample_data(const NoisyLowDimModel& model, Eigen::Index n, std::uint64_t seed, std::uint64_t stream) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  Philox rng(seed, stream);
  Mat out(n, model.ambient_dim());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = draw_point(model, rng).transpose();
  return out;
}

Vec noise_forward(const Vec& x0, double t, Philox& rng) {
  const ScheduleValues sv = schedule_eval(t);
  Vec xi = rng.normal_vector(x0.size());
  if (sv.h == 0.0) return x0;
  return sv.alpha * x0 + std::sqrt(sv.h) * xi;
}

Vec noise_forward(const Vec& x0, double t, std::uint64_t seed, std::uint64_t stream) {
  Philox rng(seed, stream);
  return noise_forward(x0, t, rng);
}

MixtureSample sample_mixture(const MixtureModel& mix, Eigen::Index n, std::uint64_t seed, std::uint64_t stream) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  Philox rng(seed, stream);
  MixtureSample out;
  out.x.resize(n, mix.ambient_dim());
  out.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = rng.uniform() < mix.omega[0] ? 1 : 2;
    out.labels[static_cast<std::size_t>(i)] = label;
    out.x.row(i) = draw_point(mix.components[label - 1], rng).transpose();
  }
  return out;
}

std::vector<AmbientGaussian> ambient_gaussian_params(const NoisyLowDimModel& model, double t) {
  const ScheduleValues sv = schedule_eval(t, model.sigma);
  const Mat& A = model.frame.data();
  const Eigen::Index D = model.ambient_dim();
  std::vector<AmbientGaussian> out;
  const auto& comps = model.latent.components();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    AmbientGaussian g;
    g.weight = model.latent.weights()[k];
    g.mean = sv.alpha * (A * comps[k].mean);
    g.cov = sv.alpha * sv.alpha * (A * comps[k].cov * A.transpose()) + sv.h_tilde * Mat::Identity(D, D);
    out.push_back(std::move(g));
  }
  return out;
}

nlohmann::json to_json(const LatentDistribution& z) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : z.components()) {
    comps.push_back({{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"cov", matrix_to_json(c.cov)}});
  }
  if (z.is_gaussian()) {
    return {{"type", "gaussian"}, {"params", comps.front()}};
  }
  return {{"type", "gaussian_mixture"}, {"params", {{"weights", z.weights()}, {"components", comps}}}};
}

LatentDistribution latent_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  const auto& p = j.at("params");
  auto component = [](const nlohmann::json& c) {
    Vec mean = vec_from_json(c.at("mean"));
    Mat cov = matrix_from_json(c.at("cov"), mean.size(), mean.size());
    return std::make_pair(std::move(mean), std::move(cov));
  };
  if (type == "gaussian") {
    auto [m, c] = component(p);
    return LatentDistribution::gaussian(std::move(m), std::move(c));
  }
  if (type == "gaussian_mixture") {
    std::vector<std::pair<Vec, Mat>> comps;
    for (const auto& c : p.at("components")) comps.push_back(component(c));
    return LatentDistribution::mixture(p.at("weights").get<std::vector<double>>(), std::move(comps));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown latent type '" + type + "'");
}

nlohmann::json to_json(const NoisyLowDimModel& model) {
  nlohmann::json frame;
  reuse::to_json(frame, model.frame);
  return {{"frame", frame}, {"latent", to_json(model.latent)}, {"sigma", model.sigma}};
}

NoisyLowDimModel model_from_json(const nlohmann::json& j) {
  return NoisyLowDimModel(frame_from_json(j.at("frame")), latent_from_json(j.at("latent")),
                          j.at("sigma").get<double>());
}

nlohmann::json to_json(const MixtureModel& mix) {
  return {{"omega", mix.omega}, {"components", {to_json(mix.components[0]), to_json(mix.components[1])}}};
}

MixtureModel mixture_from_json(const nlohmann::json& j) {
  const auto omega = j.at("omega").get<std::vector<double>>();
  if (omega.size() != 2 || std::abs(omega[0] + omega[1] - 1.0) > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "omega must be two weights summing to 1");
  }
  const auto& c = j.at("components");
  return MixtureModel(omega[0], model_from_json(c.at(0)), model_from_json(c.at(1)));
}

}  // namespace reuse
