#include "reuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "reuse/error.hpp"
#include "reuse/rng.hpp"

namespace reuse {

namespace {

// y * min(1, K / ||y||), column-wise.
void clip_columns(Mat& Y, double K) {
  for (Eigen::Index i = 0; i < Y.cols(); ++i) {
    const double n = Y.col(i).norm();
    if (n > K) Y.col(i) *= K / n;
  }
}

Mat clip_jacobian(const Vec& y, double K) {
  const auto m = y.size();
  const double n = y.norm();
  if (n <= K) return Mat::Identity(m, m);
  const Vec u = y / n;
  return (K / n) * (Mat::Identity(m, m) - u * u.transpose());
}

}  // namespace

ReluCore::ReluCore(std::vector<int> widths, double K, double kappa)
    : widths_(std::move(widths)), K_(K), kappa_(kappa) {
  if (widths_.size() < 2) throw Error(ErrorCode::InvalidArgument, "a core needs at least an input and output width");
  for (const int w : widths_) {
    if (w <= 0) throw Error(ErrorCode::InvalidArgument, "layer widths must be positive");
  }
  if (widths_.front() != widths_.back() + 1) {
    throw Error(ErrorCode::DimensionMismatch, "input width must be output width + 1 (z and t)");
  }
  if (!(K > 0.0) || !(kappa > 0.0)) throw Error(ErrorCode::InvalidArgument, "K and kappa must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    W_.push_back(Mat::Zero(widths_[l + 1], widths_[l]));
    b_.push_back(Vec::Zero(widths_[l + 1]));
  }
}

ReluCore ReluCore::random(std::vector<int> widths, double K, double kappa, std::uint64_t seed) {
  ReluCore core(std::move(widths), K, kappa);
  Philox rng(seed, 0);
  for (auto& W : core.W_) {
    const double scale = std::sqrt(2.0 / static_cast<double>(W.cols()));
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = scale * rng.normal();
    }
  }
  core.clamp_params();
  return core;
}

ReluCore ReluCore::with_hidden(int m, int n_hidden, int width, double K, double kappa, std::uint64_t seed) {
  std::vector<int> widths{m + 1};
  for (int l = 0; l < n_hidden; ++l) widths.push_back(width);
  widths.push_back(m);
  return random(widths, K, kappa, seed);
}

Eigen::Index ReluCore::n_params() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
  return n;
}

Vec ReluCore::params() const {
  Vec p(n_params());
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    p.segment(o, W_[l].size()) = Eigen::Map<const Vec>(W_[l].data(), W_[l].size());
    o += W_[l].size();
    p.segment(o, b_[l].size()) = b_[l];
    o += b_[l].size();
  }
  return p;
}

void ReluCore::set_params(const Vec& p) {
  if (p.size() != n_params()) throw Error(ErrorCode::DimensionMismatch, "parameter vector has the wrong length");
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < W_.size(); ++l) {
    Eigen::Map<Vec>(W_[l].data(), W_[l].size()) = p.segment(o, W_[l].size());
    o += W_[l].size();
    b_[l] = p.segment(o, b_[l].size());
    o += b_[l].size();
  }
}

void ReluCore::clamp_params() {
  for (std::size_t l = 0; l < W_.size(); ++l) {
    W_[l] = W_[l].cwiseMax(-kappa_).cwiseMin(kappa_);
    b_[l] = b_[l].cwiseMax(-kappa_).cwiseMin(kappa_);
  }
}

Mat ReluCore::forward(const Mat& Z, const Vec& t) const {
  if (Z.rows() != in_dim() || t.size() != Z.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "core input has the wrong shape");
  }
  Mat a(Z.rows() + 1, Z.cols());
  a.topRows(Z.rows()) = Z;
  a.row(Z.rows()) = t.transpose();
  for (std::size_t l = 0; l < W_.size(); ++l) {
    Mat pre = W_[l] * a;
    pre.colwise() += b_[l];
    if (l + 1 < W_.size()) {
      a = pre.cwiseMax(0.0);
    } else {
      a = std::move(pre);
    }
  }
  clip_columns(a, K_);
  return a;
}

Vec ReluCore::forward(const Vec& z, double t) const {
  Vec tv(1);
  tv(0) = t;
  return forward(Mat(z), tv).col(0);
}

double ReluCore::loss_and_gradient(const Mat& Z, const Vec& t, const Mat& Y, const Vec& w, Vec* grad) const {
  const auto n = static_cast<double>(Z.cols());
  const std::size_t L = W_.size();
  std::vector<Mat> acts;  // input to layer l
  acts.reserve(L);
  Mat a(Z.rows() + 1, Z.cols());
  a.topRows(Z.rows()) = Z;
  a.row(Z.rows()) = t.transpose();
  for (std::size_t l = 0; l < L; ++l) {
    acts.push_back(a);
    Mat pre = W_[l] * a;
    pre.colwise() += b_[l];
    a = l + 1 < L ? Mat(pre.cwiseMax(0.0)) : pre;
  }
  const Mat raw = a;
  Mat out = raw;
  clip_columns(out, K_);
  const Mat diff = out - Y;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < diff.cols(); ++i) loss += w(i) * diff.col(i).squaredNorm();
  loss /= n;
  if (grad == nullptr) return loss;

  Mat delta(diff.rows(), diff.cols());
  for (Eigen::Index i = 0; i < diff.cols(); ++i) {
    const Vec dc = 2.0 * w(i) / n * diff.col(i);
    const double r = raw.col(i).norm();
    if (r <= K_) {
      delta.col(i) = dc;
    } else {
      const Vec u = raw.col(i) / r;
      delta.col(i) = (K_ / r) * (dc - u * u.dot(dc));
    }
  }
  std::vector<Mat> gW(L);
  std::vector<Vec> gb(L);
  for (std::size_t l = L; l-- > 0;) {
    gW[l] = delta * acts[l].transpose();
    gb[l] = delta.rowwise().sum();
    if (l > 0) {
      // acts[l] = relu(pre_{l-1}); relu' is 1 where the activation is positive
      delta = (W_[l].transpose() * delta).cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  grad->resize(n_params());
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < L; ++l) {
    grad->segment(o, gW[l].size()) = Eigen::Map<const Vec>(gW[l].data(), gW[l].size());
    o += gW[l].size();
    grad->segment(o, gb[l].size()) = gb[l];
    o += gb[l].size();
  }
  return loss;
}

Mat ReluCore::input_jacobian(const Vec& z, double t) const {
  Vec a(z.size() + 1);
  a << z, t;
  Mat J = Mat::Identity(a.size(), a.size());
  for (std::size_t l = 0; l < W_.size(); ++l) {
    const Vec pre = W_[l] * a + b_[l];
    J = W_[l] * J;
    if (l + 1 < W_.size()) {
      for (Eigen::Index i = 0; i < pre.size(); ++i) {
        if (pre(i) <= 0.0) J.row(i).setZero();
      }
      a = pre.cwiseMax(0.0);
    } else {
      a = pre;
    }
  }
  return clip_jacobian(a, K_) * J;
}

GradCheck gradient_check(const ReluCore& core, const Mat& Z, const Vec& t, const Mat& Y, const Vec& w, int n_check,
                         double step, std::uint64_t seed) {
  Vec grad;
  core.loss_and_gradient(Z, t, Y, w, &grad);
  const Vec p0 = core.params();
  ReluCore probe = core;
  Philox rng(seed, 0);
  GradCheck out;
  const auto np = static_cast<std::uint64_t>(p0.size());
  for (int c = 0; c < n_check; ++c) {
    const auto i = static_cast<Eigen::Index>(rng.next_u64() % np);
    Vec p = p0;
    p(i) = p0(i) + step;
    probe.set_params(p);
    const double up = probe.loss_and_gradient(Z, t, Y, w, nullptr);
    p(i) = p0(i) - step;
    probe.set_params(p);
    const double down = probe.loss_and_gradient(Z, t, Y, w, nullptr);
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad(i)), std::abs(numeric), 1e-7});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(grad(i) - numeric) / denom);
    out.checked.push_back(i);
  }
  return out;
}

Vec core_forward(const ReluCore& core, const Vec& z, double t) { return core.forward(z, t); }

CoreMap as_core_map(const ReluCore& core) {
  auto shared = std::make_shared<const ReluCore>(core);
  return CoreMap(core.out_dim(), [shared](double t) {
    return [shared, t](const Vec& z) -> Vec { return shared->forward(z, t); };
  });
}

bool TruncationRegion::contains(const Vec& x) const {
  const Mat& A = frame.data();
  const Vec z = A.transpose() * x;
  const double perp = (x - A * z).norm();
  return z.norm() <= R_z && perp <= R_perp + 1e-9 * (1.0 + x.norm());
}

TruncationRegion truncation_radii(const NoisyLowDimModel& target, long n2, double delta, double C_z, double C_perp) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
  if (n2 <= 0) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  const double tail = std::sqrt(std::log(8.0 * static_cast<double>(n2) / delta));
  const auto d = static_cast<double>(target.latent_dim());
  const auto D = static_cast<double>(target.ambient_dim());
  TruncationRegion r{target.frame, 0.0, 0.0, C_z, C_perp, delta, n2};
  r.R_z = C_z * (1.0 + target.sigma) * (std::sqrt(d) + tail);
  r.R_perp = C_perp * target.sigma * (std::sqrt(D - d) + tail);
  return r;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, "train config: " + what); };
  if (n_epochs < 0) bad("n_epochs must be >= 0");
  if (batch_size <= 0) bad("batch_size must be positive");
  if (!(step_size > 0.0)) bad("step_size must be positive");
  if (momentum < 0.0 || momentum >= 1.0) bad("momentum must lie in [0, 1)");
  if (n_time_samples <= 0) bad("n_time_samples must be positive");
  if (!(kappa > 0.0)) bad("kappa must be positive");
  if (n_hidden < 0 || width <= 0) bad("architecture must have width > 0");
  if (!(t0 > 0.0) || !(T > t0)) bad("need 0 < t0 < T");
}

double inverse_h2_antiderivative(double t) {
  const double e = std::expm1(t);
  return std::log(e) - 1.0 / e;
}

double sample_inverse_h2(double t0, double T, double u) {
  const double F0 = inverse_h2_antiderivative(t0);
  const double target = F0 + u * (inverse_h2_antiderivative(T) - F0);
  double lo = t0, hi = T;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (inverse_h2_antiderivative(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

TrainResult train(const Mat& samples, const Frame& U, const TrainConfig& config, const TruncationRegion* region) {
  const auto m = static_cast<int>(U.latent_dim());
  const double K = config.K > 0.0 ? config.K : 10.0 * std::sqrt(static_cast<double>(m));
  const ReluCore init = ReluCore::with_hidden(m, config.n_hidden, config.width, K, config.kappa,
                                              derive_seed(config.seed, "init"));
  return train(samples, U, config, init, region);
}

TrainResult train(const Mat& samples, const Frame& U, const TrainConfig& config, const ReluCore& init,
                  const TruncationRegion* region) {
  config.validate();
  if (samples.cols() != U.ambient_dim()) throw Error(ErrorCode::DimensionMismatch, "samples and projector differ in D");
  if (init.out_dim() != U.latent_dim()) throw Error(ErrorCode::DimensionMismatch, "core and projector differ in m");
  TrainResult res{init, {}, 0};
  const auto m = static_cast<int>(U.latent_dim());

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    if (config.truncation && region != nullptr && !region->contains(samples.row(i).transpose())) continue;
    keep.push_back(i);
  }
  res.n_used = static_cast<long>(keep.size());
  if (config.n_epochs == 0 || keep.empty()) return res;

  const Mat Z0 = (samples * U.data()).transpose();  // m x n
  Vec perp2(samples.rows());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    perp2(i) = samples.row(i).squaredNorm() - Z0.col(i).squaredNorm();
  }
  // Mean of 1/h^2 over the window; per-sample weights are relative to it.
  const double w_bar =
      (inverse_h2_antiderivative(config.T) - inverse_h2_antiderivative(config.t0)) / (config.T - config.t0);

  Philox rng(derive_seed(config.seed, "train"), 0);
  Vec velocity = Vec::Zero(res.core.n_params());
  Vec grad;
  const auto n = static_cast<long>(keep.size());
  const int per = config.n_time_samples;
  for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
    for (long i = n - 1; i > 0; --i) {
      const auto j = static_cast<long>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(keep[i], keep[j]);
    }
    double epoch_loss = 0.0;
    long epoch_count = 0;
    for (long start = 0; start < n; start += config.batch_size) {
      const long bs = std::min<long>(config.batch_size, n - start);
      const long cols = bs * per;
      Mat Zt(m, cols), Y(m, cols);
      Vec tt(cols), w(cols);
      double perp_part = 0.0;
      for (long b = 0; b < bs; ++b) {
        const Eigen::Index idx = keep[start + b];
        for (int r = 0; r < per; ++r) {
          const long c = b * per + r;
          double t;
          if (config.time_sampling == TimeSampling::InverseH2) {
            t = sample_inverse_h2(config.t0, config.T, rng.uniform());
            w(c) = 1.0;
          } else {
            t = config.t0 + (config.T - config.t0) * rng.uniform();
            const double h = -std::expm1(-t);
            w(c) = 1.0 / (h * h * w_bar);
          }
          const ScheduleValues sv = schedule_eval(t);
          tt(c) = t;
          Y.col(c) = sv.alpha * Z0.col(idx);
          Zt.col(c) = Y.col(c) + std::sqrt(sv.h) * rng.normal_vector(m);
          perp_part += w(c) * sv.alpha * sv.alpha * perp2(idx);
        }
      }
      const double loss = res.core.loss_and_gradient(Zt, tt, Y, w, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream os;
        os << "training loss became non-finite at epoch " << epoch;
        throw Error(ErrorCode::Diverged, os.str());
      }
      epoch_loss += w_bar * (loss * static_cast<double>(cols) + perp_part);
      epoch_count += cols;
      velocity = config.momentum * velocity - config.step_size * grad;
      res.core.set_params(res.core.params() + velocity);
      res.core.clamp_params();
    }
    res.loss_trace.push_back(epoch_loss / static_cast<double>(epoch_count));
  }
  return res;
}

double denoising_loss(const Vec& x0, const ScoreField& s, const DiffusionSchedule& sched, int n_t,
                      std::uint64_t seed) {
  if (n_t <= 0) throw Error(ErrorCode::InvalidArgument, "n_t must be positive");
  const auto& w = sched.weights();
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  Philox rng(seed, 0);
  double acc = 0.0;
  for (int r = 0; r < n_t; ++r) {
    const double u = rng.uniform() * cdf.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const double t = sched.nodes()[std::min(k, cdf.size() - 1)];
    const ScheduleValues sv = schedule_eval(t);
    const Vec xt = sv.alpha * x0 + std::sqrt(sv.h) * rng.normal_vector(x0.size());
    acc += ((sv.alpha * x0 - xt) / sv.h - s(xt, t)).squaredNorm();
  }
  return acc / n_t;
}

MultiEstimate denoising_gap(const std::vector<ScoreField>& fields, const Reference& ref,
                            const DiffusionSchedule& sched, const McBudget& budget, std::uint64_t seed) {
  const ScoreField truth = reference_score(ref);
  struct Ctx {
    ScoreField::Evaluator truth;
    std::vector<ScoreField::Evaluator> fields;
  };
  const int nf = static_cast<int>(fields.size());
  return sweep_forward(
      ref, sched, 2 * nf, budget, seed,
      [&](double t) {
        Ctx c{truth.at(t), {}};
        for (const auto& f : fields) c.fields.push_back(f.at(t));
        return c;
      },
      [nf](int k, double, const ScheduleValues& sv, const Vec& x0, const Vec& xt, const Ctx& c, Mat& sums) {
        const Vec cond = (sv.alpha * x0 - xt) / sv.h;
        const Vec s_true = c.truth(xt);
        for (int j = 0; j < nf; ++j) {
          const Vec s = c.fields[j](xt);
          sums(2 * j, k) += (cond - s).squaredNorm();
          sums(2 * j + 1, k) += (s_true - s).squaredNorm();
        }
      });
}

double e2_upper_bound(int D, double t0, double T) {
  if (T - t0 < 1e-12) return D / -std::expm1(-t0);
  return D / (T - t0) * std::log(std::expm1(T) / std::expm1(t0));
}

double e2_upper_bound(int D, const DiffusionSchedule& sched) { return e2_upper_bound(D, sched.t0(), sched.T()); }

double e2_exact_gaussian(const NoisyLowDimModel& model, const DiffusionSchedule& sched) {
  if (!model.latent.is_gaussian()) throw Error(ErrorCode::NotGaussian, "closed-form E2 needs a Gaussian latent");
  const auto D = static_cast<double>(model.ambient_dim());
  return time_average(sched, [&](double t) {
           const ScheduleValues sv = schedule_eval(t, model.sigma);
           const Mat cov = ambient_gaussian_params(model, t).front().cov;
           const Mat inv = Eigen::LLT<Mat>(cov).solve(Mat::Identity(cov.rows(), cov.cols()));
           return D / sv.h - inv.trace();
         }).value;
}

CoreMetrics measure_core(const ReluCore& core, const Mat& probes_z, const Vec& probes_t) {
  CoreMetrics out;
  const Vec p = core.params();
  out.n_params = static_cast<long>(p.size());
  out.n_nonzero = static_cast<long>((p.array() != 0.0).count());
  out.max_abs_param = p.size() > 0 ? p.cwiseAbs().maxCoeff() : 0.0;
  const int m = core.out_dim();
  for (Eigen::Index i = 0; i < probes_z.cols(); ++i) {
    const Mat J = core.input_jacobian(probes_z.col(i), probes_t(i));
    const Mat Jz = J.leftCols(m);
    Eigen::JacobiSVD<Mat> svd(Jz);
    out.gamma = std::max(out.gamma, svd.singularValues()(0));
    out.gamma_t = std::max(out.gamma_t, J.col(m).norm());
    out.max_output_norm = std::max(out.max_output_norm, core.forward(Vec(probes_z.col(i)), probes_t(i)).norm());
  }
  return out;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"n_epochs", c.n_epochs},
          {"batch_size", c.batch_size},
          {"step_size", c.step_size},
          {"momentum", c.momentum},
          {"seed", c.seed},
          {"n_time_samples", c.n_time_samples},
          {"truncation", c.truncation},
          {"K", c.K},
          {"kappa", c.kappa},
          {"n_hidden", c.n_hidden},
          {"width", c.width},
          {"t0", c.t0},
          {"T", c.T},
          {"time_sampling", c.time_sampling == TimeSampling::Uniform ? "uniform" : "inverse_h2"}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.n_epochs = j.value("n_epochs", c.n_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.step_size = j.value("step_size", c.step_size);
  c.momentum = j.value("momentum", c.momentum);
  c.seed = j.value("seed", c.seed);
  c.n_time_samples = j.value("n_time_samples", c.n_time_samples);
  c.truncation = j.value("truncation", c.truncation);
  c.K = j.value("K", c.K);
  c.kappa = j.value("kappa", c.kappa);
  c.n_hidden = j.value("n_hidden", c.n_hidden);
  c.width = j.value("width", c.width);
  c.t0 = j.value("t0", c.t0);
  c.T = j.value("T", c.T);
  const std::string ts = j.value("time_sampling", std::string("inverse_h2"));
  if (ts == "uniform") {
    c.time_sampling = TimeSampling::Uniform;
  } else if (ts == "inverse_h2") {
    c.time_sampling = TimeSampling::InverseH2;
  } else {
    throw Error(ErrorCode::ConfigInvalid, "unknown time_sampling '" + ts + "'");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ReluCore& core, const TrainConfig& config) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < core.weights().size(); ++l) {
    const Mat& W = core.weights()[l];
    std::vector<double> flat;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) flat.push_back(W(i, j));
    }
    const Vec& b = core.biases()[l];
    layers.push_back({{"W", flat}, {"b", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return {{"widths", core.widths()}, {"K", core.K()},         {"kappa", core.kappa()},
          {"weights", layers},       {"seed", config.seed},    {"config", to_json(config)}};
}

ReluCore core_from_json(const nlohmann::json& j) {
  ReluCore core(j.at("widths").get<std::vector<int>>(), j.at("K").get<double>(), j.at("kappa").get<double>());
  const auto& layers = j.at("weights");
  if (layers.size() != core.weights().size()) throw Error(ErrorCode::ConfigInvalid, "layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto flat = layers[l].at("W").get<std::vector<double>>();
    const auto b = layers[l].at("b").get<std::vector<double>>();
    Mat& W = core.weights()[l];
    if (static_cast<Eigen::Index>(flat.size()) != W.size() || static_cast<Eigen::Index>(b.size()) != core.biases()[l].size()) {
      throw Error(ErrorCode::ConfigInvalid, "layer shape mismatch");
    }
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(i, c) = flat[static_cast<std::size_t>(i * W.cols() + c)];
    }
    core.biases()[l] = Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  return core;
}

}  // namespace reuse
