#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reuse/montecarlo.hpp"
#include "reuse/risk.hpp"

namespace reuse {

// ReLU MLP on (z, t) with a final norm clip to K.
class ReluCore {
 public:
  ReluCore() = default;
  // widths = {m + 1, hidden..., m}
  ReluCore(std::vector<int> widths, double K, double kappa);

  // He-normal weights, zero biases.
  static ReluCore random(std::vector<int> widths, double K, double kappa, std::uint64_t seed);
  static ReluCore with_hidden(int m, int n_hidden, int width, double K, double kappa, std::uint64_t seed);

  int in_dim() const { return widths_.front() - 1; }
  int out_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  double K() const { return K_; }
  double kappa() const { return kappa_; }
  std::vector<Mat>& weights() { return W_; }
  std::vector<Vec>& biases() { return b_; }
  const std::vector<Mat>& weights() const { return W_; }
  const std::vector<Vec>& biases() const { return b_; }

  Eigen::Index n_params() const;
  Vec params() const;
  void set_params(const Vec& p);
  void clamp_params();

  // Columns of Z are inputs; one time per column.
  Mat forward(const Mat& Z, const Vec& t) const;
  Vec forward(const Vec& z, double t) const;

  // loss = sum_i w_i ||f(z_i, t_i) - y_i||^2 / n; gradient w.r.t. params().
  double loss_and_gradient(const Mat& Z, const Vec& t, const Mat& Y, const Vec& w, Vec* grad) const;

  // d f / d (z, t) at one point: m x (m + 1).
  Mat input_jacobian(const Vec& z, double t) const;

 private:
  std::vector<int> widths_;
  double K_ = 1.0;
  double kappa_ = 1.0;
  std::vector<Mat> W_;
  std::vector<Vec> b_;
};

// Central differences on n_check randomly chosen parameters; returns the
// largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-7).
struct GradCheck {
  double max_rel_error = 0.0;
  std::vector<Eigen::Index> checked;
};
GradCheck gradient_check(const ReluCore& core, const Mat& Z, const Vec& t, const Mat& Y, const Vec& w, int n_check,
                         double step, std::uint64_t seed);

Vec core_forward(const ReluCore& core, const Vec& z, double t);
CoreMap as_core_map(const ReluCore& core);

struct TruncationRegion {
  Frame frame;  // target latent frame A_2
  double R_z = 0.0;
  double R_perp = 0.0;
  double C_z = 1.0;
  double C_perp = 1.0;
  double delta = 0.05;
  long n = 0;

  bool contains(const Vec& x) const;
};

TruncationRegion truncation_radii(const NoisyLowDimModel& target, long n2, double delta, double C_z, double C_perp);

enum class TimeSampling { Uniform, InverseH2 };

struct TrainConfig {
  int n_epochs = 200;
  int batch_size = 128;
  double step_size = 1e-3;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int n_time_samples = 1;
  bool truncation = false;
  double K = -1.0;  // <= 0: 10 sqrt(m)
  double kappa = 50.0;
  int n_hidden = 3;
  int width = 64;
  double t0 = 0.01;
  double T = 1.0;
  TimeSampling time_sampling = TimeSampling::InverseH2;

  void validate() const;
};

struct TrainResult {
  ReluCore core;
  std::vector<double> loss_trace;  // per epoch, empirical denoising risk
  long n_used = 0;                 // samples kept after truncation
};

// Minimizes the empirical denoising risk of (1/h) U f(U^T x, t) - x / h over
// rows of `samples`.
TrainResult train(const Mat& samples, const Frame& U, const TrainConfig& config,
                  const TruncationRegion* region = nullptr);
TrainResult train(const Mat& samples, const Frame& U, const TrainConfig& config, const ReluCore& init,
                  const TruncationRegion* region = nullptr);

// Density proportional to 1/h(t)^2 on [t0, T], by inverse CDF of
// F(t) = log(e^t - 1) - 1/(e^t - 1).
double inverse_h2_antiderivative(double t);
double sample_inverse_h2(double t0, double T, double u);

// Unbiased estimate of l_2(x0; s): nodes drawn with the quadrature weights.
double denoising_loss(const Vec& x0, const ScoreField& s, const DiffusionSchedule& sched, int n_t,
                      std::uint64_t seed);

// Per-field quantities 2j: denoising loss, 2j+1: score error, on shared draws.
MultiEstimate denoising_gap(const std::vector<ScoreField>& fields, const Reference& ref,
                            const DiffusionSchedule& sched, const McBudget& budget, std::uint64_t seed);

double e2_upper_bound(int D, const DiffusionSchedule& sched);
double e2_upper_bound(int D, double t0, double T);
// Time average of D/h - tr(Sigma_X^{-1}) for a Gaussian target.
double e2_exact_gaussian(const NoisyLowDimModel& model, const DiffusionSchedule& sched);

struct CoreMetrics {
  long n_params = 0;
  long n_nonzero = 0;
  double max_abs_param = 0.0;
  double gamma = 0.0;    // sampled sup ||d f / d z||
  double gamma_t = 0.0;  // sampled sup ||d f / d t||
  double max_output_norm = 0.0;
};

CoreMetrics measure_core(const ReluCore& core, const Mat& probes_z, const Vec& probes_t);

nlohmann::json to_json(const ReluCore& core, const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
ReluCore core_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace reuse
