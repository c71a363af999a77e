#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reuse/montecarlo.hpp"
#include "reuse/score.hpp"

namespace reuse {

struct GMoments {
  Mat M_g;  // E[g g^T]
  double mu_min = 0.0;
  double lambda_max = 0.0;
  Mat M_Y;  // E[Y Y^T]
  double L_g = 0.0;
  bool estimated = false;  // Monte Carlo (mixture latent) rather than closed form
  double mu_min_stderr = 0.0;
  double lambda_max_stderr = 0.0;
};

struct MomentOptions {
  long n_mc = 100000;
  int n_batches = 32;
  long n_lipschitz_probes = 2000;
  std::uint64_t seed = 0;
};

GMoments g_moments(const NoisyLowDimModel& model, double t, const MomentOptions& opts = {});

struct TermSeries {
  std::string name;
  std::vector<double> per_node;
  double average = 0.0;
};

// One evaluated bound: named additive terms over the time grid.
struct BoundPart {
  std::string kind;
  std::vector<TermSeries> terms;
  std::vector<double> total_per_node;
  double total = 0.0;
  bool estimated = false;

  const TermSeries& term(const std::string& name) const;
};

struct BoundReport {
  std::vector<double> nodes;
  std::vector<double> angles;
  std::string branch;  // "d1>=d2" or "d1<d2"
  bool tan2_excluded = false;
  std::optional<BoundPart> lower;
  std::optional<BoundPart> upper;
  std::string upper_status = "ok";  // or the error raised
  std::optional<BoundPart> oracle;
  std::string oracle_status = "ok";
  // Per-node E||G_t(X_t)||^2 / h^2. Every part is a share of this energy, so
  // it sets the scale for comparisons when the parts themselves vanish.
  std::vector<double> scale;
};

// lower <= oracle <= upper at every node, to rtol * max(|parts|, scale).
// Missing parts are skipped.
bool sandwich_holds(const BoundReport& r, double rtol = 1e-8);

BoundPart frozen_lower_bound(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                             const MomentOptions& opts = {});
BoundPart frozen_upper_bound(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                             const MomentOptions& opts = {});
// Best risk over the frozen structural class, exact for Gaussian latents.
BoundPart exact_structural_oracle(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched);

// Per-node conditional-expectation residual estimated by least squares of
// V1^T G on [1, V1^T X_t] over Monte Carlo draws. Equals the oracle for
// Gaussian latents; an upper estimate of it otherwise.
RiskEstimate linear_regression_oracle(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                                      long n_samples, int n_batches, std::uint64_t seed);

// Runs all three evaluators, recording (not throwing) upper/oracle errors.
BoundReport frozen_bound_report(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                                const MomentOptions& opts = {});

struct MixedWeights {
  double c_bar = 0.0;
  double n_bar = 0.0;
  bool estimated = false;
};

MixedWeights mixed_weights(const NoisyLowDimModel& model, const DiffusionSchedule& sched,
                           const MomentOptions& opts = {});

struct MixedProjectorSolution {
  Mat M_mix;
  std::vector<double> spectrum;  // descending
  Frame W_k;
  int k = 0;
  double residual = 0.0;
  std::array<double, 2> weights{};  // omega_i c_i
  std::vector<double> closed_form_spectrum;  // from principal angles, descending
  double closed_form_error = 0.0;            // max |numerical - closed form|
};

// Eigenvalues of a P_A1 + b P_A2 from the principal angles between A1 and
// A2, padded with zeros to the ambient dimension, descending.
std::vector<double> principal_angle_spectrum(const Frame& A1, const Frame& A2, double a, double b);

MixedProjectorSolution solve_mixed_projector(const Frame& A1, const Frame& A2, std::array<double, 2> weights, int k);

// Gamma_k(W) = sum_i w_i ||P_W^perp A_i||_F^2.
double gamma_residual(const Frame& W, const Frame& A1, const Frame& A2, std::array<double, 2> weights);

struct PenaltyTerms {
  std::array<RiskEstimate, 2> reconstruction;  // R_i(U)
  RiskEstimate posterior;                      // P(U)
};

PenaltyTerms mixed_penalty_terms(const MixtureModel& mix, const Frame& U, const DiffusionSchedule& sched,
                                 const McBudget& budget, std::uint64_t seed);

struct MixedBound {
  double gamma = 0.0;
  double noise = 0.0;           // sum_i omega_i nbar_i Tr(P_U^perp P_i^perp)
  double reconstruction = 0.0;  // 2 sum_i omega_i R_i
  double posterior = 0.0;       // 2 P
  double bracket = 0.0;
  double approx = 0.0;
  double eta = 1.0;
  double value = 0.0;
  double stderr_ = 0.0;  // propagated from the Monte Carlo terms
};

MixedBound mixed_oracle_upper_bound(const MixtureModel& mix, const Frame& U, const std::array<MixedWeights, 2>& weights,
                                    const PenaltyTerms& penalties, double eta, double approx_term,
                                    double approx_stderr = 0.0);

}  // namespace reuse
