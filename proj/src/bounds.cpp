#include "reuse/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "reuse/error.hpp"
#include "reuse/risk.hpp"
#include "reuse/rng.hpp"

namespace reuse {

namespace {

constexpr double kZeroSnap = 1e-12;

double op_norm_symmetric(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

std::pair<double, double> extreme_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

BoundPart assemble(std::string kind, const DiffusionSchedule& sched, std::vector<TermSeries> terms, bool estimated) {
  BoundPart part;
  part.kind = std::move(kind);
  part.estimated = estimated;
  part.total_per_node.assign(sched.nodes().size(), 0.0);
  for (auto& term : terms) {
    term.average = average_node_values(sched, term.per_node);
    for (std::size_t k = 0; k < term.per_node.size(); ++k) part.total_per_node[k] += term.per_node[k];
  }
  part.total = average_node_values(sched, part.total_per_node);
  part.terms = std::move(terms);
  return part;
}

void check_dims(const NoisyLowDimModel& target, const Frame& V1) {
  if (V1.ambient_dim() != target.ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "frozen projector and target differ in ambient dimension");
  }
}

// sigma^4 alpha^4 / (h^2 h_tilde)
double noise_coefficient(const ScheduleValues& sv, double sigma) {
  const double s2 = sigma * sigma;
  const double a2 = sv.alpha * sv.alpha;
  return s2 * s2 * a2 * a2 / (sv.h * sv.h * sv.h_tilde);
}

}  // namespace

const TermSeries& BoundPart::term(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "no bound term named '" + name + "'");
}

GMoments g_moments(const NoisyLowDimModel& model, double t, const MomentOptions& opts) {
  const ScheduleValues sv = schedule_eval(t, model.sigma);
  const auto& z = model.latent;
  const Eigen::Index d = z.dim();
  const Mat I = Mat::Identity(d, d);
  GMoments out;
  out.M_Y = Mat::Zero(d, d);
  for (std::size_t k = 0; k < z.components().size(); ++k) {
    const auto& c = z.components()[k];
    const Vec mean = sv.alpha * c.mean;
    out.M_Y += z.weights()[k] * (sv.alpha * sv.alpha * c.cov + sv.h_tilde * I + mean * mean.transpose());
  }

  if (z.is_gaussian()) {
    const AffineMap g = gaussian_g_affine(model, t);
    const auto& c = z.components().front();
    const Mat K = sv.alpha * sv.alpha * c.cov + sv.h_tilde * I;
    const Vec mean_g = g.C * (sv.alpha * c.mean) + g.b;
    out.M_g = g.C * K * g.C.transpose() + mean_g * mean_g.transpose();
    out.M_g = 0.5 * (out.M_g + out.M_g.transpose());
    std::tie(out.mu_min, out.lambda_max) = extreme_eigenvalues(out.M_g);
    out.L_g = op_norm_symmetric(g.C);
    return out;
  }

  // Mixture latent: Y_t = alpha z + sqrt(h_tilde) xi sampled directly.
  const ModelSlice slice(model, t);
  const int nb = opts.n_batches;
  const long n = opts.n_mc;
  out.estimated = true;
  out.M_g = Mat::Zero(d, d);
  std::vector<double> batch_min, batch_max;
  Philox rng(derive_seed(opts.seed, "g_moments"), static_cast<std::uint64_t>(std::llround(t * 1e9)));
  const double sqrt_ht = std::sqrt(sv.h_tilde);
  long probes = 0;
  for (int b = 0; b < nb; ++b) {
    const long count = n / nb + (b < n % nb ? 1 : 0);
    Mat Mb = Mat::Zero(d, d);
    for (long i = 0; i < count; ++i) {
      const Vec y = sv.alpha * z.sample(rng) + sqrt_ht * rng.normal_vector(d);
      const Vec gy = slice.g(y);
      Mb.noalias() += gy * gy.transpose();
      if (probes < opts.n_lipschitz_probes) {
        out.L_g = std::max(out.L_g, op_norm_symmetric(slice.g_jacobian(y)));
        ++probes;
      }
    }
    out.M_g += Mb;
    const auto [lo, hi] = extreme_eigenvalues(Mb / static_cast<double>(count));
    batch_min.push_back(lo);
    batch_max.push_back(hi);
  }
  out.M_g /= static_cast<double>(n);
  out.M_g = 0.5 * (out.M_g + out.M_g.transpose());
  std::tie(out.mu_min, out.lambda_max) = extreme_eigenvalues(out.M_g);
  auto se = [nb](const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) m += x;
    m /= nb;
    double var = 0.0;
    for (const double x : v) var += (x - m) * (x - m);
    return std::sqrt(var / (nb - 1.0) / nb);
  };
  out.mu_min_stderr = se(batch_min);
  out.lambda_max_stderr = se(batch_max);
  return out;
}

BoundPart frozen_lower_bound(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                             const MomentOptions& opts) {
  check_dims(target, V1);
  const SubspaceReport rep = subspace_report(V1, target.frame);
  TermSeries signal{"signal", {}, 0.0};
  TermSeries noise{"ambient_noise", {}, 0.0};
  for (const double t : sched.nodes()) {
    const ScheduleValues sv = schedule_eval(t, target.sigma);
    const GMoments mom = g_moments(target, t, opts);
    signal.per_node.push_back(std::max(mom.mu_min, 0.0) / (sv.h * sv.h) * rep.residual_V_of_A);
    noise.per_node.push_back(noise_coefficient(sv, target.sigma) * rep.perp_trace);
  }
  return assemble("lower_bound", sched, {signal, noise}, !target.latent.is_gaussian());
}

BoundPart frozen_upper_bound(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                             const MomentOptions& opts) {
  check_dims(target, V1);
  const SubspaceReport rep = subspace_report(V1, target.frame);
  const auto d1 = static_cast<int>(V1.latent_dim());
  const auto d2 = static_cast<int>(target.latent_dim());
  const auto D = static_cast<double>(target.ambient_dim());
  const bool wide = d1 >= d2;
  if (wide && rep.B_rank < d2) {
    throw Error(ErrorCode::RankConditionViolated, "branch d1>=d2 needs B = V1^T A2 of full column rank");
  }
  if (!wide && rep.B_rank < d1) {
    throw Error(ErrorCode::RankConditionViolated, "branch d1<d2 needs B = V1^T A2 of full row rank");
  }
  for (std::size_t j = 0; j < rep.cosines.size(); ++j) {
    if (rep.cosines[j] < 1e-4) {
      std::ostringstream os;
      os << "principal angle " << rep.angles[j] << " has cos < 1e-4 (tan^2 > 1e8)";
      throw Error(ErrorCode::IllConditioned, os.str());
    }
  }
  double sin2_sum = 0.0;
  for (const double s : rep.sines) sin2_sum += s * s;
  const double angle_term = wide ? sin2_sum : static_cast<double>(d2) - rep.cos2_sum;
  const double B_op2 = rep.B_opnorm * rep.B_opnorm;
  const Mat info_proj = Mat::Identity(d2, d2) - rep.B_pinv * rep.B;
  const double noise_trace = D + d1 - d2 - rep.cos2_sum;

  TermSeries signal{"signal", {}, 0.0};
  TermSeries stability{"stability", {}, 0.0};
  TermSeries info{"information_loss", {}, 0.0};
  TermSeries noise{"ambient_noise", {}, 0.0};
  for (const double t : sched.nodes()) {
    const ScheduleValues sv = schedule_eval(t, target.sigma);
    const GMoments mom = g_moments(target, t, opts);
    const double h2 = sv.h * sv.h;
    const double Lg2 = mom.L_g * mom.L_g;
    signal.per_node.push_back(mom.lambda_max / h2 * angle_term);
    stability.per_node.push_back(2.0 * B_op2 * sv.h_tilde * Lg2 / h2 * rep.tan2_sum);
    info.per_node.push_back(wide ? 0.0 : 2.0 * B_op2 * Lg2 / h2 * (info_proj * mom.M_Y).trace());
    noise.per_node.push_back(noise_coefficient(sv, target.sigma) * noise_trace);
  }
  std::vector<TermSeries> terms{signal, stability};
  if (!wide) terms.push_back(info);
  terms.push_back(noise);
  return assemble("upper_bound", sched, std::move(terms), !target.latent.is_gaussian());
}

namespace {

struct AffineG {
  Mat Q;
  Vec q;
  Vec mean_x;
  Mat cov_x;
  ScheduleValues sv;
};

// G_{2,t}(x) = Q x + q and the Gaussian law of X_t.
AffineG affine_G(const NoisyLowDimModel& target, double t) {
  const ScheduleValues sv = schedule_eval(t, target.sigma);
  const AffineMap g = gaussian_g_affine(target, t);
  const Mat& A = target.frame.data();
  const Eigen::Index D = target.ambient_dim();
  const Mat P_perp = Mat::Identity(D, D) - A * A.transpose();
  const auto params = ambient_gaussian_params(target, t);
  return {A * g.C * A.transpose() + sv.rho * P_perp, A * g.b, params.front().mean, params.front().cov, sv};
}

}  // namespace

BoundPart exact_structural_oracle(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched) {
  check_dims(target, V1);
  if (!target.latent.is_gaussian()) {
    throw Error(ErrorCode::NotGaussian, "the exact structural oracle needs a Gaussian target latent");
  }
  const Mat& V = V1.data();
  const Mat PV_perp = V1.complement_projector();
  TermSeries outside{"outside_span", {}, 0.0};
  TermSeries inside{"conditional_residual", {}, 0.0};
  for (const double t : sched.nodes()) {
    const AffineG a = affine_G(target, t);
    const double h2 = a.sv.h * a.sv.h;
    const Vec mean_g = a.Q * a.mean_x + a.q;
    const Mat cov_g = a.Q * a.cov_x * a.Q.transpose();
    const double out_term = (PV_perp * cov_g).trace() + (PV_perp * mean_g).squaredNorm();
    // Residual covariance of V^T G given Z = V^T X.
    const Mat cross = V.transpose() * a.Q * a.cov_x * V;  // Cov(V^T G, Z)
    const Mat zz = V.transpose() * a.cov_x * V;
    const Mat explained = cross * Eigen::LLT<Mat>(zz).solve(cross.transpose());
    const double in_term = (V.transpose() * cov_g * V - explained).trace();
    outside.per_node.push_back(std::max(out_term, 0.0) / h2);
    inside.per_node.push_back(std::max(in_term, 0.0) / h2);
  }
  return assemble("oracle", sched, {outside, inside}, false);
}

RiskEstimate linear_regression_oracle(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                                      long n_samples, int n_batches, std::uint64_t seed) {
  check_dims(target, V1);
  const Mat x0 = sample_data(target, n_samples, derive_seed(seed, "x0"));
  const Mat& V = V1.data();
  const Eigen::Index D = target.ambient_dim();
  const Eigen::Index d1 = V1.latent_dim();
  const Mat PV_perp = V1.complement_projector();
  const auto& nodes = sched.nodes();
  const int nn = static_cast<int>(nodes.size());
  Mat batch_sums = Mat::Zero(n_batches, nn);
  std::vector<long> batch_of(static_cast<std::size_t>(n_samples));
  std::vector<long> batch_count(static_cast<std::size_t>(n_batches), 0);
  for (long i = 0; i < n_samples; ++i) {
    batch_of[i] = i * n_batches / n_samples;
    ++batch_count[batch_of[i]];
  }
  RiskEstimate est;
  est.n_samples = n_samples;
  est.seed = seed;
  for (int k = 0; k < nn; ++k) {
    const double t = nodes[k];
    const ModelSlice slice(target, t);
    const ScheduleValues& sv = slice.sched();
    Philox rng(derive_seed(seed, "noise"), static_cast<std::uint64_t>(k));
    Mat G(n_samples, D);
    Mat design(n_samples, d1 + 1);
    for (long i = 0; i < n_samples; ++i) {
      Vec xt(D);
      for (Eigen::Index c = 0; c < D; ++c) xt(c) = sv.alpha * x0(i, c) + std::sqrt(sv.h) * rng.normal();
      G.row(i) = slice.G(xt).transpose();
      design(i, 0) = 1.0;
      design.row(i).tail(d1) = (V.transpose() * xt).transpose();
    }
    const Mat target_in = G * V;  // rows: (V^T G)^T
    const Mat coef = (design.transpose() * design).ldlt().solve(design.transpose() * target_in);
    const Mat resid_in = target_in - design * coef;
    const Mat out = G * PV_perp;
    for (long i = 0; i < n_samples; ++i) {
      batch_sums(batch_of[i], k) += (resid_in.row(i).squaredNorm() + out.row(i).squaredNorm()) / (sv.h * sv.h);
    }
  }
  est.per_node.assign(static_cast<std::size_t>(nn), 0.0);
  std::vector<double> batch_values;
  for (int b = 0; b < n_batches; ++b) {
    std::vector<double> node(static_cast<std::size_t>(nn));
    for (int k = 0; k < nn; ++k) {
      node[k] = batch_sums(b, k) / static_cast<double>(batch_count[b]);
      est.per_node[k] += batch_sums(b, k) / static_cast<double>(n_samples);
    }
    batch_values.push_back(average_node_values(sched, node));
  }
  est.value = average_node_values(sched, est.per_node);
  double m = 0.0;
  for (const double v : batch_values) m += v;
  m /= n_batches;
  double var = 0.0;
  for (const double v : batch_values) var += (v - m) * (v - m);
  est.stderr_ = std::sqrt(var / (n_batches - 1.0) / n_batches);
  return est;
}

BoundReport frozen_bound_report(const NoisyLowDimModel& target, const Frame& V1, const DiffusionSchedule& sched,
                                const MomentOptions& opts) {
  const SubspaceReport rep = subspace_report(V1, target.frame);
  BoundReport out;
  out.nodes = sched.nodes();
  out.angles = rep.angles;
  out.tan2_excluded = rep.tan2_excluded;
  out.branch = V1.latent_dim() >= target.latent_dim() ? "d1>=d2" : "d1<d2";
  out.lower = frozen_lower_bound(target, V1, sched, opts);
  try {
    out.upper = frozen_upper_bound(target, V1, sched, opts);
  } catch (const Error& e) {
    out.upper_status = std::string(to_string(e.code()));
  }
  if (target.latent.is_gaussian()) {
    out.oracle = exact_structural_oracle(target, V1, sched);
  } else {
    out.oracle_status = "NotGaussian";
  }
  const auto perp_dim = static_cast<double>(target.ambient_dim() - target.latent_dim());
  for (const double t : sched.nodes()) {
    const ScheduleValues sv = schedule_eval(t, target.sigma);
    const double energy = g_moments(target, t, opts).M_g.trace() + sv.rho * sv.rho * perp_dim * sv.h_tilde;
    out.scale.push_back(energy / (sv.h * sv.h));
  }
  return out;
}

bool sandwich_holds(const BoundReport& r, double rtol) {
  if (!r.oracle) return true;
  for (std::size_t k = 0; k < r.nodes.size(); ++k) {
    const double mid = r.oracle->total_per_node[k];
    double ref = std::max(std::abs(mid), k < r.scale.size() ? r.scale[k] : 0.0);
    if (r.lower) ref = std::max(ref, std::abs(r.lower->total_per_node[k]));
    if (r.upper) ref = std::max(ref, std::abs(r.upper->total_per_node[k]));
    const double tol = rtol * ref;
    if (r.lower && r.lower->total_per_node[k] > mid + tol) return false;
    if (r.upper && mid > r.upper->total_per_node[k] + tol) return false;
  }
  return true;
}

MixedWeights mixed_weights(const NoisyLowDimModel& model, const DiffusionSchedule& sched, const MomentOptions& opts) {
  MixedWeights w;
  w.estimated = !model.latent.is_gaussian();
  w.c_bar = time_average(sched, [&](double t) {
              const ScheduleValues sv = schedule_eval(t, model.sigma);
              return g_moments(model, t, opts).lambda_max / (sv.h * sv.h);
            }).value;
  w.n_bar = time_average(sched, [&](double t) {
              return noise_coefficient(schedule_eval(t, model.sigma), model.sigma);
            }).value;
  return w;
}

std::vector<double> principal_angle_spectrum(const Frame& A1, const Frame& A2, double a, double b) {
  const SubspaceReport rep = subspace_report(A1, A2);
  const Eigen::Index d1 = A1.latent_dim();
  const Eigen::Index d2 = A2.latent_dim();
  std::vector<double> eig;
  for (const double c : rep.cosines) {
    const double disc = std::sqrt((a - b) * (a - b) + 4.0 * a * b * c * c);
    eig.push_back(0.5 * (a + b) + 0.5 * disc);
    eig.push_back(0.5 * (a + b) - 0.5 * disc);
  }
  for (Eigen::Index j = 0; j < d1 - d2; ++j) eig.push_back(a);
  for (Eigen::Index j = 0; j < d2 - d1; ++j) eig.push_back(b);
  const auto D = static_cast<std::size_t>(A1.ambient_dim());
  while (eig.size() < D) eig.push_back(0.0);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  // When d1 + d2 > D the surplus entries are the lambda^- of zero angles.
  eig.resize(D);
  return eig;
}

MixedProjectorSolution solve_mixed_projector(const Frame& A1, const Frame& A2, std::array<double, 2> weights, int k) {
  if (A1.ambient_dim() != A2.ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "component frames differ in ambient dimension");
  }
  const auto D = static_cast<int>(A1.ambient_dim());
  const int kmin = static_cast<int>(std::max(A1.latent_dim(), A2.latent_dim()));
  if (k < kmin || k > D) {
    std::ostringstream os;
    os << "k = " << k << " outside [" << kmin << ", " << D << "]";
    throw Error(ErrorCode::KOutOfRange, os.str());
  }
  Mat M = weights[0] * A1.projector() + weights[1] * A2.projector();
  M = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  const Vec vals = es.eigenvalues().reverse();
  const Mat vecs = es.eigenvectors().rowwise().reverse();
  std::vector<double> spectrum(vals.data(), vals.data() + vals.size());
  // Eigenvalues at round-off level count as zero so containment gives 0.
  const double floor = kZeroSnap * std::max(1.0, spectrum.front());
  double residual = 0.0;
  for (int j = k; j < D; ++j) residual += spectrum[j] > floor ? spectrum[j] : 0.0;
  MixedProjectorSolution sol{M, spectrum, make_frame(vecs.leftCols(k)), k, residual, weights, {}, 0.0};
  sol.closed_form_spectrum = principal_angle_spectrum(A1, A2, weights[0], weights[1]);
  for (int j = 0; j < D; ++j) {
    sol.closed_form_error = std::max(sol.closed_form_error, std::abs(spectrum[j] - sol.closed_form_spectrum[j]));
  }
  return sol;
}

double gamma_residual(const Frame& W, const Frame& A1, const Frame& A2, std::array<double, 2> weights) {
  if (W.ambient_dim() != A1.ambient_dim() || W.ambient_dim() != A2.ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "projector and component frames differ in ambient dimension");
  }
  auto lost = [&W](const Frame& A) {
    const Mat r = A.data() - W.data() * (W.data().transpose() * A.data());
    return r.unaryExpr([](double v) { return std::abs(v) < kZeroSnap ? 0.0 : v; }).squaredNorm();
  };
  return weights[0] * lost(A1) + weights[1] * lost(A2);
}

PenaltyTerms mixed_penalty_terms(const MixtureModel& mix, const Frame& U, const DiffusionSchedule& sched,
                                 const McBudget& budget, std::uint64_t seed) {
  const MixedComparator comp = mixed_comparator(mix, U);
  const Mat& Um = U.data();
  PenaltyTerms out{};
  for (int i = 0; i < 2; ++i) {
    const NoisyLowDimModel& model = mix.components[i];
    struct Ctx {
      std::shared_ptr<ModelSlice> slice;
      CoreMap::Evaluator psi;
    };
    auto est = sweep_forward(
        Reference{model}, sched, 1, budget, derive_seed(seed, i == 0 ? "reconstruction_1" : "reconstruction_2"),
        [&](double t) { return Ctx{std::make_shared<ModelSlice>(model, t), comp.psi[i].at(t)}; },
        [&Um](int k, double, const ScheduleValues& sv, const Vec&, const Vec& xt, const Ctx& ctx, Mat& sums) {
          const Vec z = Um.transpose() * xt;
          sums(0, k) += (ctx.psi(z) - Um.transpose() * ctx.slice->G(xt)).squaredNorm() / (sv.h * sv.h);
        });
    out.reconstruction[i] = est.quantities.front();
  }
  struct MixCtx {
    std::shared_ptr<MixtureSlice> full;
    std::shared_ptr<ProjectedMixture> proj;
    CoreMap::Evaluator psi1, psi2;
  };
  auto est = sweep_forward(
      Reference{mix}, sched, 1, budget, derive_seed(seed, "posterior"),
      [&](double t) {
        return MixCtx{std::make_shared<MixtureSlice>(mix, t), std::make_shared<ProjectedMixture>(mix, U, t),
                      comp.psi[0].at(t), comp.psi[1].at(t)};
      },
      [&Um](int k, double, const ScheduleValues& sv, const Vec&, const Vec& xt, const MixCtx& ctx, Mat& sums) {
        const Vec z = Um.transpose() * xt;
        const double gap = ctx.proj->posterior(z)[0] - ctx.full->posterior(xt)[0];
        if (gap == 0.0) return;
        sums(0, k) += gap * gap * (ctx.psi1(z) - ctx.psi2(z)).squaredNorm() / (sv.h * sv.h);
      });
  out.posterior = est.quantities.front();
  return out;
}

MixedBound mixed_oracle_upper_bound(const MixtureModel& mix, const Frame& U, const std::array<MixedWeights, 2>& weights,
                                    const PenaltyTerms& penalties, double eta, double approx_term,
                                    double approx_stderr) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  const auto& w = mix.omega;
  MixedBound b;
  b.eta = eta;
  b.gamma = gamma_residual(U, mix.components[0].frame, mix.components[1].frame,
                           {w[0] * weights[0].c_bar, w[1] * weights[1].c_bar});
  for (int i = 0; i < 2; ++i) {
    const SubspaceReport rep = subspace_report(U, mix.components[i].frame);
    b.noise += w[i] * weights[i].n_bar * rep.perp_trace;
    b.reconstruction += 2.0 * w[i] * penalties.reconstruction[i].value;
  }
  b.posterior = 2.0 * penalties.posterior.value;
  b.bracket = b.gamma + b.noise + b.reconstruction + b.posterior;
  b.approx = approx_term;
  b.value = (1.0 + eta) * b.bracket + (1.0 + 1.0 / eta) * approx_term;
  const double se_r1 = 2.0 * w[0] * penalties.reconstruction[0].stderr_;
  const double se_r2 = 2.0 * w[1] * penalties.reconstruction[1].stderr_;
  const double se_p = 2.0 * penalties.posterior.stderr_;
  const double se_bracket = std::sqrt(se_r1 * se_r1 + se_r2 * se_r2 + se_p * se_p);
  const double se_a = (1.0 + 1.0 / eta) * approx_stderr;
  b.stderr_ = std::sqrt(std::pow((1.0 + eta) * se_bracket, 2) + se_a * se_a);
  return b;
}

}  // namespace reuse
