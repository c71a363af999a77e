// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "reuse/bounds.hpp"
#include "reuse/experiment.hpp"
#include "reuse/risk.hpp"
#include "reuse/sampler.hpp"
#include "reuse/trainer.hpp"

using namespace reuse;

namespace {

const double kPi = std::acos(-1.0);

struct Outcome {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void criterion(int id, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < limit_s;
  const bool ok = o.ok && in_time;
  failures += !ok;
  std::printf("%s criterion %d: %s [%.2fs, limit %.0fs%s]\n", ok ? "PASS" : "FAIL", id, o.detail.c_str(), secs, limit_s,
              in_time ? "" : ", too slow");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Frame line2(double theta) {
  Mat v(2, 1);
  v << std::cos(theta), std::sin(theta);
  return make_frame(v);
}

NoisyLowDimModel std1() { return NoisyLowDimModel(axis_frame(2, 1), LatentDistribution::standard(1), 0.0); }

double lb_scale(const DiffusionSchedule& s, double theta) {
  return time_average(s, [theta](double t) {
           const ScheduleValues sv = schedule_eval(t);
           return std::pow(sv.alpha, 4) * std::pow(std::sin(theta), 2) / (sv.h * sv.h);
         }).value;
}

}  // namespace

int main() {
  criterion(1, 1.0, [] {
    Philox rng(101);
    double worst = 0.0, worst_balanced = 0.0, worst_multi = 0.0;
    for (int r = 0; r < 100; ++r) {
      const double a = 0.05 + 2.0 * rng.uniform(), b = 0.05 + 2.0 * rng.uniform(), phi = 0.5 * kPi * rng.uniform();
      const auto num = solve_mixed_projector(axis_frame(2, 1), line2(phi), {a, b}, 1).spectrum;
      const double disc = 0.5 * std::sqrt((a - b) * (a - b) + 4 * a * b * std::cos(phi) * std::cos(phi));
      worst = std::max({worst, std::abs(num[0] - ((a + b) / 2 + disc)), std::abs(num[1] - ((a + b) / 2 - disc))});
      const auto bal = solve_mixed_projector(axis_frame(2, 1), line2(phi), {0.5, 0.5}, 1).spectrum;
      worst_balanced = std::max({worst_balanced, std::abs(bal[0] - (1 + std::cos(phi)) / 2),
                                 std::abs(bal[1] - (1 - std::cos(phi)) / 2)});
      // several angles at once in a larger space
      const Frame A1 = haar_frame(7, 3, 5000 + r);
      const Frame A2 = rotate_frame(A1, {0.5 * kPi * rng.uniform(), 0.5 * kPi * rng.uniform(), 0.5 * kPi * rng.uniform()},
                                    6000 + r);
      worst_multi = std::max(worst_multi, solve_mixed_projector(A1, A2, {a, b}, 3).closed_form_error);
    }
    const double w = std::max({worst, worst_balanced, worst_multi});
    return Outcome{w <= 1e-10, fmt("max eigenvalue error %.2e (general %.1e, balanced %.1e)", w, worst, worst_balanced)};
  });

  criterion(2, 10.0, [] {
    const int D = 16, k = 5;
    const Frame A1 = haar_frame(D, 3, 201), A2 = haar_frame(D, 3, 202);
    const std::array<double, 2> w{0.6, 1.1};
    const MixedProjectorSolution sol = solve_mixed_projector(A1, A2, w, k);
    double tail = 0.0;
    for (std::size_t j = k; j < sol.spectrum.size(); ++j) tail += sol.spectrum[j];
    const double g = gamma_residual(sol.W_k, A1, A2, w);
    double best_random = 1e300;
    for (std::uint64_t i = 0; i < 10000; ++i) best_random = std::min(best_random, gamma_residual(haar_frame(D, k, 300000 + i), A1, A2, w));
    const bool ok = std::abs(g - tail) <= 1e-10 && best_random >= g - 1e-10;
    return Outcome{ok, fmt("Gamma(W_k)=%.12g, tail eigen sum %.12g, best of 1e4 random %.6g", g, tail, best_random)};
  });

  criterion(3, 60.0, [] {
    const DiffusionSchedule s(0.01, 1.0, 64);
    const std::vector<std::pair<int, int>> dims{{2, 1}, {8, 2}, {32, 3}};
    const std::vector<double> thetas{0.0, kPi / 12, kPi / 6, kPi / 4, kPi / 3, 5 * kPi / 12};
    int fixtures = 0, violations = 0, reg_fail = 0;
    double worst_z = 0.0;
    for (const auto& [D, d] : dims) {
      for (const double sigma : {0.0, 0.1, 0.5}) {
        for (const double theta : thetas) {
          Philox rng(static_cast<std::uint64_t>(D * 1000 + d), static_cast<std::uint64_t>(sigma * 10));
          Mat L(d, d);
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) L(i, j) = rng.normal();
          const NoisyLowDimModel target(haar_frame(D, d, 400 + D),
                                        LatentDistribution::gaussian(0.5 * rng.normal_vector(d), L * L.transpose() + 0.2 * Mat::Identity(d, d)),
                                        sigma);
          const Frame V1 = rotate_frame(target.frame, std::vector<double>(static_cast<std::size_t>(d), theta), 500 + D);
          const BoundReport r = frozen_bound_report(target, V1, s);
          ++fixtures;
          if (!r.lower || !r.oracle || !r.upper) {
            ++violations;
            continue;
          }
          violations += !sandwich_holds(r, 1e-8);
          if (theta == kPi / 4 && sigma == 0.1) {
            const DiffusionSchedule coarse(0.01, 1.0, 17);
            const double exact = exact_structural_oracle(target, V1, coarse).total;
            const RiskEstimate reg = linear_regression_oracle(target, V1, coarse, 100000, 32, 600 + D);
            const double z = std::abs(reg.value - exact) / reg.stderr_;
            worst_z = std::max(worst_z, z);
            reg_fail += z > 3.0;
          }
        }
      }
    }
    return Outcome{violations == 0 && reg_fail == 0,
                   fmt("%g fixtures, %g with a sandwich violation, regression oracle worst |z| = %.2f", fixtures, violations, worst_z)};
  });

  criterion(4, 10.0, [] {
    const auto z = LatentDistribution::mixture({0.4, 0.6}, {{Vec::Constant(2, -1.0), Mat::Identity(2, 2) * 0.5},
                                                           {Vec::Constant(2, 1.0), Mat::Identity(2, 2)}});
    const NoisyLowDimModel mix_latent(haar_frame(5, 2, 701), z, 0.2);
    Mat S(2, 2);
    S << 1.5, 0.4, 0.4, 0.7;
    const NoisyLowDimModel gauss(haar_frame(5, 2, 702), LatentDistribution::gaussian(Vec::Constant(2, 0.3), S), 0.1);
    Philox rng(703);
    double worst_ip = 0.0, worst_fd = 0.0;
    for (int r = 0; r < 1000; ++r) {
      const NoisyLowDimModel& m = r % 2 ? mix_latent : gauss;
      const double t = 0.01 + 0.99 * rng.uniform();
      Vec x = rng.normal_vector(5);
      x *= 5.0 * std::pow(rng.uniform(), 0.2) / x.norm();
      const AmbientScore s = ambient_score(m, x, t);
      worst_ip = std::max(worst_ip, std::abs(s.on_support.dot(s.orthogonal)));
      const double e = 1e-5;
      for (int i = 0; i < 5; ++i) {
        Vec a = x, b = x;
        a(i) += e;
        b(i) -= e;
        const double fd = (log_density(m, a, t) - log_density(m, b, t)) / (2 * e);
        worst_fd = std::max(worst_fd, std::abs(fd - s.total(i)));
      }
    }
    return Outcome{worst_ip <= 1e-10 && worst_fd <= 1e-5,
                   fmt("max |<on, orth>| = %.2e, max |score - FD| = %.2e", worst_ip, worst_fd)};
  });

  criterion(5, 30.0, [] {
    const NoisyLowDimModel m(axis_frame(3, 1), LatentDistribution::standard(1), 0.1);
    const DiffusionSchedule s(0.01, 1.0, 32);
    McBudget b;
    b.n_samples = 40000;
    const ScoreField exact = analytic_score(m);
    const ScoreField null_core("neg_x_over_h", 3, [](double t) {
      const double h = schedule_eval(t).h;
      return [h](const Vec& x) -> Vec { return -x / h; };
    });
    const ScoreField comp = frozen_comparator(m, make_frame((Mat(3, 1) << 0.8, 0.6, 0.0).finished())).score;
    const MultiEstimate est = denoising_gap({exact, null_core, comp}, Reference{m}, s, b, 801);
    const int nb = static_cast<int>(est.batch_values.cols());
    double worst_z = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        std::vector<double> d(static_cast<std::size_t>(nb));
        for (int k = 0; k < nb; ++k)
          d[k] = (est.batch_values(2 * i, k) - est.batch_values(2 * i + 1, k)) -
                 (est.batch_values(2 * j, k) - est.batch_values(2 * j + 1, k));
        const ScalarEstimate e = batch_means(d, nb);
        worst_z = std::max(worst_z, std::abs(e.mean) / std::max(e.stderr_, 1e-300));
      }
    }
    const double gap = est.quantities[0].value - est.quantities[1].value;
    const double bound = e2_upper_bound(3, s);
    const bool ok = worst_z <= 4.0 && gap <= bound + 3.0 * est.quantities[0].stderr_;
    return Outcome{ok, fmt("worst pairwise gap |z| = %.2f, E2 gap %.4f <= bound %.4f", worst_z, gap, bound)};
  });

  criterion(6, 300.0, [] {
    const auto m = std1();
    const DiffusionSchedule s(0.01, 1.0, 64);
    TrainConfig cfg;
    cfg.n_epochs = 60;
    cfg.batch_size = 64;
    cfg.step_size = 2e-3;
    cfg.seed = 901;
    cfg.t0 = s.t0();
    cfg.T = s.T();
    const Mat X = sample_data(m, 4096, 902);
    McBudget b;
    b.n_samples = 20000;
    auto trained_risk = [&](const Frame& V1, std::uint64_t seed) {
      const TrainResult tr = train(X, V1, cfg);
      return estimate_risk(projected_score(V1, as_core_map(tr.core), "trained"), Reference{m}, s, b, seed);
    };
    const double theta = kPi / 3;
    const double lb = frozen_lower_bound(m, line2(theta), s).total;
    const RiskEstimate mis = trained_risk(line2(theta), 903);
    const RiskEstimate ali = trained_risk(line2(0.0), 904);
    const bool ok = mis.value >= lb - 3.0 * mis.stderr_ && ali.value <= 0.05 * lb_scale(s, theta);
    return Outcome{ok, fmt("misaligned %.3f vs LB %.3f; aligned %.4f", mis.value, lb, ali.value) +
                           fmt(" vs 0.05*LB %.3f", 0.05 * lb)};
  });

  criterion(7, 300.0, [] {
    const ExperimentConfig cfg = make_config(json{{"preset", "mixed-vs-frozen"}});
    const ExperimentReport rep = run(cfg);
    const json& r = rep.results;
    const double gamma_wk = r["projectors"]["W_k"]["gamma"]["value"].get<double>();
    const double gamma_v1 = r["projectors"]["V1"]["gamma"]["value"].get<double>();
    const bool contained = r["k"].get<int>() >= r["span_dim"].get<int>();
    const MixtureModel mix = mixture_from_json(r["mixture"]);
    const double leak = (mix.components[0].frame.complement_projector() * mix.components[1].frame.data()).squaredNorm();
    const json& bw = r["projectors"]["W_k"]["bound"];
    const json& bv = r["projectors"]["V1"]["bound"];
    const bool beats = r["mixed_beats_frozen_3se"].get<bool>();
    // containment on its own: sweep k upward for a random pair
    const Frame A1 = haar_frame(6, 2, 1001), A2 = haar_frame(6, 2, 1002);
    bool exact_zero = true;
    for (int k = 4; k <= 6; ++k)
      exact_zero &= gamma_residual(solve_mixed_projector(A1, A2, {0.3, 0.7}, k).W_k, A1, A2, {0.3, 0.7}) == 0.0;
    const bool ok = contained && gamma_wk == 0.0 && exact_zero && leak > 0.0 && beats;
    return Outcome{ok, fmt("Gamma(W_k)=%g, Gamma(V1)=%.4g, leak %.3f; ", gamma_wk, gamma_v1, leak) +
                           fmt("bound W_k %.4g +- %.2g vs V1 %.4g", bw["value"].get<double>(), bw["stderr"].get<double>(),
                               bv["value"].get<double>())};
  });

  criterion(8, 1.0, [] {
    const ReluCore core = ReluCore::with_hidden(2, 3, 16, 100.0, 50.0, 1101);
    Philox rng(1102);
    const int n = 8;
    Mat Z(2, n), Y(2, n);
    Vec t(n), w(n);
    for (int i = 0; i < n; ++i) {
      Z.col(i) = rng.normal_vector(2);
      Y.col(i) = rng.normal_vector(2);
      t(i) = 0.01 + rng.uniform();
      w(i) = 1.0;
    }
    const GradCheck gc = gradient_check(core, Z, t, Y, w, 20, 1e-5, 1103);
    return Outcome{gc.max_rel_error <= 1e-4 && gc.checked.size() == 20,
                   fmt("max relative error %.2e over %g parameters", gc.max_rel_error, static_cast<double>(gc.checked.size()))};
  });

  criterion(9, 30.0, [] {
    SamplerConfig c;
    c.n_steps = 200;
    c.seed = 1201;
    const long n = 10000;
    const Mat X = reverse_sample(analytic_score(std1()), c, n);
    const Mat cen = X.rowwise() - X.colwise().mean();
    const Mat C = cen.transpose() * cen / static_cast<double>(n - 1);
    const double h0 = schedule_eval(c.t0).h;
    const double z11 = std::abs(C(0, 0) - 1.0) / std::sqrt(2.0 / n);
    const double z22 = std::abs(C(1, 1) - h0) / (h0 * std::sqrt(2.0 / n));
    const double z12 = std::abs(C(0, 1)) / std::sqrt(h0 / n);
    const bool ok = z11 <= 5 && z22 <= 5 && z12 <= 5;
    return Outcome{ok, fmt("var1 %.4f (|z| %.1f), ", C(0, 0), z11) +
                           fmt("var2 %.5f vs h(t0) %.5f (|z| %.1f), ", C(1, 1), h0, z22) + fmt("cov |z| %.1f", z12)};
  });

  criterion(10, 600.0, [] {
    int differing = 0;
    for (const auto& p : preset_names()) {
      json user = {{"preset", p}};
      if (p == "angle-sweep") user["trainer"] = {{"enabled", true}, {"n_epochs", 5}, {"n_train", 1024}};
      const ExperimentConfig cfg = make_config(user);
      differing += dump_canonical(run(cfg).to_json()) != dump_canonical(run(cfg).to_json());
    }
    return Outcome{differing == 0, fmt("%g of %g presets differ between identical runs", differing,
                                       static_cast<double>(preset_names().size()))};
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
