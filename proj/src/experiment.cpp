#include "reuse/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "reuse/bounds.hpp"
#include "reuse/error.hpp"
#include "reuse/risk.hpp"
#include "reuse/rng.hpp"
#include "reuse/sampler.hpp"
#include "reuse/schema.hpp"
#include "reuse/trainer.hpp"

namespace reuse {

const char* embedded_config_schema();

namespace {

constexpr double kPi = 3.14159265358979323846;

json common_defaults() {
  return {{"seed", 20240601},
          {"schedule", {{"t0", 0.01}, {"T", 1.0}, {"n_time_nodes", 64}}},
          {"mc", {{"n_samples", 20000}, {"n_batches", 32}, {"n_workers", 1}}},
          {"moments", {{"n_mc", 20000}, {"n_batches", 32}, {"n_lipschitz_probes", 500}}},
          {"trainer",
           {{"enabled", false},
            {"n_train", 4096},
            {"n_epochs", 60},
            {"batch_size", 64},
            {"step_size", 2e-3},
            {"momentum", 0.9},
            {"n_time_samples", 1},
            {"truncation", false},
            {"K", -1.0},
            {"kappa", 50.0},
            {"n_hidden", 3},
            {"width", 64},
            {"time_sampling", "inverse_h2"}}}};
}

json model_def(int D, int d, double sigma) {
  return {{"D", D}, {"d", d}, {"sigma", sigma}, {"latent", {{"type", "standard"}}}, {"frame", {{"type", "axis"}}}};
}

std::vector<double> angle_ladder(int n) {
  std::vector<double> v;
  for (int i = 0; i <= n; ++i) v.push_back(kPi / 2.0 * i / n);
  return v;
}

json specific_defaults(const std::string& preset) {
  if (preset == "angle-sweep") {
    return {{"target", model_def(2, 1, 0.0)}, {"sweep", {{"thetas", angle_ladder(6)}}}};
  }
  if (preset == "dimension-sweep") {
    return {{"target", model_def(6, 2, 0.1)},
            {"projector", {{"type", "random"}}},
            {"sweep", {{"d1_values", {1, 2, 3, 4}}}}};
  }
  if (preset == "noise-sweep") {
    return {{"target", model_def(4, 1, 0.0)},
            {"projector", {{"type", "angled"}, {"angles", {kPi / 6.0}}}},
            {"sweep", {{"sigmas", {0.0, 0.05, 0.1, 0.2, 0.5}}}}};
  }
  if (preset == "mixed-vs-frozen") {
    return {{"source", model_def(3, 1, 0.1)},
            {"target", model_def(3, 1, 0.1)},
            {"mixed",
             {{"k", 2}, {"omega1", 0.5}, {"phi", kPi / 3.0}, {"c_mode", "c_bar"}, {"eta", 1.0}, {"approx", "zero"}}}};
  }
  if (preset == "containment-demo") {
    return {{"source", model_def(4, 1, 0.0)},
            {"target", model_def(4, 1, 0.0)},
            {"mixed", {{"k_values", {1, 2, 3, 4}}, {"omega1", 0.5}, {"phi", kPi / 4.0}, {"c_mode", "c_bar"}}}};
  }
  if (preset == "sampler-demo") {
    return {{"target", model_def(2, 1, 0.0)},
            {"projector", {{"type", "angled"}, {"angles", {kPi / 3.0}}}},
            {"sampler", {{"n_chains", 10000}, {"n_steps", 200}}}};
  }
  if (preset == "invariant-suite") {
    return {{"invariants", {{"n_points", 200}, {"n_frames", 2000}, {"n_triples", 100}}},
            {"mc", {{"n_samples", 4000}}}};
  }
  throw Error(ErrorCode::ConfigInvalid, "/preset: unknown preset '" + preset + "'");
}

// Seeds are derived by name from the root seed and recorded for the manifest.
struct Context {
  std::uint64_t root;
  DiffusionSchedule sched;
  McBudget budget;
  MomentOptions moments;
  json seeds = json::object();

  std::uint64_t seed(const std::string& name) {
    const std::uint64_t s = derive_seed(root, name);
    seeds[name] = s;
    return s;
  }
};

Context make_context(const ExperimentConfig& cfg) {
  const json& b = cfg.body;
  const json& s = b.at("schedule");
  const json& mc = b.at("mc");
  const json& mo = b.at("moments");
  Context c{cfg.seed,
            DiffusionSchedule(s.at("t0").get<double>(), s.at("T").get<double>(), s.at("n_time_nodes").get<int>()),
            {mc.at("n_samples").get<long>(), mc.at("n_batches").get<int>(), mc.at("n_workers").get<int>()},
            {mo.at("n_mc").get<long>(), mo.at("n_batches").get<int>(), mo.at("n_lipschitz_probes").get<long>(), 0}};
  c.moments.seed = c.seed("moments");
  return c;
}

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::ConfigInvalid, path + ": " + msg);
}

Vec vec_of(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat mat_of(const json& j, const std::string& path, Eigen::Index d) {
  if (j.size() != static_cast<std::size_t>(d)) config_error(path, "covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  Mat m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (j[i].size() != static_cast<std::size_t>(d)) config_error(path, "covariance row has the wrong length");
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

LatentDistribution latent_of(const json& j, int d, const std::string& path) {
  const std::string type = j.value("type", std::string("standard"));
  auto gaussian_part = [&](const json& c, const std::string& p) {
    Vec mean = c.contains("mean") ? vec_of(c.at("mean")) : Vec(Vec::Zero(d));
    if (mean.size() != d) config_error(p + "/mean", "length must equal d = " + std::to_string(d));
    Mat cov = c.contains("cov") ? mat_of(c.at("cov"), p + "/cov", d) : Mat(Mat::Identity(d, d));
    return std::make_pair(std::move(mean), std::move(cov));
  };
  if (type == "standard") return LatentDistribution::standard(d);
  if (type == "gaussian") {
    auto [m, c] = gaussian_part(j, path);
    return LatentDistribution::gaussian(std::move(m), std::move(c));
  }
  if (!j.contains("components") || !j.contains("weights")) config_error(path, "a mixture needs weights and components");
  std::vector<std::pair<Vec, Mat>> comps;
  for (std::size_t i = 0; i < j.at("components").size(); ++i) {
    comps.push_back(gaussian_part(j["components"][i], path + "/components/" + std::to_string(i)));
  }
  return LatentDistribution::mixture(j.at("weights").get<std::vector<double>>(), std::move(comps));
}

NoisyLowDimModel model_of(const json& j, const std::string& path, Context& c) {
  const int D = j.at("D").get<int>();
  const int d = j.at("d").get<int>();
  if (d > D) config_error(path + "/d", "latent dimension exceeds D");
  const json f = j.value("frame", json{{"type", "axis"}});
  Frame frame = axis_frame(D, d);
  if (f.value("type", std::string("axis")) == "haar") {
    frame = haar_frame(D, d, f.contains("seed") ? f["seed"].get<std::uint64_t>() : c.seed(path + "/frame"));
  } else {
    const int off = f.value("offset", 0);
    if (off + d > D) config_error(path + "/frame/offset", "axis frame runs past D");
    frame = axis_frame(D, d, off);
  }
  return NoisyLowDimModel(frame, latent_of(j.value("latent", json{{"type", "standard"}}), d, path + "/latent"),
                          j.at("sigma").get<double>());
}

Frame angled(const Frame& A, std::vector<double> angles, std::uint64_t seed) {
  if (std::all_of(angles.begin(), angles.end(), [](double a) { return a == 0.0; })) return A;
  return rotate_frame(A, angles, seed);
}

Frame uniform_angle_frame(const Frame& A, double theta, std::uint64_t seed) {
  const auto r = std::min(A.latent_dim(), A.ambient_dim() - A.latent_dim());
  if (r == 0 || theta == 0.0) return A;
  return rotate_frame(A, std::vector<double>(static_cast<std::size_t>(r), theta), seed);
}

Frame projector_of(const json& pj, const Frame& A, Context& c) {
  const std::string type = pj.value("type", std::string("aligned"));
  const std::uint64_t seed = pj.contains("seed") ? pj["seed"].get<std::uint64_t>() : c.seed("projector");
  if (type == "aligned") return A;
  if (type == "angled") {
    const auto angles = pj.value("angles", std::vector<double>{});
    if (angles.empty()) config_error("/projector/angles", "angled projector needs at least one angle");
    return angled(A, angles, seed);
  }
  const int dim = pj.value("dim", static_cast<int>(A.latent_dim()));
  if (dim > A.ambient_dim()) config_error("/projector/dim", "projector dimension exceeds D");
  return haar_frame(A.ambient_dim(), dim, seed);
}

TrainConfig train_config_of(const json& tj, const Context& c, std::uint64_t seed) {
  TrainConfig tc = train_config_from_json(tj);
  tc.t0 = c.sched.t0();
  tc.T = c.sched.T();
  tc.seed = tj.contains("seed") ? tj["seed"].get<std::uint64_t>() : seed;
  tc.validate();
  return tc;
}

json part_json(const BoundPart& p) {
  json terms = json::object();
  for (const auto& t : p.terms) {
    terms[t.name] = {{"average", t.average}, {"per_node", t.per_node}};
  }
  return {{"total", {{"value", p.total}, {"provenance", p.estimated ? "mc" : "analytic"}}},
          {"per_node", p.total_per_node},
          {"terms", terms}};
}

json report_json(const BoundReport& r) {
  json j = {{"angles", r.angles},
            {"branch", r.branch},
            {"tan2_excluded", r.tan2_excluded},
            {"upper_status", r.upper_status},
            {"oracle_status", r.oracle_status}};
  if (r.lower) j["lower_bound"] = part_json(*r.lower);
  if (r.upper) j["upper_bound"] = part_json(*r.upper);
  if (r.oracle) j["oracle"] = part_json(*r.oracle);
  return j;
}

void add_long_rows(Table& t, const std::string& point, const BoundReport& r) {
  auto emit = [&](const std::optional<BoundPart>& p) {
    if (!p) return;
    for (std::size_t k = 0; k < r.nodes.size(); ++k) {
      for (const auto& term : p->terms) {
        t.add_row({point, r.nodes[k], p->kind, term.name, term.per_node[k], Cell{}});
      }
      t.add_row({point, r.nodes[k], p->kind, std::string("total"), p->total_per_node[k], Cell{}});
    }
  };
  emit(r.lower);
  emit(r.oracle);
  emit(r.upper);
}

Table long_table(const std::string& key) { return Table{key, {"point", "t", "bound", "term", "value", "stderr"}, {}}; }


Cell opt_total(const std::optional<BoundPart>& p) { return p ? Cell{p->total} : Cell{}; }

struct TrainedField {
  ReluCore core;
  ScoreField score;
  std::vector<double> trace;
  long n_used = 0;
};

TrainedField train_field(const Mat& samples, const Frame& U, const json& tj, Context& c, const std::string& name) {
  const TrainConfig tc = train_config_of(tj, c, c.seed(name + "/train"));
  TrainResult res = train(samples, U, tc);
  ScoreField s = projected_score(U, as_core_map(res.core), "trained");
  return {std::move(res.core), std::move(s), std::move(res.loss_trace), res.n_used};
}

// ---------------------------------------------------------------- presets

void run_angle_sweep(const json& cfg, Context& c, ExperimentReport& rep) {
  const NoisyLowDimModel target = model_of(cfg.at("target"), "/target", c);
  const json& tj = cfg.at("trainer");
  const bool do_train = tj.at("enabled").get<bool>();
  Table t{"angle_sweep",
          {"theta", "lower", "oracle", "upper", "upper_status", "sandwich", "comp_risk", "comp_risk_se", "trained_risk",
           "trained_risk_se", "final_train_loss"},
          {}};
  Table lg = long_table("angle_sweep_bounds");
  json points = json::array();
  Mat samples;
  if (do_train) samples = sample_data(target, tj.at("n_train").get<long>(), c.seed("angle-sweep/train_data"));
  const auto thetas = cfg.at("sweep").at("thetas").get<std::vector<double>>();
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const std::string key = "angle-sweep/" + std::to_string(i);
    const Frame V1 = uniform_angle_frame(target.frame, thetas[i], c.seed(key + "/projector"));
    const BoundReport br = frozen_bound_report(target, V1, c.sched, c.moments);
    const bool ok = sandwich_holds(br);
    const FrozenComparator comp = frozen_comparator(target, V1);
    const RiskEstimate comp_risk = estimate_risk(comp.score, target, c.sched, c.budget, c.seed(key + "/comp_risk"));
    json p = {{"theta", thetas[i]},
              {"bounds", report_json(br)},
              {"sandwich", ok},
              {"outside_upper_bound_hypotheses", comp.outside_upper_bound_hypotheses},
              {"comparator_risk", mc_value(comp_risk)}};
    std::vector<Cell> row{thetas[i], opt_total(br.lower), opt_total(br.oracle), opt_total(br.upper), br.upper_status,
                          ok, comp_risk.value, comp_risk.stderr_};
    if (do_train) {
      const TrainedField tf = train_field(samples, V1, tj, c, key);
      const RiskEstimate tr = estimate_risk(tf.score, target, c.sched, c.budget, c.seed(key + "/trained_risk"));
      p["trained_risk"] = mc_value(tr);
      p["loss_trace"] = tf.trace;
      row.insert(row.end(), {tr.value, tr.stderr_, tf.trace.empty() ? Cell{} : Cell{tf.trace.back()}});
    } else {
      row.insert(row.end(), {Cell{}, Cell{}, Cell{}});
    }
    t.add_row(std::move(row));
    add_long_rows(lg, "theta=" + std::to_string(i), br);
    points.push_back(std::move(p));
  }
  rep.results["target"] = to_json(target);
  rep.results["points"] = std::move(points);
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(lg));
}

void run_dimension_sweep(const json& cfg, Context& c, ExperimentReport& rep) {
  const NoisyLowDimModel target = model_of(cfg.at("target"), "/target", c);
  const json pj = cfg.value("projector", json{{"type", "random"}});
  if (pj.value("type", std::string("random")) != "random") {
    config_error("/projector/type", "dimension-sweep draws random projectors of each d1");
  }
  Table t{"dimension_sweep", {"d1", "d2", "branch", "lower", "oracle", "upper", "upper_status", "sandwich"}, {}};
  Table lg = long_table("dimension_sweep_bounds");
  json points = json::array();
  for (const int d1 : cfg.at("sweep").at("d1_values").get<std::vector<int>>()) {
    if (d1 > target.ambient_dim()) config_error("/sweep/d1_values", "d1 exceeds D");
    const std::string key = "dimension-sweep/d1=" + std::to_string(d1);
    const std::uint64_t s = pj.contains("seed") ? derive_seed(pj["seed"].get<std::uint64_t>(), static_cast<std::uint64_t>(d1))
                                                : c.seed(key + "/projector");
    const Frame V1 = haar_frame(target.ambient_dim(), d1, s);
    const BoundReport br = frozen_bound_report(target, V1, c.sched, c.moments);
    const bool ok = sandwich_holds(br);
    t.add_row({static_cast<long long>(d1), static_cast<long long>(target.latent_dim()), br.branch, opt_total(br.lower),
               opt_total(br.oracle), opt_total(br.upper), br.upper_status, ok});
    add_long_rows(lg, "d1=" + std::to_string(d1), br);
    points.push_back({{"d1", d1}, {"bounds", report_json(br)}, {"sandwich", ok}});
  }
  rep.results["target"] = to_json(target);
  rep.results["points"] = std::move(points);
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(lg));
}

void run_noise_sweep(const json& cfg, Context& c, ExperimentReport& rep) {
  const NoisyLowDimModel base = model_of(cfg.at("target"), "/target", c);
  const Frame V1 = projector_of(cfg.value("projector", json::object()), base.frame, c);
  Table t{"noise_sweep",
          {"sigma", "lower_signal", "lower_noise", "lower", "oracle", "upper_signal", "upper_noise", "upper",
           "upper_status", "sandwich"},
          {}};
  Table lg = long_table("noise_sweep_bounds");
  json points = json::array();
  const auto sigmas = cfg.at("sweep").at("sigmas").get<std::vector<double>>();
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    const NoisyLowDimModel target(base.frame, base.latent, sigmas[i]);
    const BoundReport br = frozen_bound_report(target, V1, c.sched, c.moments);
    const bool ok = sandwich_holds(br);
    auto term = [](const std::optional<BoundPart>& p, const char* name) {
      return p ? Cell{p->term(name).average} : Cell{};
    };
    t.add_row({sigmas[i], term(br.lower, "signal"), term(br.lower, "ambient_noise"), opt_total(br.lower),
               opt_total(br.oracle), term(br.upper, "signal"), term(br.upper, "ambient_noise"), opt_total(br.upper),
               br.upper_status, ok});
    add_long_rows(lg, "sigma=" + std::to_string(i), br);
    points.push_back({{"sigma", sigmas[i]}, {"bounds", report_json(br)}, {"sandwich", ok}});
  }
  json frame;
  to_json(frame, V1);
  rep.results["projector"] = frame;
  rep.results["points"] = std::move(points);
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(lg));
}

struct MixedSetup {
  MixtureModel mix;
  std::array<MixedWeights, 2> weights;  // c_bar replaced by 1 in unit mode
  std::array<double, 2> solve_weights;
};

MixedSetup mixed_setup(const json& cfg, Context& c) {
  const json& mj = cfg.at("mixed");
  const NoisyLowDimModel source = model_of(cfg.at("source"), "/source", c);
  const NoisyLowDimModel target_def = model_of(cfg.at("target"), "/target", c);
  if (source.ambient_dim() != target_def.ambient_dim()) config_error("/target/D", "source and target must share D");
  if (source.latent_dim() != target_def.latent_dim()) config_error("/target/d", "source and target must share d");
  // The target frame is the source frame turned by phi.
  const Frame A2 = uniform_angle_frame(source.frame, mj.at("phi").get<double>(), c.seed("mixed/target_frame"));
  MixtureModel mix(mj.at("omega1").get<double>(), source,
                   NoisyLowDimModel(A2, target_def.latent, target_def.sigma));
  std::array<MixedWeights, 2> w{mixed_weights(mix.components[0], c.sched, c.moments),
                                mixed_weights(mix.components[1], c.sched, c.moments)};
  if (mj.at("c_mode").get<std::string>() == "unit") {
    w[0].c_bar = 1.0;
    w[1].c_bar = 1.0;
  }
  return {mix, w, {mix.omega[0] * w[0].c_bar, mix.omega[1] * w[1].c_bar}};
}

int span_dim(const Frame& A1, const Frame& A2) {
  Mat both(A1.ambient_dim(), A1.latent_dim() + A2.latent_dim());
  both << A1.data(), A2.data();
  int rank = 0;
  pseudo_inverse(both, kRankTol, &rank);
  return rank;
}

void run_mixed_vs_frozen(const json& cfg, Context& c, ExperimentReport& rep) {
  const MixedSetup ms = mixed_setup(cfg, c);
  const MixtureModel& mix = ms.mix;
  const json& mj = cfg.at("mixed");
  const json& tj = cfg.at("trainer");
  const bool do_train = tj.at("enabled").get<bool>();
  const bool measured = mj.at("approx").get<std::string>() == "measured";
  if (measured && !do_train) config_error("/mixed/approx", "measured approximation needs trainer.enabled");
  const double eta = mj.at("eta").get<double>();
  const int k = mj.at("k").get<int>();
  const MixedProjectorSolution sol = solve_mixed_projector(mix.components[0].frame, mix.components[1].frame,
                                                           ms.solve_weights, k);
  const Frame& V1 = mix.components[0].frame;
  Mat samples;
  if (do_train) samples = sample_mixture(mix, tj.at("n_train").get<long>(), c.seed("mixed/train_data")).x;

  Table t{"mixed_vs_frozen",
          {"projector", "dim", "gamma", "noise", "R1", "R1_se", "R2", "R2_se", "P", "P_se", "bracket", "approx",
           "approx_se", "bound", "bound_se", "comp_risk", "comp_risk_se", "trained_risk", "trained_risk_se"},
          {}};
  json rows = json::object();
  std::map<std::string, MixedBound> bounds;
  const std::vector<std::pair<std::string, const Frame*>> projectors{{"V1", &V1}, {"W_k", &sol.W_k}};
  for (const auto& [name, U] : projectors) {
    const std::string key = "mixed/" + name;
    const PenaltyTerms pen = mixed_penalty_terms(mix, *U, c.sched, c.budget, c.seed(key + "/penalties"));
    const MixedComparator comp = mixed_comparator(mix, *U);
    const RiskEstimate comp_risk = estimate_risk(comp.score, mix, c.sched, c.budget, c.seed(key + "/comp_risk"));
    double approx = 0.0, approx_se = 0.0;
    json entry;
    Cell trained_v, trained_se;
    if (do_train) {
      const TrainedField tf = train_field(samples, *U, tj, c, key);
      const RiskEstimate tr = estimate_risk(tf.score, mix, c.sched, c.budget, c.seed(key + "/trained_risk"));
      entry["trained_risk"] = mc_value(tr);
      entry["loss_trace"] = tf.trace;
      trained_v = tr.value;
      trained_se = tr.stderr_;
      if (measured) {
        const RiskEstimate a = estimate_comparator_approx(as_core_map(tf.core), comp.core, *U, mix, c.sched,
                                                          c.budget, c.seed(key + "/approx"));
        approx = a.value;
        approx_se = a.stderr_;
        entry["approx"] = mc_value(a);
      }
    }
    if (!measured) entry["approx"] = analytic_value(0.0);
    const MixedBound b = mixed_oracle_upper_bound(mix, *U, ms.weights, pen, eta, approx, approx_se);
    bounds.emplace(name, b);
    entry["gamma"] = analytic_value(b.gamma);
    entry["noise"] = analytic_value(b.noise);
    entry["reconstruction"] = {mc_value(pen.reconstruction[0]), mc_value(pen.reconstruction[1])};
    entry["posterior"] = mc_value(pen.posterior);
    entry["bound"] = {{"value", b.value}, {"stderr", b.stderr_}, {"bracket", b.bracket}, {"eta", b.eta},
                      {"provenance", "mc"}};
    entry["comparator_risk"] = mc_value(comp_risk);
    rows[name] = entry;
    t.add_row({name, static_cast<long long>(U->latent_dim()), b.gamma, b.noise, pen.reconstruction[0].value,
               pen.reconstruction[0].stderr_, pen.reconstruction[1].value, pen.reconstruction[1].stderr_,
               pen.posterior.value, pen.posterior.stderr_, b.bracket, approx, approx_se, b.value, b.stderr_,
               comp_risk.value, comp_risk.stderr_, trained_v, trained_se});
  }
  const MixedBound& bv = bounds.at("V1");
  const MixedBound& bw = bounds.at("W_k");
  json wk;
  to_json(wk, sol.W_k);
  rep.results["mixture"] = to_json(mix);
  rep.results["projectors"] = rows;
  rep.results["spectrum"] = sol.spectrum;
  rep.results["closed_form_spectrum"] = sol.closed_form_spectrum;
  rep.results["residual"] = analytic_value(sol.residual);
  rep.results["W_k"] = wk;
  rep.results["k"] = k;
  rep.results["span_dim"] = span_dim(mix.components[0].frame, mix.components[1].frame);
  rep.results["c_bar"] = {ms.weights[0].c_bar, ms.weights[1].c_bar};
  rep.results["n_bar"] = {ms.weights[0].n_bar, ms.weights[1].n_bar};
  rep.results["mixed_beats_frozen_3se"] = bw.value + 3.0 * bw.stderr_ < bv.value - 3.0 * bv.stderr_;
  rep.tables.push_back(std::move(t));
}

void run_containment_demo(const json& cfg, Context& c, ExperimentReport& rep) {
  const MixedSetup ms = mixed_setup(cfg, c);
  const Frame& A1 = ms.mix.components[0].frame;
  const Frame& A2 = ms.mix.components[1].frame;
  const int sd = span_dim(A1, A2);
  const double gamma_v1 = gamma_residual(A1, A1, A2, ms.solve_weights);
  Table t{"containment", {"k", "span_dim", "contained", "gamma_W_k", "residual", "gamma_V1"}, {}};
  bool zero_when_contained = true;
  json points = json::array();
  for (const int k : cfg.at("mixed").at("k_values").get<std::vector<int>>()) {
    const MixedProjectorSolution sol = solve_mixed_projector(A1, A2, ms.solve_weights, k);
    const double g = gamma_residual(sol.W_k, A1, A2, ms.solve_weights);
    const bool contained = k >= sd;
    if (contained && g != 0.0) zero_when_contained = false;
    t.add_row({static_cast<long long>(k), static_cast<long long>(sd), contained, g, sol.residual, gamma_v1});
    points.push_back({{"k", k}, {"gamma_W_k", analytic_value(g)}, {"residual", analytic_value(sol.residual)},
                      {"contained", contained}, {"spectrum", sol.spectrum}});
  }
  rep.results["mixture"] = to_json(ms.mix);
  rep.results["span_dim"] = sd;
  rep.results["gamma_V1"] = analytic_value(gamma_v1);
  rep.results["points"] = points;
  rep.results["gamma_zero_when_contained"] = zero_when_contained;
  rep.tables.push_back(std::move(t));
}

void run_sampler_demo(const json& cfg, Context& c, ExperimentReport& rep) {
  const NoisyLowDimModel target = model_of(cfg.at("target"), "/target", c);
  const Frame V1 = projector_of(cfg.value("projector", json::object()), target.frame, c);
  const json& sj = cfg.at("sampler");
  const json& tj = cfg.at("trainer");
  const long n = sj.at("n_chains").get<long>();
  SamplerConfig sc{sj.at("n_steps").get<int>(), c.sched.t0(), c.sched.T(), c.seed("sampler"), c.budget.n_workers};

  std::vector<std::pair<std::string, ScoreField>> fields{{"analytic", analytic_score(target)}};
  if (tj.at("enabled").get<bool>()) {
    const Mat samples = sample_data(target, tj.at("n_train").get<long>(), c.seed("sampler-demo/train_data"));
    fields.emplace_back("frozen_trained", train_field(samples, V1, tj, c, "sampler-demo").score);
  } else {
    fields.emplace_back("frozen_comparator", frozen_comparator(target, V1).score);
  }
  const Mat P = V1.complement_projector() * target.frame.projector();
  const Mat exact = ambient_gaussian_params(target, c.sched.t0()).front().cov;
  Table summary{"sampler_summary",
                {"field", "n_chains", "n_steps", "i", "j", "cov", "exact_cov", "energy_mean", "energy_se"},
                {}};
  json out = json::object();
  for (const auto& [name, field] : fields) {
    const Mat X = reverse_sample(field, sc, n);
    const Vec mean = X.colwise().mean().transpose();
    const Mat centered = X.rowwise() - mean.transpose();
    const Mat cov = centered.transpose() * centered / static_cast<double>(n - 1);
    std::vector<double> energy(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) energy[i] = X.row(i) * P * X.row(i).transpose();
    const ScalarEstimate e = batch_means(energy, std::min<int>(32, static_cast<int>(n)));
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
      for (Eigen::Index j = i; j < cov.cols(); ++j) {
        summary.add_row({name, static_cast<long long>(n), static_cast<long long>(sc.n_steps), static_cast<long long>(i),
                         static_cast<long long>(j), cov(i, j), exact(i, j), e.mean, e.stderr_});
      }
    }
    Table samples{"samples_" + name, {}, {}};
    samples.in_json = false;
    for (Eigen::Index j = 0; j < X.cols(); ++j) samples.columns.push_back("x" + std::to_string(j + 1));
    for (long i = 0; i < n; ++i) {
      std::vector<Cell> row;
      for (Eigen::Index j = 0; j < X.cols(); ++j) row.emplace_back(X(i, j));
      samples.add_row(std::move(row));
    }
    rep.tables.push_back(std::move(samples));
    std::vector<std::vector<double>> cov_rows;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) cov_rows.emplace_back(cov.row(i).data(), cov.row(i).data() + cov.cols());
    out[name] = {{"covariance", cov_rows}, {"energy", mc_value(e.mean, e.stderr_, n, sc.seed)}};
  }
  std::vector<std::vector<double>> exact_rows;
  for (Eigen::Index i = 0; i < exact.rows(); ++i) {
    exact_rows.push_back(std::vector<double>(exact.cols()));
    for (Eigen::Index j = 0; j < exact.cols(); ++j) exact_rows.back()[j] = exact(i, j);
  }
  rep.results["fields"] = out;
  rep.results["exact_covariance_t0"] = exact_rows;
  rep.results["n_steps"] = sc.n_steps;
  rep.tables.insert(rep.tables.begin(), std::move(summary));
}

struct Check {
  std::string name;
  double value;
  double threshold;
  bool pass;
};

void run_invariant_suite(const json& cfg, Context& c, ExperimentReport& rep) {
  const json& ij = cfg.at("invariants");
  const int n_points = ij.at("n_points").get<int>();
  std::vector<Check> checks;
  Philox rng(c.seed("invariants/points"), 0);
  const double t0 = c.sched.t0(), T = c.sched.T();

  // Score decomposition and finite differences on a Gaussian and a mixture latent.
  const NoisyLowDimModel gauss(haar_frame(5, 2, c.seed("invariants/frame")), LatentDistribution::standard(2), 0.3);
  const NoisyLowDimModel mixl(
      haar_frame(4, 2, c.seed("invariants/frame_mix")),
      LatentDistribution::mixture({0.3, 0.7}, {{Vec::Constant(2, 1.0), Mat::Identity(2, 2) * 0.5},
                                               {Vec::Constant(2, -1.0), Mat::Identity(2, 2)}}),
      0.2);
  double max_inner = 0.0, max_fd = 0.0, max_identity = 0.0;
  for (const NoisyLowDimModel* m : {&gauss, &mixl}) {
    for (int i = 0; i < n_points; ++i) {
      const double t = t0 + (T - t0) * rng.uniform();
      Vec x = rng.normal_vector(m->ambient_dim());
      x *= std::min(1.0, 5.0 / x.norm());
      const AmbientScore s = ambient_score(*m, x, t);
      max_inner = std::max(max_inner, std::abs(s.on_support.dot(s.orthogonal)));
      const ScheduleValues sv = schedule_eval(t, m->sigma);
      max_identity = std::max(max_identity, ((G_field(*m, x, t) - x) / sv.h - s.total).cwiseAbs().maxCoeff() /
                                                std::max(1.0, s.total.norm()));
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        Vec xp = x, xm = x;
        xp(j) += 1e-5;
        xm(j) -= 1e-5;
        const double fd = (log_density(*m, xp, t) - log_density(*m, xm, t)) / 2e-5;
        max_fd = std::max(max_fd, std::abs(fd - s.total(j)));
      }
    }
  }
  checks.push_back({"orthogonal_decomposition", max_inner, 1e-10, max_inner <= 1e-10});
  checks.push_back({"score_identity_relative", max_identity, 1e-8, max_identity <= 1e-8});
  checks.push_back({"score_finite_difference", max_fd, 1e-5, max_fd <= 1e-5});

  // Closed-form spectrum and trace identity.
  double max_eig_err = 0.0, max_trace = 0.0;
  Philox trng(c.seed("invariants/triples"), 0);
  for (int i = 0; i < ij.at("n_triples").get<int>(); ++i) {
    const double a = 0.05 + trng.uniform(), b = 0.05 + trng.uniform(), phi = kPi / 2.0 * trng.uniform();
    const Frame A1 = axis_frame(4, 1);
    const Frame A2 = uniform_angle_frame(A1, phi, derive_seed(c.root, static_cast<std::uint64_t>(i)));
    const MixedProjectorSolution sol = solve_mixed_projector(A1, A2, {a, b}, 1);
    max_eig_err = std::max(max_eig_err, sol.closed_form_error);
    double tr = 0.0;
    for (const double l : sol.spectrum) tr += l;
    max_trace = std::max(max_trace, std::abs(tr - (a + b)));
  }
  checks.push_back({"closed_form_spectrum", max_eig_err, 1e-10, max_eig_err <= 1e-10});
  checks.push_back({"spectrum_trace", max_trace, 1e-10, max_trace <= 1e-10});

  // Optimality of W_k against Haar frames, and monotone residual in k.
  {
    const Frame A1 = haar_frame(8, 2, c.seed("invariants/opt_A1"));
    const Frame A2 = haar_frame(8, 3, c.seed("invariants/opt_A2"));
    const std::array<double, 2> w{0.7, 0.4};
    const MixedProjectorSolution sol = solve_mixed_projector(A1, A2, w, 3);
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ij.at("n_frames").get<int>(); ++i) {
      const Frame W = haar_frame(8, 3, derive_seed(c.seed("invariants/haar"), static_cast<std::uint64_t>(i)));
      worst = std::min(worst, gamma_residual(W, A1, A2, w) - sol.residual);
    }
    checks.push_back({"projector_optimality_margin", worst, -1e-10, worst >= -1e-10});
    double prev = std::numeric_limits<double>::infinity();
    bool mono = true;
    for (int k = 3; k <= 8; ++k) {
      const double r = solve_mixed_projector(A1, A2, w, k).residual;
      mono = mono && r <= prev + 1e-12;
      prev = r;
    }
    checks.push_back({"monotone_residual", mono ? 1.0 : 0.0, 1.0, mono});
  }

  // Sandwich on a few fixtures.
  {
    double worst = 0.0;
    bool all = true;
    for (const double sigma : {0.0, 0.1, 0.5}) {
      for (const double theta : {kPi / 12.0, kPi / 4.0, kPi / 3.0}) {
        const NoisyLowDimModel m(axis_frame(4, 2), LatentDistribution::standard(2), sigma);
        const Frame V1 = uniform_angle_frame(m.frame, theta, c.seed("invariants/sandwich"));
        const BoundReport br = frozen_bound_report(m, V1, c.sched, c.moments);
        all = all && sandwich_holds(br);
        for (std::size_t k = 0; k < br.nodes.size(); ++k) {
          worst = std::min(worst, br.oracle->total_per_node[k] - br.lower->total_per_node[k]);
          if (br.upper) worst = std::min(worst, br.upper->total_per_node[k] - br.oracle->total_per_node[k]);
        }
      }
    }
    checks.push_back({"sandwich_min_slack", worst, 0.0, all});
  }

  // Network gradient and output bound.
  {
    const ReluCore core = ReluCore::with_hidden(2, 3, 16, 3.0, 50.0, c.seed("invariants/core"));
    Philox r(c.seed("invariants/core_data"), 0);
    Mat Z(2, 32), Y(2, 32);
    Vec tt(32), w = Vec::Ones(32);
    for (int i = 0; i < 32; ++i) {
      Z.col(i) = r.normal_vector(2);
      Y.col(i) = r.normal_vector(2);
      tt(i) = t0 + (T - t0) * r.uniform();
    }
    const GradCheck gc = gradient_check(core, Z, tt, Y, w, 20, 1e-5, c.seed("invariants/grad"));
    checks.push_back({"gradient_check_relative", gc.max_rel_error, 1e-4, gc.max_rel_error <= 1e-4});
    double max_norm = 0.0;
    for (int i = 0; i < 10000; ++i) {
      max_norm = std::max(max_norm, core.forward(Vec(20.0 * r.normal_vector(2)), T * r.uniform()).norm());
    }
    checks.push_back({"output_bound", max_norm, core.K(), max_norm <= core.K() * (1.0 + 1e-12)});
  }

  // Denoising-gap agreement for three fields.
  {
    const NoisyLowDimModel m(axis_frame(2, 1), LatentDistribution::standard(1), 0.0);
    const Frame V1 = uniform_angle_frame(m.frame, kPi / 3.0, c.seed("invariants/gap_frame"));
    const std::vector<ScoreField> fields{
        analytic_score(m), frozen_comparator(m, V1).score,
        ScoreField("minus_x", 2, [](double) { return [](const Vec& x) -> Vec { return -x; }; })};
    const MultiEstimate est = denoising_gap(fields, m, c.sched, c.budget, c.seed("invariants/denoising_gap"));
    // gap_j = quantity 2j - quantity 2j+1; compare j = 0 with the others on paired batches.
    double worst = 0.0;
    const Mat& bv = est.batch_values;
    for (int j = 1; j < 3; ++j) {
      std::vector<double> diffs;
      for (Eigen::Index b = 0; b < bv.cols(); ++b) {
        diffs.push_back((bv(0, b) - bv(1, b)) - (bv(2 * j, b) - bv(2 * j + 1, b)));
      }
      const ScalarEstimate d = batch_means(diffs, static_cast<int>(diffs.size()));
      worst = std::max(worst, std::abs(d.mean) / std::max(d.stderr_, 1e-300));
    }
    checks.push_back({"denoising_gap_max_z", worst, 4.0, worst <= 4.0});
  }

  // Bit-exact Monte Carlo reproducibility.
  {
    const NoisyLowDimModel m(axis_frame(2, 1), LatentDistribution::standard(1), 0.0);
    const ScoreField s("minus_x_over_h", 2, [](double t) {
      const double h = schedule_eval(t).h;
      return [h](const Vec& x) -> Vec { return -x / h; };
    });
    const std::uint64_t seed = c.seed("invariants/repro");
    const RiskEstimate a = estimate_risk(s, m, c.sched, c.budget, seed);
    const RiskEstimate b = estimate_risk(s, m, c.sched, c.budget, seed);
    const bool same = a.value == b.value && a.stderr_ == b.stderr_;
    checks.push_back({"mc_reproducible", same ? 1.0 : 0.0, 1.0, same});
  }

  Table t{"invariants", {"check", "value", "threshold", "pass"}, {}};
  bool all = true;
  json out = json::object();
  for (const auto& ch : checks) {
    t.add_row({ch.name, ch.value, ch.threshold, ch.pass});
    out[ch.name] = {{"value", ch.value}, {"threshold", ch.threshold}, {"pass", ch.pass}};
    all = all && ch.pass;
  }
  rep.results["checks"] = out;
  rep.results["all_pass"] = all;
  rep.tables.push_back(std::move(t));
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"angle-sweep",      "dimension-sweep", "noise-sweep",   "mixed-vs-frozen",
                                              "containment-demo", "sampler-demo",    "invariant-suite"};
  return names;
}

json preset_defaults(const std::string& preset) {
  json j = common_defaults();
  j.merge_patch(specific_defaults(preset));
  j["preset"] = preset;
  return j;
}

const json& config_schema() {
  static const json schema = json::parse(embedded_config_schema());
  return schema;
}

void validate_config(const json& config) {
  const auto errors = schema_errors(config_schema(), config);
  if (errors.empty()) return;
  std::ostringstream os;
  os << "config does not match the schema:";
  for (const auto& e : errors) os << "\n  " << e;
  throw Error(ErrorCode::ConfigInvalid, os.str());
}

ExperimentConfig make_config(const json& user, const std::optional<std::string>& preset_override,
                             const std::optional<std::uint64_t>& seed_override) {
  if (!user.is_object()) throw Error(ErrorCode::ConfigInvalid, "/: config must be a JSON object");
  std::string preset;
  if (preset_override) {
    preset = *preset_override;
  } else if (user.contains("preset") && user["preset"].is_string()) {
    preset = user["preset"].get<std::string>();
  } else {
    throw Error(ErrorCode::ConfigInvalid, "/preset: is required");
  }
  if (std::find(preset_names().begin(), preset_names().end(), preset) == preset_names().end()) {
    throw Error(ErrorCode::ConfigInvalid, "/preset: unknown preset '" + preset + "'");
  }
  // Validate the user file alone first so errors point at what was written.
  json checked = user;
  checked["preset"] = preset;
  if (!checked.contains("seed")) checked["seed"] = preset_defaults(preset)["seed"];
  validate_config(checked);
  json body = preset_defaults(preset);
  body.merge_patch(user);
  body["preset"] = preset;
  if (seed_override) body["seed"] = *seed_override;
  validate_config(body);
  if (body["schedule"]["T"].get<double>() <= body["schedule"]["t0"].get<double>()) {
    config_error("/schedule/T", "must exceed t0");
  }
  return {preset, body.at("seed").get<std::uint64_t>(), body};
}

ExperimentConfig load_config(const std::string& path, const std::optional<std::string>& preset_override,
                             const std::optional<std::uint64_t>& seed_override) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot read config " + path);
  json user;
  try {
    user = json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, "/: " + std::string(e.what()));
  }
  return make_config(user, preset_override, seed_override);
}

ExperimentReport run(const ExperimentConfig& config) {
  ExperimentReport rep;
  rep.config = config.body;
  Context c = make_context(config);
  const json& b = config.body;
  static const std::map<std::string, std::function<void(const json&, Context&, ExperimentReport&)>> runners{
      {"angle-sweep", run_angle_sweep},         {"dimension-sweep", run_dimension_sweep},
      {"noise-sweep", run_noise_sweep},         {"mixed-vs-frozen", run_mixed_vs_frozen},
      {"containment-demo", run_containment_demo}, {"sampler-demo", run_sampler_demo},
      {"invariant-suite", run_invariant_suite}};
  try {
    runners.at(config.preset)(b, c, rep);
  } catch (const Error& e) {
    const std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    throw Error(e.code(), "preset " + config.preset + ": " + (msg.rfind(prefix, 0) == 0 ? msg.substr(prefix.size()) : msg));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, "preset " + config.preset + ": " + e.what());
  }
  rep.seeds = c.seeds;
  rep.seeds["root"] = c.root;
  return rep;
}

}  // namespace reuse
