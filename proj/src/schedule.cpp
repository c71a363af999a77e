#include "reuse/schedule.hpp"

#include <cmath>
#include <sstream>

#include "reuse/error.hpp"

namespace reuse {

ScheduleValues schedule_eval(double t, double sigma) {
  if (!(t >= 0.0)) throw Error(ErrorCode::NegativeTime, "t must be nonnegative");
  ScheduleValues v;
  v.alpha = std::exp(-0.5 * t);
  v.h = -std::expm1(-t);
  const double signal = v.alpha * v.alpha * sigma * sigma;
  v.h_tilde = signal + v.h;
  v.rho = signal > 0.0 ? signal / v.h_tilde : 0.0;
  return v;
}

DiffusionSchedule::DiffusionSchedule(double t0, double T, int n_nodes) : t0_(t0), T_(T) {
  if (!(t0 > 0.0) || !(T > t0)) {
    throw Error(ErrorCode::InvalidArgument, "schedule needs 0 < t0 < T");
  }
  if (n_nodes < 2) throw Error(ErrorCode::InvalidArgument, "schedule needs at least 2 nodes");
  const double step = (T - t0) / (n_nodes - 1);
  nodes_.resize(static_cast<std::size_t>(n_nodes));
  weights_.assign(static_cast<std::size_t>(n_nodes), step);
  for (int k = 0; k < n_nodes; ++k) nodes_[k] = t0 + step * k;
  nodes_.back() = T;
  weights_.front() = weights_.back() = 0.5 * step;
}

double average_node_values(const DiffusionSchedule& sched, const std::vector<double>& values) {
  const auto& w = sched.weights();
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!std::isfinite(values[k])) {
      std::ostringstream os;
      os << "integrand is " << values[k] << " at node " << k << " (t = " << sched.nodes()[k] << ")";
      throw Error(ErrorCode::NonFiniteIntegrand, os.str());
    }
    acc += w[k] * values[k];
  }
  return acc / sched.window();
}

TimeAverage time_average(const DiffusionSchedule& sched, const std::function<double(double)>& integrand) {
  TimeAverage out;
  out.samples.reserve(sched.nodes().size());
  for (const double t : sched.nodes()) out.samples.push_back(integrand(t));
  out.value = average_node_values(sched, out.samples);
  return out;
}

}  // namespace reuse
