#pragma once

#include <functional>
#include <vector>

namespace reuse {

// Values of the Ornstein-Uhlenbeck transition kernel at time t for a domain
// with ambient noise sigma.
struct ScheduleValues {
  double alpha = 1.0;    // e^{-t/2}
  double h = 0.0;        // 1 - e^{-t}
  double h_tilde = 0.0;  // alpha^2 sigma^2 + h
  double rho = 0.0;      // alpha^2 sigma^2 / h_tilde
};

ScheduleValues schedule_eval(double t, double sigma = 0.0);

// Uniform trapezoid grid on [t0, T].
class DiffusionSchedule {
 public:
  DiffusionSchedule(double t0 = 0.01, double T = 1.0, int n_nodes = 64);

  double t0() const { return t0_; }
  double T() const { return T_; }
  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  const std::vector<double>& nodes() const { return nodes_; }
  // Trapezoid weights; they sum to T - t0.
  const std::vector<double>& weights() const { return weights_; }
  double window() const { return T_ - t0_; }

 private:
  double t0_;
  double T_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

struct TimeAverage {
  double value = 0.0;
  std::vector<double> samples;  // integrand at each node
};

TimeAverage time_average(const DiffusionSchedule& sched, const std::function<double(double)>& integrand);

// (1/(T - t0)) * sum_k w_k v_k for node values computed elsewhere; throws
// NonFiniteIntegrand on a bad node.
double average_node_values(const DiffusionSchedule& sched, const std::vector<double>& values);

}  // namespace reuse
