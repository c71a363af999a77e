#pragma once

#include <cstdint>
#include <string>

#include "reuse/score.hpp"

namespace reuse {

struct SamplerConfig {
  int n_steps = 200;
  double t0 = 0.01;
  double T = 1.0;
  std::uint64_t seed = 0;
  int n_workers = 1;

  void validate() const;
};

// Euler-Maruyama on the reverse SDE from T down to t0, started at N(0, I).
// Chain i draws from its own stream, so output does not depend on n_workers.
Mat reverse_sample(const ScoreField& s, const SamplerConfig& config, long n);

void write_samples_csv(const Mat& samples, const std::string& path);

}  // namespace reuse
