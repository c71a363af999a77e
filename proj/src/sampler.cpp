#include "reuse/sampler.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "reuse/error.hpp"
#include "reuse/montecarlo.hpp"
#include "reuse/rng.hpp"

namespace reuse {

void SamplerConfig::validate() const {
  if (n_steps < 2) throw Error(ErrorCode::InvalidArgument, "sampler needs at least 2 steps");
  if (!(t0 >= 0.0) || !(T > t0)) throw Error(ErrorCode::InvalidArgument, "sampler needs 0 <= t0 < T");
  if (n_workers < 1) throw Error(ErrorCode::InvalidArgument, "n_workers must be positive");
}

Mat reverse_sample(const ScoreField& s, const SamplerConfig& config, long n) {
  config.validate();
  const Eigen::Index D = s.ambient_dim();
  const std::uint64_t chain_seed = derive_seed(config.seed, "chains");
  const double dtau = (config.T - config.t0) / config.n_steps;
  const double sqrt_dtau = std::sqrt(dtau);
  Mat out(n, D);
  const int workers = std::max(1, std::min<int>(config.n_workers, static_cast<int>(n)));
  parallel_for(workers, workers, [&](int w) {
    const long lo = n * w / workers;
    const long hi = n * (w + 1) / workers;
    std::vector<Philox> rngs;
    Mat X(D, hi - lo);
    for (long i = lo; i < hi; ++i) {
      rngs.emplace_back(chain_seed, static_cast<std::uint64_t>(i));
      X.col(i - lo) = rngs.back().normal_vector(D);
    }
    for (int k = 0; k < config.n_steps; ++k) {
      const double t = config.T - k * dtau;
      const auto eval = s.at(t);
      for (long c = 0; c < hi - lo; ++c) {
        const Vec x = X.col(c);
        X.col(c) = x + (0.5 * x + eval(x)) * dtau + sqrt_dtau * rngs[static_cast<std::size_t>(c)].normal_vector(D);
        if (!X.col(c).allFinite() || X.col(c).norm() > 1e6) {
          std::ostringstream os;
          os << "chain " << lo + c << " left the ball of radius 1e6 at step " << k << " (t = " << t << ")";
          throw Error(ErrorCode::Diverged, os.str());
        }
      }
    }
    out.middleRows(lo, hi - lo) = X.transpose();
  });
  return out;
}

void write_samples_csv(const Mat& samples, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path);
  for (Eigen::Index j = 0; j < samples.cols(); ++j) f << (j ? "," : "") << "x" << j + 1;
  f << "\r\n";
  char buf[32];
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", samples(i, j));
      f << (j ? "," : "") << buf;
    }
    f << "\r\n";
  }
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace reuse
