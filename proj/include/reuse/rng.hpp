#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace reuse {

// Philox4x32-10 counter-based generator. The full output stream is a pure
// function of (key, counter), so a (seed, stream) pair reproduces the same
// draws on every platform.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index n);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Derive a named sub-stream seed from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace reuse
