#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace reuse {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kOrthoTol = 1e-10;
inline constexpr double kRankTol = 1e-10;
// Angles whose cosine falls below this are left out of tan^2 sums.
inline constexpr double kTanCosFloor = 1e-8;

// D x m matrix with orthonormal columns.
class Frame {
 public:
  // Takes ownership of an already-orthonormal matrix; throws RankDeficient
  // (for an empty matrix) or InvalidArgument if the columns are not
  // orthonormal to kOrthoTol.
  static Frame from_orthonormal(Mat columns);

  const Mat& data() const { return data_; }
  Eigen::Index ambient_dim() const { return data_.rows(); }
  Eigen::Index latent_dim() const { return data_.cols(); }

  Mat projector() const { return data_ * data_.transpose(); }
  Mat complement_projector() const;

 private:
  explicit Frame(Mat m) : data_(std::move(m)) {}
  Mat data_;
};

// Orthonormalize a full-column-rank matrix (thin QR, positive diagonal).
Frame make_frame(const Mat& matrix);

// Frame spanned by standard basis vectors e_{offset}, ..., e_{offset+m-1}.
Frame axis_frame(Eigen::Index ambient_dim, Eigen::Index latent_dim, Eigen::Index offset = 0);

// Haar-distributed frame on the Stiefel manifold.
Frame haar_frame(Eigen::Index ambient_dim, Eigen::Index latent_dim, std::uint64_t seed);

struct SubspaceReport {
  std::vector<double> angles;  // ascending, radians
  double cos2_sum = 0.0;
  Mat B;       // V^T A
  Mat B_pinv;
  int B_rank = 0;
  double B_opnorm = 0.0;
  double residual_V_of_A = 0.0;  // ||P_V^perp A||_F^2
  double perp_trace = 0.0;       // Tr(P_V^perp P_A^perp)
  double tan2_sum = 0.0;
  bool tan2_excluded = false;    // some angle had cos below kTanCosFloor
  std::vector<double> cosines;   // descending, paired with angles
  std::vector<double> sines;     // ascending, paired with angles
};

SubspaceReport subspace_report(const Frame& V, const Frame& A);

// Frame with the same latent dimension as A whose principal angles to A are
// the requested values (remaining angles are zero).
Frame rotate_frame(const Frame& A, const std::vector<double>& angles, std::uint64_t seed);

// Moore-Penrose pseudoinverse. Singular values at or below
// rtol * max(sigma_max, 1) are treated as zero.
Mat pseudo_inverse(const Mat& m, double rtol = kRankTol, int* rank = nullptr);

double max_abs(const Mat& m);

void to_json(nlohmann::json& j, const Frame& f);
void from_json(const nlohmann::json& j, Frame& f);
Frame frame_from_json(const nlohmann::json& j);

}  // namespace reuse
