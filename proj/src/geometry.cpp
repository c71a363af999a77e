#include "reuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "reuse/error.hpp"
#include "reuse/rng.hpp"

namespace reuse {

double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Frame Frame::from_orthonormal(Mat columns) {
  if (columns.cols() < 1 || columns.rows() < columns.cols()) {
    throw Error(ErrorCode::RankDeficient, "frame needs 1 <= m <= D");
  }
  const Mat gram = columns.transpose() * columns;
  const double err = max_abs(gram - Mat::Identity(columns.cols(), columns.cols()));
  if (err > kOrthoTol) {
    std::ostringstream os;
    os << "columns not orthonormal (max |F^T F - I| = " << err << ")";
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
  return Frame(std::move(columns));
}

Mat Frame::complement_projector() const {
  return Mat::Identity(ambient_dim(), ambient_dim()) - projector();
}

Frame make_frame(const Mat& matrix) {
  const Eigen::Index D = matrix.rows();
  const Eigen::Index m = matrix.cols();
  if (m < 1 || m > D) throw Error(ErrorCode::RankDeficient, "frame needs 1 <= m <= D");
  Eigen::JacobiSVD<Mat> svd(matrix);
  const auto& s = svd.singularValues();
  if (!(s(m - 1) > 1e-10 * s(0))) {
    throw Error(ErrorCode::RankDeficient, "matrix is numerically rank deficient");
  }
  Eigen::HouseholderQR<Mat> qr(matrix);
  Mat q = qr.householderQ() * Mat::Identity(D, m);
  const Mat r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  // One re-orthogonalization pass cleans up Householder round-off.
  Eigen::HouseholderQR<Mat> qr2(q);
  Mat q2 = qr2.householderQ() * Mat::Identity(D, m);
  const Mat r2 = qr2.matrixQR().topRows(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (r2(j, j) < 0) q2.col(j) = -q2.col(j);
  }
  return Frame::from_orthonormal(std::move(q2));
}

Frame axis_frame(Eigen::Index ambient_dim, Eigen::Index latent_dim, Eigen::Index offset) {
  if (latent_dim < 1 || offset < 0 || offset + latent_dim > ambient_dim) {
    throw Error(ErrorCode::InvalidArgument, "axis frame does not fit in ambient dimension");
  }
  Mat m = Mat::Zero(ambient_dim, latent_dim);
  for (Eigen::Index j = 0; j < latent_dim; ++j) m(offset + j, j) = 1.0;
  return Frame::from_orthonormal(std::move(m));
}

Frame haar_frame(Eigen::Index ambient_dim, Eigen::Index latent_dim, std::uint64_t seed) {
  Philox rng(seed, 0x4841415246ull);
  Mat g(ambient_dim, latent_dim);
  for (Eigen::Index j = 0; j < latent_dim; ++j)
    for (Eigen::Index i = 0; i < ambient_dim; ++i) g(i, j) = rng.normal();
  return make_frame(g);
}

Mat pseudo_inverse(const Mat& m, double rtol, int* rank) {
  if (m.size() == 0) {
    if (rank) *rank = 0;
    return Mat::Zero(m.cols(), m.rows());
  }
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cutoff = rtol * std::max(1.0, s(0));
  Vec inv = Vec::Zero(s.size());
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) {
      inv(i) = 1.0 / s(i);
      ++r;
    }
  }
  if (rank) *rank = r;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

SubspaceReport subspace_report(const Frame& V, const Frame& A) {
  if (V.ambient_dim() != A.ambient_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "frames live in different ambient dimensions");
  }
  const Eigen::Index D = V.ambient_dim();
  const Eigen::Index dV = V.latent_dim();
  const Eigen::Index dA = A.latent_dim();
  const Eigen::Index r = std::min(dV, dA);

  SubspaceReport rep;
  rep.B = V.data().transpose() * A.data();
  rep.B_pinv = pseudo_inverse(rep.B, kRankTol, &rep.B_rank);

  Eigen::JacobiSVD<Mat> cos_svd(rep.B);
  const Vec cosv = cos_svd.singularValues().cwiseMin(1.0);  // descending
  rep.B_opnorm = cosv.size() ? cosv(0) : 0.0;

  // Sines from the component of A outside col(V); accurate for small angles.
  const Mat resid = A.data() - V.data() * rep.B;
  Eigen::JacobiSVD<Mat> sin_svd(resid);
  Vec sinv = sin_svd.singularValues().cwiseMin(1.0);  // descending, size dA
  std::vector<double> sines(sinv.data(), sinv.data() + sinv.size());
  std::sort(sines.begin(), sines.end());
  sines.resize(static_cast<std::size_t>(r));

  rep.angles.resize(r);
  rep.cosines.resize(r);
  rep.sines = sines;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double c = cosv(j);
    const double s = sines[j];
    rep.cosines[j] = c;
    rep.angles[j] = (c * c >= 0.5) ? std::asin(s) : std::acos(c);
    rep.cos2_sum += c * c;
    if (c > kTanCosFloor) {
      rep.tan2_sum += (s * s) / (c * c);
    } else {
      rep.tan2_excluded = true;
    }
  }
  rep.residual_V_of_A = resid.squaredNorm();
  rep.perp_trace = static_cast<double>(D - dV - dA) + rep.cos2_sum;
  return rep;
}

Frame rotate_frame(const Frame& A, const std::vector<double>& angles, std::uint64_t seed) {
  const Eigen::Index D = A.ambient_dim();
  const Eigen::Index d = A.latent_dim();
  const auto r = static_cast<Eigen::Index>(angles.size());
  if (r > std::min(d, D - d)) {
    throw Error(ErrorCode::InfeasibleAngles, "need r <= min(d, D - d) to place the requested angles");
  }
  for (const double a : angles) {
    if (!(a >= 0.0 && a <= M_PI / 2 + 1e-15)) {
      throw Error(ErrorCode::InfeasibleAngles, "angles must lie in [0, pi/2]");
    }
  }
  if (r == 0) return A;

  // Random rotation inside col(A), then random orthonormal directions outside.
  const Frame inner = haar_frame(d, d, derive_seed(seed, "inner"));
  const Mat a_rot = A.data() * inner.data();

  Philox rng(derive_seed(seed, "outer"));
  Mat g(D, r);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < D; ++i) g(i, j) = rng.normal();
  g -= A.data() * (A.data().transpose() * g);
  g -= A.data() * (A.data().transpose() * g);
  const Mat q = make_frame(g).data();

  Mat out = a_rot;
  for (Eigen::Index j = 0; j < r; ++j) {
    out.col(j) = std::cos(angles[j]) * a_rot.col(j) + std::sin(angles[j]) * q.col(j);
  }
  return make_frame(out);
}

void to_json(nlohmann::json& j, const Frame& f) {
  const Mat& m = f.data();
  std::vector<double> cols;
  cols.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c) cols.push_back(m(i, c));
  j = nlohmann::json{{"ambient_dim", m.rows()}, {"latent_dim", m.cols()}, {"columns", cols}};
}

Frame frame_from_json(const nlohmann::json& j) {
  const auto D = j.at("ambient_dim").get<Eigen::Index>();
  const auto m = j.at("latent_dim").get<Eigen::Index>();
  const auto cols = j.at("columns").get<std::vector<double>>();
  if (D < 1 || m < 1 || static_cast<Eigen::Index>(cols.size()) != D * m) {
    throw Error(ErrorCode::InvalidArgument, "frame JSON: columns length must equal ambient_dim * latent_dim");
  }
  Mat mat(D, m);
  for (Eigen::Index i = 0; i < D; ++i)
    for (Eigen::Index c = 0; c < m; ++c) mat(i, c) = cols[static_cast<std::size_t>(i * m + c)];
  return Frame::from_orthonormal(std::move(mat));
}

void from_json(const nlohmann::json& j, Frame& f) { f = frame_from_json(j); }

}  // namespace reuse
