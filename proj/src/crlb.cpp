#include "uwbpose/crlb.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace uwbpose {

FisherInfo fisher_info(const Deployment& deployment, std::size_t repeats, const Pose2& pose) {
  if (repeats < 1) throw Error(ErrorCode::invalid_argument, "repeat count must be >= 1");
  Mat6 f = Mat6::Zero();
  for (std::size_t i = 0; i < deployment.tag_count(); ++i) {
    const Vec2& s = deployment.tag(i);
    const Vec2 placed = pose.transform(s);
    for (std::size_t m = 0; m < deployment.anchor_count(); ++m) {
      const Vec2 u = deployment.anchor(m) - placed;
      const double dh = deployment.height_diff(i, m);
      const double denom_sq = u.squaredNorm() + dh * dh;
      if (denom_sq <= kCoincidenceFloor) {
        throw NearSingularityError("anchor " + deployment.anchor_ids()[m] +
                                       " coincides with tag " + deployment.tag_ids()[i],
                                   i, m);
      }
      // (sbar kron I2) u with sbar = (s, 1)
      Eigen::Matrix<double, 6, 1> g;
      g << s.x() * u, s.y() * u, u;
      const double sig = deployment.sigma(i, m);
      f.noalias() += g * g.transpose() / (sig * sig * denom_sq);
    }
  }
  f *= static_cast<double>(repeats);
  return {f, pose};
}

Eigen::Matrix<double, 3, 6> so2_constraint_jacobian(const RotMat2& rotation) {
  const Vec2 y1 = rotation.col(0);
  const Vec2 y2 = rotation.col(1);
  Eigen::Matrix<double, 3, 6> df = Eigen::Matrix<double, 3, 6>::Zero();
  df.block<1, 2>(0, 0) = 2.0 * y1.transpose();
  df.block<1, 2>(1, 0) = y2.transpose();
  df.block<1, 2>(1, 2) = y1.transpose();
  df.block<1, 2>(2, 2) = 2.0 * y2.transpose();
  return df;
}

Eigen::Matrix<double, 6, 3> so2_null_basis(const RotMat2& rotation) {
  const Vec2 y1 = rotation.col(0);
  const Vec2 y2 = rotation.col(1);
  Eigen::Matrix<double, 6, 3> u = Eigen::Matrix<double, 6, 3>::Zero();
  u.block<2, 1>(0, 0) = y2 / std::numbers::sqrt2;
  u.block<2, 1>(2, 0) = -y1 / std::numbers::sqrt2;
  u.block<2, 2>(4, 1).setIdentity();
  return u;
}

CrlbResult constrained_crlb(const FisherInfo& info, const Pose2& pose) {
  const RotMat2 rot = pose.rotation();
  const Eigen::Matrix<double, 6, 3> u = so2_null_basis(rot);
  const Eigen::Matrix<double, 3, 6> df = so2_constraint_jacobian(rot);
  if ((df * u).cwiseAbs().maxCoeff() > 1e-10 ||
      (u.transpose() * u - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-10) {
    throw Error(ErrorCode::invalid_argument, "SO(2) null-space basis failed its identities");
  }

  const Eigen::Matrix3d reduced = u.transpose() * info.information * u;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(reduced, Eigen::EigenvaluesOnly);
  const auto ev = eig.eigenvalues();
  if (!(ev(2) > 0.0) || ev(0) <= 1e-12 * ev(2)) {
    throw Error(ErrorCode::unobservable, "pose is not observable: U^T F U is singular");
  }

  CrlbResult out;
  out.bound = u * reduced.ldlt().solve(Eigen::Matrix3d::Identity()) * u.transpose();
  out.bound = 0.5 * (out.bound + out.bound.transpose()).eval();
  out.rotation_block_trace = out.bound.topLeftCorner<4, 4>().trace();
  out.translation_block_trace = out.bound.bottomRightCorner<2, 2>().trace();
  out.sqrt_trace = std::sqrt(out.bound.trace());
  return out;
}

CrlbResult crlb_at(const Deployment& deployment, std::size_t repeats, const Pose2& pose) {
  return constrained_crlb(fisher_info(deployment, repeats, pose), pose);
}

}  // namespace uwbpose
