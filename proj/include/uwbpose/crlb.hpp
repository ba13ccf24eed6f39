#pragma once

// Fisher information of Theta = (vec(R), t) under Gaussian range noise and
// the Cramer-Rao bound constrained to R in SO(2).

#include <cstddef>

#include <Eigen/Core>

#include "uwbpose/core.hpp"

namespace uwbpose {

/// Floor (m^2) on ||a - s^A||^2 + dh^2 below which the information is undefined.
inline constexpr double kCoincidenceFloor = 1e-9;

struct FisherInfo {
  Mat6 information;
  Pose2 evaluated_at;
};

struct CrlbResult {
  Mat6 bound;
  double sqrt_trace = 0.0;
  double rotation_block_trace = 0.0;     ///< trace of the vec(R) block
  double translation_block_trace = 0.0;  ///< trace of the t block
};

/// Sums the per-measurement information over all N * M * T ranges.
FisherInfo fisher_info(const Deployment& deployment, std::size_t repeats, const Pose2& pose);

/// Jacobian of the three SO(2) constraints (||y1||^2 - 1, y2.y1, ||y2||^2 - 1)
/// with respect to Theta, where R = [y1 y2].
Eigen::Matrix<double, 3, 6> so2_constraint_jacobian(const RotMat2& rotation);

/// Orthonormal basis of the null space of the constraint Jacobian.
Eigen::Matrix<double, 6, 3> so2_null_basis(const RotMat2& rotation);

/// U (U^T F U)^{-1} U^T. Throws unobservable when U^T F U is singular.
CrlbResult constrained_crlb(const FisherInfo& info, const Pose2& pose);

/// Shorthand for constrained_crlb(fisher_info(...), pose).
CrlbResult crlb_at(const Deployment& deployment, std::size_t repeats, const Pose2& pose);

}  // namespace uwbpose
