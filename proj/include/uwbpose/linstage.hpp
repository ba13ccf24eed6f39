#pragma once

// Closed-form first stage: the projected squared-range linear system, its
// unconstrained least-squares solution, and the projection onto SO(2).

#include <cstddef>

#include <Eigen/Core>

#include "uwbpose/core.hpp"

namespace uwbpose {

struct LinearSystemMeta {
  std::size_t tags = 0;
  std::size_t effective_anchors = 0;  ///< M_T
  std::size_t rows = 0;               ///< n = N * M_T
};

/// rhs ~= design * [y; t] with y = (sin theta, cos theta). Rows follow the
/// RangeBatch storage order (tag, anchor, repeat).
struct LinearSystem {
  Eigen::Matrix<double, Eigen::Dynamic, 4> design;
  Eigen::VectorXd rhs;
  LinearSystemMeta meta;
};

/// Dense I - 11^T / size. Only used to check properties; the builder never
/// materializes it.
Eigen::MatrixXd centering_projector(std::size_t size);

/// Requires M_T >= 3.
LinearSystem build_linear_system(const RangeBatch& batch);

/// One row per (tag, anchor): rows repeated over T are merged into sqrt(T)
/// times the row against the mean right-hand side. Same least-squares
/// solution and rank as build_linear_system, O(N M) memory.
LinearSystem build_compact_system(const RangeBatch& batch);

struct UlsSolution {
  Vec2 y;  ///< (sin, cos) estimate, not unit length in general
  Vec2 t;

  /// Gamma * y, the unconstrained rotation estimate.
  RotMat2 rotation() const;
};

/// Least squares through a rank-revealing QR. Throws SingularSystemError
/// carrying the numeric rank when it is below 4.
UlsSolution solve_uls(const LinearSystem& system);

/// Nearest proper rotation in Frobenius norm, as an angle in [0, 2pi).
double project_so2(const RotMat2& x);

/// U diag(1, det(U V^T)) V^T.
RotMat2 project_so2_matrix(const RotMat2& x);

struct EstimateOptions {
  bool attach_covariance = false;
  /// Constant added to the final yaw (radians), default 0.
  double yaw_offset = 0.0;
};

EstimateReport estimate_uls(const RangeBatch& batch, const EstimateOptions& options = {});

}  // namespace uwbpose
