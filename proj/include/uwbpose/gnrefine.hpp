#pragma once

#include <Eigen/Core>

#include "uwbpose/core.hpp"
#include "uwbpose/linstage.hpp"

namespace uwbpose {

/// Predicted ranges under this floor (meters) abort the step.
inline constexpr double kProximityFloor = 1e-6;

/// Linearization of the range model at an initial pose. Rows follow the
/// RangeBatch storage order; Jacobian columns are (d/dtheta, d/dtx, d/dty).
struct GnWorkspace {
  Eigen::Matrix<double, Eigen::Dynamic, 3> jacobian;
  Eigen::VectorXd predicted;  ///< sqrt(||a - R s - t||^2 + dh^2)
  Eigen::VectorXd weights;    ///< 1 / sigma^2
};

GnWorkspace build_gn_workspace(const RangeBatch& batch, const Pose2& init);

/// Weighted least-squares update (dtheta, dtx, dty) of one Gauss-Newton step.
Eigen::Vector3d gn_update(const RangeBatch& batch, const Pose2& init);

/// One Gauss-Newton step on the ML objective starting from `init`.
Pose2 gn_step(const RangeBatch& batch, const Pose2& init);

/// ULS followed by exactly one Gauss-Newton step.
EstimateReport estimate_gn_uls(const RangeBatch& batch, const EstimateOptions& options = {});

Pose2 apply_yaw_offset(const Pose2& pose, double offset);

}  // namespace uwbpose
