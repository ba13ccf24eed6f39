#pragma once

// Divide and conquer: localize every tag in the global frame, then fit the
// rigid transform that best maps the body-frame tags onto those fixes.

#include <cstddef>
#include <span>
#include <vector>

#include "uwbpose/core.hpp"
#include "uwbpose/linstage.hpp"

namespace uwbpose {

struct TagFixes {
  std::vector<Vec2> positions;       ///< global-frame tag estimates
  std::vector<double> residual_norms;  ///< norm of the projected LS residual per tag
};

/// Projected squared-range least squares for a single tag. Needs M_T >= 3
/// and non-collinear anchors.
Vec2 localize_tag(const RangeBatch& batch, std::size_t tag);

TagFixes localize_tags(const RangeBatch& batch);

/// Closed-form rigid fit followed by projection of the rotation onto SO(2).
Pose2 fit_pose_from_fixes(const TagFixes& fixes, std::span<const Vec2> tags_body);

/// DAC, or GN-DAC when `refine` is set.
EstimateReport estimate_dac(const RangeBatch& batch, bool refine,
                            const EstimateOptions& options = {});

}  // namespace uwbpose
