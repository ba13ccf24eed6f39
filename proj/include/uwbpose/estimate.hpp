#pragma once

#include "uwbpose/core.hpp"
#include "uwbpose/dac.hpp"
#include "uwbpose/gnrefine.hpp"
#include "uwbpose/linstage.hpp"

namespace uwbpose {

/// Runs the estimator named by `method`.
EstimateReport estimate(const RangeBatch& batch, Method method,
                        const EstimateOptions& options = {});

}  // namespace uwbpose
