#pragma once

#include <chrono>
#include <vector>

#include "uwbpose/core.hpp"
#include "uwbpose/linstage.hpp"

namespace uwbpose::detail {

class StageClock {
 public:
  StageClock() : last_(std::chrono::steady_clock::now()) {}

  /// Records the time since the previous lap under the given stage name.
  void lap(const char* stage, std::vector<StageTiming>& out) {
    const auto now = std::chrono::steady_clock::now();
    out.push_back({stage, std::chrono::duration<double, std::micro>(now - last_).count()});
    last_ = now;
  }

 private:
  std::chrono::steady_clock::time_point last_;
};

/// Applies the yaw offset, evaluates the ML cost and, if asked, the CRLB at the estimate.
EstimateReport finish_report(const RangeBatch& batch, const Pose2& pose, Method method,
                             const EstimateOptions& options, std::vector<StageTiming> timings);

/// Unconstrained solution of min sum ||fix_i - R(y) s_i - t||^2 over (y, t).
UlsSolution solve_rigid_fit(std::span<const Vec2> fixes, std::span<const Vec2> tags_body);

}  // namespace uwbpose::detail
