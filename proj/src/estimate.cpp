#include "uwbpose/estimate.hpp"

#include "report.hpp"
#include "uwbpose/crlb.hpp"

namespace uwbpose {

namespace detail {

EstimateReport finish_report(const RangeBatch& batch, const Pose2& pose, Method method,
                             const EstimateOptions& options, std::vector<StageTiming> timings) {
  EstimateReport report;
  report.pose = apply_yaw_offset(pose, options.yaw_offset);
  report.method = method;
  report.timings = std::move(timings);
  report.residual_cost = ml_cost(batch, report.pose);
  if (options.attach_covariance) {
    report.covariance = crlb_at(batch.deployment(), batch.repeats(), report.pose).bound;
  }
  return report;
}

}  // namespace detail

EstimateReport estimate(const RangeBatch& batch, Method method, const EstimateOptions& options) {
  switch (method) {
    case Method::uls: return estimate_uls(batch, options);
    case Method::gn_uls: return estimate_gn_uls(batch, options);
    case Method::dac: return estimate_dac(batch, false, options);
    case Method::gn_dac: return estimate_dac(batch, true, options);
  }
  throw Error(ErrorCode::invalid_argument, "unknown method");
}

}  // namespace uwbpose
