#include "uwbpose/dac.hpp"

#include <Eigen/QR>

#include "report.hpp"
#include "uwbpose/gnrefine.hpp"

namespace uwbpose {

namespace {

struct TagFix {
  Vec2 position;
  double residual_norm;
};

TagFix localize_one(const RangeBatch& batch, std::size_t tag) {
  const auto& dep = batch.deployment();
  if (tag >= dep.tag_count()) throw Error(ErrorCode::invalid_argument, "tag index out of range");
  const std::size_t mt = batch.effective_anchor_count();
  if (mt < 3) {
    throw Error(ErrorCode::underdetermined_deployment,
                "tag localization needs at least 3 effective anchors");
  }
  Vec2 anchor_mean = Vec2::Zero();
  for (const auto& a : dep.anchors()) anchor_mean += a;
  anchor_mean /= static_cast<double>(dep.anchor_count());

  Eigen::MatrixX2d design(static_cast<Eigen::Index>(mt), 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(mt));
  const auto d = batch.ranges();
  Eigen::Index row = 0;
  for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
    const Vec2& a = dep.anchor(m);
    const double sig = dep.sigma(tag, m);
    const double dh = dep.height_diff(tag, m);
    const double offset = a.squaredNorm() + sig * sig + dh * dh;
    const Eigen::RowVector2d r = -2.0 * (a - anchor_mean).transpose();
    const std::size_t base = batch.index(tag, m, 0);
    for (std::size_t k = 0; k < batch.repeats(); ++k, ++row) {
      design.row(row) = r;
      rhs(row) = d[base + k] * d[base + k] - offset;
    }
  }
  rhs.array() -= rhs.mean();

  Eigen::ColPivHouseholderQR<Eigen::MatrixX2d> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 2) {
    const auto rank = static_cast<int>(qr.rank());
    throw SingularSystemError("anchor geometry cannot localize tag " + dep.tag_ids()[tag], rank);
  }
  const Vec2 s = qr.solve(rhs);
  return {s, (rhs - design * s).norm()};
}

}  // namespace

Vec2 localize_tag(const RangeBatch& batch, std::size_t tag) {
  return localize_one(batch, tag).position;
}

TagFixes localize_tags(const RangeBatch& batch) {
  TagFixes fixes;
  for (std::size_t i = 0; i < batch.tag_count(); ++i) {
    const TagFix f = localize_one(batch, i);
    fixes.positions.push_back(f.position);
    fixes.residual_norms.push_back(f.residual_norm);
  }
  return fixes;
}

namespace detail {

UlsSolution solve_rigid_fit(std::span<const Vec2> fixes, std::span<const Vec2> tags_body) {
  if (fixes.size() != tags_body.size()) {
    throw Error(ErrorCode::invalid_argument, "fix count does not match tag count");
  }
  if (tags_body.size() < 2) {
    throw Error(ErrorCode::degenerate_geometry, "rigid fit needs at least two tags");
  }
  const auto n = static_cast<Eigen::Index>(tags_body.size());
  Eigen::Matrix<double, Eigen::Dynamic, 4> design(2 * n, 4);
  Eigen::VectorXd rhs(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2& s = tags_body[static_cast<std::size_t>(i)];
    const Vec2& fix = fixes[static_cast<std::size_t>(i)];
    if (!fix.allFinite()) throw Error(ErrorCode::invalid_argument, "tag fix not finite");
    design.row(2 * i) << -s.y(), s.x(), 1.0, 0.0;
    design.row(2 * i + 1) << s.x(), s.y(), 0.0, 1.0;
    rhs.segment<2>(2 * i) = fix;
  }
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 4>> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 4) {
    throw Error(ErrorCode::degenerate_geometry, "body-frame tags do not determine a rigid fit");
  }
  const Eigen::Vector4d x = qr.solve(rhs);
  return {x.head<2>(), x.tail<2>()};
}

}  // namespace detail

Pose2 fit_pose_from_fixes(const TagFixes& fixes, std::span<const Vec2> tags_body) {
  const UlsSolution sol = detail::solve_rigid_fit(fixes.positions, tags_body);
  return Pose2(project_so2(sol.rotation()), sol.t);
}

EstimateReport estimate_dac(const RangeBatch& batch, bool refine, const EstimateOptions& options) {
  std::vector<StageTiming> timings;
  detail::StageClock clock;
  const TagFixes fixes = localize_tags(batch);
  clock.lap("localize", timings);
  Pose2 pose = fit_pose_from_fixes(fixes, batch.deployment().tags());
  clock.lap("fit", timings);
  if (refine) {
    pose = gn_step(batch, pose);
    clock.lap("gauss_newton", timings);
  }
  return detail::finish_report(batch, pose, refine ? Method::gn_dac : Method::dac, options,
                               std::move(timings));
}

}  // namespace uwbpose
