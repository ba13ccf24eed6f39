#include "uwbpose/gnrefine.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "report.hpp"

namespace uwbpose {

GnWorkspace build_gn_workspace(const RangeBatch& batch, const Pose2& init) {
  const auto& dep = batch.deployment();
  const std::size_t reps = batch.repeats();
  const RotMat2 rot = init.rotation();
  const auto n = static_cast<Eigen::Index>(batch.size());

  GnWorkspace ws;
  ws.jacobian.resize(n, 3);
  ws.predicted.resize(n);
  ws.weights.resize(n);

  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    const Vec2& s = dep.tag(i);
    // dR/dtheta * s = R * J * s, J the quarter turn.
    const Vec2 ds = rot * Vec2(-s.y(), s.x());
    const Vec2 placed = rot * s + init.t();
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const Vec2 f = dep.anchor(m) - placed;
      const double dh = dep.height_diff(i, m);
      const double g = std::sqrt(f.squaredNorm() + dh * dh);
      if (!(g >= kProximityFloor)) {
        throw NearSingularityError("predicted range below proximity floor for tag " +
                                       dep.tag_ids()[i] + ", anchor " + dep.anchor_ids()[m],
                                   i, m);
      }
      const Eigen::RowVector3d row(-f.dot(ds) / g, -f.x() / g, -f.y() / g);
      const double w = 1.0 / (dep.sigma(i, m) * dep.sigma(i, m));
      const std::size_t base = batch.index(i, m, 0);
      for (std::size_t k = 0; k < reps; ++k) {
        const auto r = static_cast<Eigen::Index>(base + k);
        ws.jacobian.row(r) = row;
        ws.predicted(r) = g;
        ws.weights(r) = w;
      }
    }
  }
  return ws;
}

Eigen::Vector3d gn_update(const RangeBatch& batch, const Pose2& init) {
  const auto& dep = batch.deployment();
  const std::size_t reps = batch.repeats();
  const RotMat2 rot = init.rotation();
  const auto d = batch.ranges();

  // Rows repeat over T, so accumulate per (tag, anchor) instead of forming J.
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    const Vec2& s = dep.tag(i);
    const Vec2 ds = rot * Vec2(-s.y(), s.x());
    const Vec2 placed = rot * s + init.t();
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const Vec2 f = dep.anchor(m) - placed;
      const double dh = dep.height_diff(i, m);
      const double g = std::sqrt(f.squaredNorm() + dh * dh);
      if (!(g >= kProximityFloor)) {
        throw NearSingularityError("predicted range below proximity floor for tag " +
                                       dep.tag_ids()[i] + ", anchor " + dep.anchor_ids()[m],
                                   i, m);
      }
      const Eigen::Vector3d row(-f.dot(ds) / g, -f.x() / g, -f.y() / g);
      const double w = 1.0 / (dep.sigma(i, m) * dep.sigma(i, m));
      const std::size_t base = batch.index(i, m, 0);
      double residual = 0.0;
      for (std::size_t k = 0; k < reps; ++k) residual += d[base + k] - g;
      normal.noalias() += (w * static_cast<double>(reps)) * row * row.transpose();
      rhs += (w * residual) * row;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(normal, Eigen::EigenvaluesOnly);
  const auto ev = eig.eigenvalues();
  if (!(ev(2) > 0.0) || ev(0) <= 1e-13 * ev(2)) {
    throw Error(ErrorCode::degenerate_geometry, "Gauss-Newton normal matrix is singular");
  }
  return normal.ldlt().solve(rhs);
}

Pose2 gn_step(const RangeBatch& batch, const Pose2& init) {
  const Eigen::Vector3d delta = gn_update(batch, init);
  return Pose2(init.theta() + delta(0), init.t() + delta.tail<2>());
}

Pose2 apply_yaw_offset(const Pose2& pose, double offset) {
  if (offset == 0.0) return pose;
  return Pose2(pose.theta() + offset, pose.t());
}

EstimateReport estimate_gn_uls(const RangeBatch& batch, const EstimateOptions& options) {
  std::vector<StageTiming> timings;
  detail::StageClock clock;
  const LinearSystem sys = build_compact_system(batch);
  const UlsSolution sol = solve_uls(sys);
  const Pose2 initial(project_so2(sol.rotation()), sol.t);
  clock.lap("uls", timings);
  const Pose2 refined = gn_step(batch, initial);
  clock.lap("gauss_newton", timings);
  return detail::finish_report(batch, refined, Method::gn_uls, options, std::move(timings));
}

}  // namespace uwbpose
