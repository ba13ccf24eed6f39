#include "uwbpose/linstage.hpp"

#include <cmath>

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "report.hpp"

namespace uwbpose {

Eigen::MatrixXd centering_projector(std::size_t size) {
  const auto m = static_cast<Eigen::Index>(size);
  return Eigen::MatrixXd::Identity(m, m) -
         Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(size));
}

namespace {

struct RowSource {
  Vec2 anchor_mean;
  std::size_t effective_anchors;
};

RowSource prepare(const RangeBatch& batch) {
  const auto& dep = batch.deployment();
  const std::size_t mt = batch.effective_anchor_count();
  if (mt < 3) {
    throw Error(ErrorCode::underdetermined_deployment,
                "the linear stage needs at least 3 effective anchors, got " + std::to_string(mt));
  }
  // Every anchor appears T times, so the mean over M_T columns is the mean over M.
  Vec2 mean = Vec2::Zero();
  for (const auto& a : dep.anchors()) mean += a;
  return {mean / static_cast<double>(dep.anchor_count()), mt};
}

Eigen::RowVector4d design_row(const Vec2& anchor, const Vec2& anchor_mean, const Vec2& s) {
  const Vec2 c = anchor - anchor_mean;
  return {-2.0 * c.dot(Vec2(-s.y(), s.x())), -2.0 * c.dot(s), -2.0 * c.x(), -2.0 * c.y()};
}

double rhs_offset(const Deployment& dep, std::size_t i, std::size_t m) {
  const double sig = dep.sigma(i, m);
  const double dh = dep.height_diff(i, m);
  return dep.anchor(m).squaredNorm() + sig * sig + dh * dh;
}

}  // namespace

LinearSystem build_linear_system(const RangeBatch& batch) {
  const RowSource src = prepare(batch);
  const auto& dep = batch.deployment();
  const std::size_t reps = batch.repeats();

  LinearSystem sys;
  sys.meta = {dep.tag_count(), src.effective_anchors, batch.size()};
  sys.design.resize(static_cast<Eigen::Index>(batch.size()), 4);
  sys.rhs.resize(static_cast<Eigen::Index>(batch.size()));

  const auto d = batch.ranges();
  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    double tag_sum = 0.0;
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const Eigen::RowVector4d row = design_row(dep.anchor(m), src.anchor_mean, dep.tag(i));
      const double offset = rhs_offset(dep, i, m);
      const std::size_t base = batch.index(i, m, 0);
      for (std::size_t k = 0; k < reps; ++k) {
        const auto r = static_cast<Eigen::Index>(base + k);
        const double v = d[base + k] * d[base + k] - offset;
        sys.rhs(r) = v;
        sys.design.row(r) = row;
        tag_sum += v;
      }
    }
    const double tag_mean = tag_sum / static_cast<double>(src.effective_anchors);
    const auto first = static_cast<Eigen::Index>(batch.index(i, 0, 0));
    sys.rhs.segment(first, static_cast<Eigen::Index>(src.effective_anchors)).array() -= tag_mean;
  }
  return sys;
}

LinearSystem build_compact_system(const RangeBatch& batch) {
  const RowSource src = prepare(batch);
  const auto& dep = batch.deployment();
  const std::size_t reps = batch.repeats();
  const auto pairs = static_cast<Eigen::Index>(dep.tag_count() * dep.anchor_count());
  const double scale = std::sqrt(static_cast<double>(reps));

  LinearSystem sys;
  sys.meta = {dep.tag_count(), src.effective_anchors, static_cast<std::size_t>(pairs)};
  sys.design.resize(pairs, 4);
  sys.rhs.resize(pairs);

  const auto d = batch.ranges();
  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    double tag_sum = 0.0;
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const auto r = static_cast<Eigen::Index>(i * dep.anchor_count() + m);
      const std::size_t base = batch.index(i, m, 0);
      double sum = 0.0;
      for (std::size_t k = 0; k < reps; ++k) sum += d[base + k] * d[base + k];
      const double mean = sum / static_cast<double>(reps) - rhs_offset(dep, i, m);
      sys.design.row(r) = scale * design_row(dep.anchor(m), src.anchor_mean, dep.tag(i));
      sys.rhs(r) = mean;
      tag_sum += mean;
    }
    const double tag_mean = tag_sum / static_cast<double>(dep.anchor_count());
    const auto first = static_cast<Eigen::Index>(i * dep.anchor_count());
    const auto count = static_cast<Eigen::Index>(dep.anchor_count());
    sys.rhs.segment(first, count) = scale * (sys.rhs.segment(first, count).array() - tag_mean);
  }
  return sys;
}

RotMat2 UlsSolution::rotation() const {
  RotMat2 r;
  r << y(1), -y(0), y(0), y(1);
  return r;
}

UlsSolution solve_uls(const LinearSystem& system) {
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 4>> qr(system.design);
  qr.setThreshold(1e-10);
  const auto rank = static_cast<int>(qr.rank());
  if (rank < 4) {
    throw SingularSystemError(
        "design matrix is rank deficient (rank " + std::to_string(rank) + " < 4)", rank);
  }
  const Eigen::Vector4d x = qr.solve(system.rhs);
  return {x.head<2>(), x.tail<2>()};
}

RotMat2 project_so2_matrix(const RotMat2& x) {
  if (!x.allFinite()) throw Error(ErrorCode::invalid_argument, "matrix must be finite");
  Eigen::JacobiSVD<RotMat2> svd(x, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(0) < 1e-300) {
    throw Error(ErrorCode::degenerate_projection, "cannot project a zero matrix onto SO(2)");
  }
  const RotMat2& u = svd.matrixU();
  const RotMat2& v = svd.matrixV();
  const double det = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return u * Eigen::Vector2d(1.0, det).asDiagonal() * v.transpose();
}

double project_so2(const RotMat2& x) {
  const RotMat2 w = project_so2_matrix(x);
  return normalize_angle(std::atan2(w(1, 0), w(0, 0)));
}

EstimateReport estimate_uls(const RangeBatch& batch, const EstimateOptions& options) {
  std::vector<StageTiming> timings;
  detail::StageClock clock;
  const LinearSystem sys = build_compact_system(batch);
  clock.lap("build", timings);
  const UlsSolution sol = solve_uls(sys);
  clock.lap("solve", timings);
  const double theta = project_so2(sol.rotation());
  clock.lap("project", timings);
  return detail::finish_report(batch, Pose2(theta, sol.t), Method::uls, options,
                               std::move(timings));
}

}  // namespace uwbpose
