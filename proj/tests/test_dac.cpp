#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "uwbpose/crlb.hpp"
#include "uwbpose/dac.hpp"
#include "uwbpose/estimate.hpp"

using namespace uwbpose;

namespace {

constexpr double kPi = std::numbers::pi;

double angle_gap(double a, double b) { return std::abs(std::remainder(a - b, 2 * kPi)); }

double fit_objective(const std::vector<Vec2>& fixes, const std::vector<Vec2>& body,
                     const RotMat2& r, const Vec2& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < fixes.size(); ++i) s += (fixes[i] - r * body[i] - t).squaredNorm();
  return s;
}

}  // namespace

TEST(LocalizeTag, NoiselessExact) {
  const auto dep = std::make_shared<const Deployment>(Deployment::with_uniform_sigma(
      {{50, 0}, {50, 50}, {0, 50}, {10, 5}}, {{3, 0}, {3, 3}}, 0.1));
  const Pose2 pose(0.4, Vec2(0, 22));
  const auto batch = noiseless_batch(dep, pose, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LT((localize_tag(batch, i) - pose.transform(dep->tag(i))).norm(), 1e-9);
  }
}

TEST(LocalizeTag, CollinearAnchorsRaise) {
  const auto dep = std::make_shared<const Deployment>(
      Deployment::with_uniform_sigma({{0, 0}, {1, 0}, {2, 0}}, {{3, 0}, {3, 3}}, 0.1));
  EXPECT_THROW(localize_tag(noiseless_batch(dep, Pose2(0.1, Vec2(4, 9)), 3), 0), SingularSystemError);
}

TEST(LocalizeTag, LargeSampleErrorNearPointBound) {
  const auto dep = std::make_shared<const Deployment>(
      oracle::three_anchor_deployment()->with_sigma(Eigen::MatrixXd::Constant(2, 3, 0.1)));
  const Pose2 truth = oracle::three_anchor_truth();
  const std::size_t reps = 10000;
  // Point Fisher information for tag 1 alone: sum T u u^T / (sigma^2), u unit bearing.
  const Vec2 p = truth.transform(dep->tag(1));
  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  for (std::size_t m = 0; m < 3; ++m) {
    const Vec2 u = (dep->anchor(m) - p).normalized();
    info += static_cast<double>(reps) * u * u.transpose() / (0.1 * 0.1);
  }
  const double bound = std::sqrt(info.inverse().trace());
  std::mt19937_64 rng(61);
  const Vec2 fix = localize_tag(oracle::noisy_batch(dep, truth, reps, rng), 1);
  EXPECT_LT((fix - p).norm(), 5 * bound);
}

TEST(FitPose, ExactFixesGiveExactPose) {
  std::mt19937_64 rng(62);
  for (int k = 0; k < 20; ++k) {
    const auto c = oracle::random_case(rng);
    TagFixes fixes;
    for (const auto& s : c.deployment->tags()) fixes.positions.push_back(c.truth.transform(s));
    const Pose2 pose = fit_pose_from_fixes(fixes, c.deployment->tags());
    EXPECT_LT(angle_gap(pose.theta(), c.truth.theta()), 1e-9);
    EXPECT_LT((pose.t() - c.truth.t()).norm(), 1e-9);
  }
}

TEST(FitPose, CommonOffsetMovesTranslationOnly) {
  const std::vector<Vec2> body{{3, 0}, {3, 3}, {-1, 2}};
  const Pose2 truth(1.2, Vec2(5, 7));
  const Vec2 delta(0.3, -0.4);
  TagFixes fixes;
  for (const auto& s : body) fixes.positions.push_back(truth.transform(s) + delta);
  const Pose2 pose = fit_pose_from_fixes(fixes, body);
  EXPECT_LT(angle_gap(pose.theta(), truth.theta()), 1e-12);
  EXPECT_LT((pose.t() - truth.t() - delta).norm(), 1e-12);
}

TEST(FitPose, EquivariantUnderGlobalRotation) {
  std::mt19937_64 rng(63);
  std::normal_distribution<double> z;
  const std::vector<Vec2> body{{3, 0}, {3, 3}, {-2, 1}};
  for (int k = 0; k < 20; ++k) {
    TagFixes fixes;
    for (int i = 0; i < 3; ++i) fixes.positions.push_back(Vec2(10 + 3 * z(rng), 20 + 3 * z(rng)));
    const double phi = 0.3 * k;
    const Vec2 shift(z(rng), z(rng));
    TagFixes moved;
    for (const auto& p : fixes.positions) moved.positions.push_back(rotation_matrix(phi) * p + shift);
    const Pose2 a = fit_pose_from_fixes(fixes, body);
    const Pose2 b = fit_pose_from_fixes(moved, body);
    EXPECT_LT(angle_gap(b.theta(), a.theta() + phi), 1e-9);
    EXPECT_LT((b.t() - (rotation_matrix(phi) * a.t() + shift)).norm(), 1e-9);
  }
}

TEST(FitPose, BeatsRandomSamplesOfTheLinearObjective) {
  // The closed form minimises sum ||p_i - G_i y - t||^2 over unconstrained (y, t).
  std::mt19937_64 rng(64);
  std::normal_distribution<double> z;
  const std::vector<Vec2> body{{3, 0}, {3, 3}, {-2, 1}};
  std::vector<Vec2> fixes;
  for (int i = 0; i < 3; ++i) fixes.push_back(Vec2(10 + 2 * z(rng), 20 + 2 * z(rng)));
  // Unconstrained minimiser via the normal equations, written out here.
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b = Eigen::Vector4d::Zero();
  for (std::size_t i = 0; i < 3; ++i) {
    Eigen::Matrix<double, 2, 4> g;
    g << -body[i].y(), body[i].x(), 1, 0, body[i].x(), body[i].y(), 0, 1;
    a += g.transpose() * g;
    b += g.transpose() * fixes[i];
  }
  const Eigen::Vector4d x = a.ldlt().solve(b);
  auto obj = [&](const Eigen::Vector4d& v) {
    RotMat2 r;
    r << v(1), -v(0), v(0), v(1);
    return fit_objective(fixes, body, r, v.tail<2>());
  };
  const double best = obj(x);
  for (int s = 0; s < 10000; ++s) {
    Eigen::Vector4d v = x;
    for (int j = 0; j < 4; ++j) v(j) += (j < 2 ? 0.5 : 5.0) * z(rng);
    EXPECT_LE(best, obj(v) + 1e-12);
  }
  // The returned pose is the SO(2) projection of that minimiser.
  TagFixes tf;
  tf.positions = fixes;
  const Pose2 pose = fit_pose_from_fixes(tf, body);
  EXPECT_LT(angle_gap(pose.theta(), std::atan2(x(0), x(1))), 1e-9);
  EXPECT_LT((pose.t() - x.tail<2>()).norm(), 1e-9);
}

TEST(FitPose, NeedsTwoTags) {
  TagFixes one;
  one.positions.push_back(Vec2(1, 1));
  const std::vector<Vec2> body{{3, 0}};
  EXPECT_THROW(fit_pose_from_fixes(one, body), Error);
}

TEST(EstimateDac, NoiselessExactBothVariants) {
  std::mt19937_64 rng(65);
  for (int k = 0; k < 20; ++k) {
    const auto c = oracle::random_case(rng, k % 2 == 1);
    const auto batch = noiseless_batch(c.deployment, c.truth, 1);
    for (bool refine : {false, true}) {
      const auto report = estimate_dac(batch, refine);
      EXPECT_EQ(report.method, refine ? Method::gn_dac : Method::dac);
      EXPECT_LT(angle_gap(report.pose.theta(), c.truth.theta()), 1e-9);
      EXPECT_LT((report.pose.t() - c.truth.t()).norm(), 1e-9);
    }
  }
}

TEST(EstimateDac, RefinedComparableToGnUlsAndUnrefinedAboveBound) {
  const auto dep = oracle::three_anchor_deployment();
  const Pose2 truth = oracle::three_anchor_truth();
  const std::size_t reps = 1000;
  std::mt19937_64 rng(66);
  double gn_dac = 0, gn_uls = 0, dac = 0;
  const int trials = 300;
  auto err = [&](const Pose2& p) {
    return (p.rotation() - truth.rotation()).squaredNorm() + (p.t() - truth.t()).squaredNorm();
  };
  for (int l = 0; l < trials; ++l) {
    const auto batch = oracle::noisy_batch(dep, truth, reps, rng);
    gn_dac += err(estimate(batch, Method::gn_dac).pose);
    gn_uls += err(estimate(batch, Method::gn_uls).pose);
    dac += err(estimate(batch, Method::dac).pose);
  }
  const double bound = crlb_at(*dep, reps, truth).sqrt_trace;
  EXPECT_LT(std::abs(std::sqrt(gn_dac / trials) / std::sqrt(gn_uls / trials) - 1.0), 0.10);
  EXPECT_GT(std::sqrt(dac / trials), 1.1 * bound);
}
