#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "uwbpose/crlb.hpp"
#include "uwbpose/estimate.hpp"

using namespace uwbpose;

namespace {

double rel(const Mat6& a, const Mat6& b) { return (a - b).norm() / b.norm(); }

Eigen::Matrix<double, 6, 1> theta_vector(const Pose2& p) {
  const RotMat2 r = p.rotation();
  Eigen::Matrix<double, 6, 1> v;
  v << r(0, 0), r(1, 0), r(0, 1), r(1, 1), p.t().x(), p.t().y();
  return v;
}

}  // namespace

TEST(FisherInfo, LinearInRepeats) {
  const auto dep = oracle::three_anchor_deployment();
  const Pose2 truth = oracle::three_anchor_truth();
  const Mat6 f1 = fisher_info(*dep, 3, truth).information;
  const Mat6 f2 = fisher_info(*dep, 6, truth).information;
  EXPECT_LE(rel(f2, 2 * f1), 1e-12);
}

TEST(FisherInfo, MatchesFiniteDifferenceOuterProducts) {
  std::mt19937_64 rng(71);
  for (int k = 0; k < 40; ++k) {
    const auto c = oracle::random_case(rng, k % 2 == 1);
    const Mat6 mine = fisher_info(*c.deployment, 2, c.truth).information;
    const Mat6 fd = oracle::fd_fisher(*c.deployment, 2, c.truth);
    EXPECT_LE(rel(mine, fd), 1e-6);
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Mat6>(mine).eigenvalues();
    EXPECT_GE(eig.minCoeff(), -1e-9 * eig.maxCoeff());
  }
}

TEST(FisherInfo, MatchesExpectedNegativeLogLikelihoodHessian) {
  // Average the NLL over 1e5 draws per range, then take a central-difference
  // Hessian in Theta. Averaging reduces each term to the sample mean range.
  const auto dep = oracle::three_anchor_deployment();
  const Pose2 truth = oracle::three_anchor_truth();
  std::mt19937_64 rng(72);
  std::normal_distribution<double> z;
  const int draws = 100000;
  Eigen::MatrixXd mean_range(2, 3);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t m = 0; m < 3; ++m) {
      const double g = oracle::range(*dep, truth.theta(), truth.t(), i, m);
      double s = 0.0;
      for (int l = 0; l < draws; ++l) s += g + dep->sigma(i, m) * z(rng);
      mean_range(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = s / draws;
    }
  }
  auto nll = [&](const Eigen::Matrix<double, 6, 1>& th) {
    Eigen::Matrix2d r;
    r << th(0), th(2), th(1), th(3);
    double v = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t m = 0; m < 3; ++m) {
        const double g = (dep->anchor(m) - r * dep->tag(i) - th.tail<2>()).norm();
        const double e = mean_range(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) - g;
        v += e * e / (2 * dep->sigma(i, m) * dep->sigma(i, m));
      }
    }
    return v;
  };
  const Eigen::Matrix<double, 6, 1> th0 = theta_vector(truth);
  const double h = 1e-4;
  Mat6 hess;
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) {
      Eigen::Matrix<double, 6, 1> pp = th0, pm = th0, mp = th0, mm = th0;
      pp(a) += h; pp(b) += h;
      pm(a) += h; pm(b) -= h;
      mp(a) -= h; mp(b) += h;
      mm(a) -= h; mm(b) -= h;
      hess(a, b) = (nll(pp) - nll(pm) - nll(mp) + nll(mm)) / (4 * h * h);
    }
  }
  EXPECT_LE(rel(fisher_info(*dep, 1, truth).information, hess), 1e-4);
}

TEST(FisherInfo, GlobalOriginDoesNotMatterBodyOriginDoes) {
  std::mt19937_64 rng(73);
  for (int k = 0; k < 20; ++k) {
    const auto c = oracle::random_case(rng, k % 2 == 0);
    const Mat6 base = fisher_info(*c.deployment, 1, c.truth).information;
    const Vec2 shift(17.0, -4.0);
    std::vector<Vec2> anchors;
    for (const auto& a : c.deployment->anchors()) anchors.push_back(a + shift);
    const Deployment moved(anchors, c.deployment->tags(), c.deployment->sigma(),
                           c.deployment->height_diff());
    const Mat6 f = fisher_info(moved, 1, Pose2(c.truth.theta(), c.truth.t() + shift)).information;
    EXPECT_LE(rel(f, base), 1e-10);

    // Same physical layout, body origin moved by delta.
    const Vec2 delta(1.0, 2.0);
    std::vector<Vec2> tags;
    for (const auto& s : c.deployment->tags()) tags.push_back(s - delta);
    const Deployment rebased(c.deployment->anchors(), tags, c.deployment->sigma(),
                             c.deployment->height_diff());
    const Pose2 pose(c.truth.theta(), c.truth.t() + c.truth.rotation() * delta);
    EXPECT_GT(rel(fisher_info(rebased, 1, pose).information, base), 1e-3);
  }
}

TEST(ConstrainedCrlb, NullBasisIsOrthonormalAndAnnihilated) {
  std::mt19937_64 rng(74);
  std::uniform_real_distribution<double> u(0, 6.3);
  for (int k = 0; k < 100; ++k) {
    const RotMat2 r = rotation_matrix(u(rng));
    const auto df = so2_constraint_jacobian(r);
    const auto basis = so2_null_basis(r);
    EXPECT_LE((df * basis).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((basis.transpose() * basis - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ConstrainedCrlb, StructureAndScaling) {
  const auto dep = oracle::three_anchor_deployment();
  const Pose2 truth = oracle::three_anchor_truth();
  const auto c1 = crlb_at(*dep, 1, truth);
  const auto c4 = crlb_at(*dep, 4, truth);
  EXPECT_NEAR(c4.sqrt_trace / c1.sqrt_trace, 0.5, 1e-12);
  EXPECT_NEAR(c1.sqrt_trace * c1.sqrt_trace, c1.rotation_block_trace + c1.translation_block_trace,
              1e-12);
  EXPECT_LE((c1.bound * so2_constraint_jacobian(truth.rotation()).transpose()).cwiseAbs().maxCoeff(),
            1e-10);
  EXPECT_LE((c1.bound - c1.bound.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  // Positive on the tangent space.
  const auto basis = so2_null_basis(truth.rotation());
  const Eigen::Matrix3d reduced = basis.transpose() * c1.bound * basis;
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(reduced).eigenvalues().minCoeff(), 0.0);
}

TEST(ConstrainedCrlb, DoublingTagSpreadHalvesRotationBound) {
  const Pose2 truth = oracle::three_anchor_truth();
  const auto c1 = crlb_at(*oracle::three_anchor_deployment(1.0), 1, truth);
  const auto c2 = crlb_at(*oracle::three_anchor_deployment(2.0), 1, truth);
  const double ratio = std::sqrt(c1.rotation_block_trace / c2.rotation_block_trace);
  EXPECT_GE(ratio, 1.8);
  EXPECT_LE(ratio, 2.2);
}

TEST(ConstrainedCrlb, InvariantToRelabeling) {
  const auto dep = oracle::three_anchor_deployment();
  const Pose2 truth = oracle::three_anchor_truth();
  std::vector<Vec2> anchors{dep->anchor(2), dep->anchor(0), dep->anchor(1)};
  std::vector<Vec2> tags{dep->tag(1), dep->tag(0)};
  Eigen::MatrixXd sigma(2, 3);
  const int amap[3] = {2, 0, 1};
  for (int i = 0; i < 2; ++i) {
    for (int m = 0; m < 3; ++m) sigma(i, m) = dep->sigma(static_cast<std::size_t>(1 - i), static_cast<std::size_t>(amap[m]));
  }
  const Deployment relabeled(anchors, tags, sigma);
  EXPECT_LE(rel(crlb_at(relabeled, 1, truth).bound, crlb_at(*dep, 1, truth).bound), 1e-12);
}

TEST(ConstrainedCrlb, SingleTagAtBodyOriginIsUnobservable) {
  const Deployment dep = Deployment::with_uniform_sigma({{50, 0}, {50, 50}, {0, 50}}, {{0, 0}}, 0.1);
  try {
    crlb_at(dep, 1, Pose2(0.3, Vec2(10, 10)));
    FAIL() << "expected unobservable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unobservable);
  }
}

TEST(ConstrainedCrlb, CoincidentTagAndAnchorRejected) {
  const Deployment dep = Deployment::with_uniform_sigma({{0, 0}, {50, 0}, {0, 50}}, {{0, 0}, {1, 1}}, 0.1);
  EXPECT_THROW(fisher_info(dep, 1, Pose2(0.0, Vec2(0, 0))), Error);
}

TEST(ConstrainedCrlb, GnUlsEmpiricalCovarianceAttainsBound) {
  const auto dep = oracle::three_anchor_deployment();
  const Pose2 truth = oracle::three_anchor_truth();
  const std::size_t reps = 1000;
  const int trials = 1000;
  std::mt19937_64 rng(75);
  std::vector<Eigen::Matrix<double, 6, 1>> est;
  Eigen::Matrix<double, 6, 1> mean = Eigen::Matrix<double, 6, 1>::Zero();
  for (int l = 0; l < trials; ++l) {
    est.push_back(theta_vector(estimate(oracle::noisy_batch(dep, truth, reps, rng), Method::gn_uls).pose));
    mean += est.back();
  }
  mean /= trials;
  Mat6 cov = Mat6::Zero();
  for (const auto& e : est) cov += (e - mean) * (e - mean).transpose();
  cov /= trials - 1;
  const double ratio = cov.trace() / crlb_at(*dep, reps, truth).bound.trace();
  EXPECT_GE(ratio, 0.95);
  EXPECT_LE(ratio, 1.15);
}
