#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "uwbpose/error.hpp"

namespace uwbpose {

using Vec2 = Eigen::Vector2d;
/// Plain 2x2 matrix. Used both for proper rotations and for the
/// unconstrained rotation estimate before it is projected onto SO(2).
using RotMat2 = Eigen::Matrix2d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Maps any finite angle into [0, 2*pi).
double normalize_angle(double theta);

/// [[cos, -sin], [sin, cos]]. Throws invalid_argument on non-finite input.
RotMat2 rotation_matrix(double theta);

/// Planar rigid-body pose: body-frame point p maps to R(theta) p + t.
class Pose2 {
 public:
  Pose2() = default;
  Pose2(double theta, const Vec2& t);

  double theta() const noexcept { return theta_; }
  const Vec2& t() const noexcept { return t_; }
  RotMat2 rotation() const { return rotation_matrix(theta_); }

  Vec2 transform(const Vec2& body_point) const { return rotation() * body_point + t_; }

 private:
  double theta_ = 0.0;
  Vec2 t_ = Vec2::Zero();
};

enum class Method { uls, gn_uls, dac, gn_dac };

std::string_view to_string(Method method);
/// Accepts "uls", "gn-uls", "dac", "gn-dac" (underscores also accepted).
Method parse_method(std::string_view name);

/// Anchors in the global frame, tags in the body frame, and the per
/// (tag, anchor) noise deviations and height differences. Immutable.
class Deployment {
 public:
  /// sigma and height_diff are tags x anchors. An empty height_diff means zero.
  /// Ids default to "A0".."A{M-1}" and "T0".."T{N-1}".
  Deployment(std::vector<Vec2> anchors, std::vector<Vec2> tags, Eigen::MatrixXd sigma,
             Eigen::MatrixXd height_diff = {}, std::vector<std::string> anchor_ids = {},
             std::vector<std::string> tag_ids = {});

  static Deployment with_uniform_sigma(std::vector<Vec2> anchors, std::vector<Vec2> tags,
                                       double sigma);

  std::size_t anchor_count() const noexcept { return anchors_.size(); }
  std::size_t tag_count() const noexcept { return tags_.size(); }

  const std::vector<Vec2>& anchors() const noexcept { return anchors_; }
  const std::vector<Vec2>& tags() const noexcept { return tags_; }
  const Vec2& anchor(std::size_t m) const { return anchors_[m]; }
  const Vec2& tag(std::size_t i) const { return tags_[i]; }

  const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
  const Eigen::MatrixXd& height_diff() const noexcept { return height_diff_; }
  double sigma(std::size_t tag, std::size_t anchor) const { return sigma_(tag, anchor); }
  double height_diff(std::size_t tag, std::size_t anchor) const {
    return height_diff_(tag, anchor);
  }

  const std::vector<std::string>& anchor_ids() const noexcept { return anchor_ids_; }
  const std::vector<std::string>& tag_ids() const noexcept { return tag_ids_; }
  std::optional<std::size_t> find_anchor(std::string_view id) const;
  std::optional<std::size_t> find_tag(std::string_view id) const;

  Deployment with_sigma(Eigen::MatrixXd sigma) const;
  Deployment with_anchors(std::vector<Vec2> anchors, Eigen::MatrixXd sigma,
                          Eigen::MatrixXd height_diff = {}) const;
  Deployment with_tags(std::vector<Vec2> tags) const;

 private:
  std::vector<Vec2> anchors_;
  std::vector<Vec2> tags_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd height_diff_;
  std::vector<std::string> anchor_ids_;
  std::vector<std::string> tag_ids_;
};

/// Noise-free range between anchor m and tag i at the given pose,
/// including the height difference.
double predicted_range(const Deployment& deployment, const Pose2& pose, std::size_t tag,
                       std::size_t anchor);

/// Measured ranges are rejected when negative; simulated ranges under the
/// Gaussian model may go below zero and only need to be finite.
enum class RangeCheck { non_negative, finite_only };

/// Ranges of one estimation problem. Repeated ranging is kept as a third
/// index: storage position is (tag * M + anchor) * T + repeat.
class RangeBatch {
 public:
  RangeBatch(std::shared_ptr<const Deployment> deployment, std::size_t repeats,
             std::vector<double> ranges, RangeCheck check = RangeCheck::non_negative);

  const Deployment& deployment() const noexcept { return *deployment_; }
  const std::shared_ptr<const Deployment>& deployment_ptr() const noexcept {
    return deployment_;
  }

  std::size_t repeats() const noexcept { return repeats_; }
  std::size_t tag_count() const noexcept { return deployment_->tag_count(); }
  std::size_t anchor_count() const noexcept { return deployment_->anchor_count(); }
  /// M_T = M * T.
  std::size_t effective_anchor_count() const noexcept { return anchor_count() * repeats_; }
  std::size_t size() const noexcept { return ranges_.size(); }

  std::size_t index(std::size_t tag, std::size_t anchor, std::size_t repeat) const noexcept {
    return (tag * anchor_count() + anchor) * repeats_ + repeat;
  }
  double range(std::size_t tag, std::size_t anchor, std::size_t repeat) const {
    return ranges_[index(tag, anchor, repeat)];
  }
  std::span<const double> ranges() const noexcept { return ranges_; }

 private:
  std::shared_ptr<const Deployment> deployment_;
  std::size_t repeats_;
  std::vector<double> ranges_;
};

/// Exact ranges for every (tag, anchor, repeat) at the given pose.
RangeBatch noiseless_batch(std::shared_ptr<const Deployment> deployment, const Pose2& pose,
                           std::size_t repeats);

struct StageTiming {
  std::string stage;
  double microseconds = 0.0;
};

struct EstimateReport {
  Pose2 pose;
  Method method = Method::uls;
  /// Constrained CRLB evaluated at the estimate, when requested.
  std::optional<Mat6> covariance;
  double residual_cost = 0.0;
  std::vector<StageTiming> timings;

  double total_microseconds() const;
};

enum class ObservabilityFailure {
  too_few_anchors,
  collinear_anchors,
  too_few_tags,
  tags_collinear_with_origin,
};

const char* to_string(ObservabilityFailure failure);

struct ObservabilityVerdict {
  std::vector<ObservabilityFailure> failures;

  bool observable() const noexcept { return failures.empty(); }
  std::string describe() const;
};

/// Relative singular-value threshold under which a point set counts as collinear.
inline constexpr double kCollinearityTolerance = 1e-9;

/// >= 3 non-collinear anchors and >= 2 tags not collinear with the body origin.
ObservabilityVerdict check_observability(const Deployment& deployment);

/// Weighted range-residual objective, sum (d - g)^2 / sigma^2.
double ml_cost(const RangeBatch& batch, const Pose2& pose);

/// sqrt(mean ||R_l - R_truth||_F^2).
double chordal_rmse(std::span<const RotMat2> estimates, const RotMat2& truth);

}  // namespace uwbpose
