#include "uwbpose/core.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/SVD>

namespace uwbpose {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::underdetermined_deployment: return "underdetermined deployment";
    case ErrorCode::singular_system: return "singular system";
    case ErrorCode::degenerate_projection: return "degenerate projection";
    case ErrorCode::degenerate_geometry: return "degenerate geometry";
    case ErrorCode::near_singularity: return "near singularity";
    case ErrorCode::unobservable: return "unobservable";
    case ErrorCode::insufficient_data: return "insufficient data";
    case ErrorCode::schema: return "schema error";
  }
  return "unknown";
}

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw Error(ErrorCode::invalid_argument, "angle must be finite");
  }
  if (theta >= 0.0 && theta < 2.0 * std::numbers::pi) return theta;
  // atan2 principal value, shifted into [0, 2pi)
  double a = std::atan2(std::sin(theta), std::cos(theta));
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  if (a >= 2.0 * std::numbers::pi) a = 0.0;
  return a;
}

RotMat2 rotation_matrix(double theta) {
  if (!std::isfinite(theta)) {
    throw Error(ErrorCode::invalid_argument, "rotation angle must be finite");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  RotMat2 r;
  r << c, -s, s, c;
  return r;
}

Pose2::Pose2(double theta, const Vec2& t) : theta_(normalize_angle(theta)), t_(t) {
  if (!t.allFinite()) throw Error(ErrorCode::invalid_argument, "translation must be finite");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::uls: return "uls";
    case Method::gn_uls: return "gn-uls";
    case Method::dac: return "dac";
    case Method::gn_dac: return "gn-dac";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  std::string key(name);
  for (auto& c : key) {
    if (c == '_') c = '-';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (key == "uls") return Method::uls;
  if (key == "gn-uls") return Method::gn_uls;
  if (key == "dac") return Method::dac;
  if (key == "gn-dac") return Method::gn_dac;
  throw Error(ErrorCode::invalid_argument, "unknown method '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> default_ids(char prefix, std::size_t count) {
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::size_t k = 0; k < count; ++k) ids.push_back(prefix + std::to_string(k));
  return ids;
}

}  // namespace

Deployment::Deployment(std::vector<Vec2> anchors, std::vector<Vec2> tags, Eigen::MatrixXd sigma,
                       Eigen::MatrixXd height_diff, std::vector<std::string> anchor_ids,
                       std::vector<std::string> tag_ids)
    : anchors_(std::move(anchors)),
      tags_(std::move(tags)),
      sigma_(std::move(sigma)),
      height_diff_(std::move(height_diff)),
      anchor_ids_(std::move(anchor_ids)),
      tag_ids_(std::move(tag_ids)) {
  const auto m = static_cast<Eigen::Index>(anchors_.size());
  const auto n = static_cast<Eigen::Index>(tags_.size());
  if (m == 0 || n == 0) {
    throw Error(ErrorCode::invalid_argument, "deployment needs at least one anchor and one tag");
  }
  for (const auto& a : anchors_) {
    if (!a.allFinite()) throw Error(ErrorCode::invalid_argument, "anchor position not finite");
  }
  for (const auto& s : tags_) {
    if (!s.allFinite()) throw Error(ErrorCode::invalid_argument, "tag position not finite");
  }
  if (sigma_.rows() != n || sigma_.cols() != m) {
    throw Error(ErrorCode::invalid_argument, "sigma must be tags x anchors");
  }
  if (!sigma_.allFinite() || (sigma_.array() <= 0.0).any()) {
    throw Error(ErrorCode::invalid_argument, "sigma entries must be finite and positive");
  }
  if (height_diff_.size() == 0) height_diff_ = Eigen::MatrixXd::Zero(n, m);
  if (height_diff_.rows() != n || height_diff_.cols() != m) {
    throw Error(ErrorCode::invalid_argument, "height differences must be tags x anchors");
  }
  if (!height_diff_.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "height differences must be finite");
  }
  if (anchor_ids_.empty()) anchor_ids_ = default_ids('A', anchors_.size());
  if (tag_ids_.empty()) tag_ids_ = default_ids('T', tags_.size());
  if (anchor_ids_.size() != anchors_.size() || tag_ids_.size() != tags_.size()) {
    throw Error(ErrorCode::invalid_argument, "id list length does not match positions");
  }
}

Deployment Deployment::with_uniform_sigma(std::vector<Vec2> anchors, std::vector<Vec2> tags,
                                          double sigma) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(tags.size()),
                                                static_cast<Eigen::Index>(anchors.size()), sigma);
  return Deployment(std::move(anchors), std::move(tags), std::move(s));
}

std::optional<std::size_t> Deployment::find_anchor(std::string_view id) const {
  for (std::size_t m = 0; m < anchor_ids_.size(); ++m) {
    if (anchor_ids_[m] == id) return m;
  }
  return std::nullopt;
}

std::optional<std::size_t> Deployment::find_tag(std::string_view id) const {
  for (std::size_t i = 0; i < tag_ids_.size(); ++i) {
    if (tag_ids_[i] == id) return i;
  }
  return std::nullopt;
}

Deployment Deployment::with_sigma(Eigen::MatrixXd sigma) const {
  return Deployment(anchors_, tags_, std::move(sigma), height_diff_, anchor_ids_, tag_ids_);
}

Deployment Deployment::with_anchors(std::vector<Vec2> anchors, Eigen::MatrixXd sigma,
                                    Eigen::MatrixXd height_diff) const {
  return Deployment(std::move(anchors), tags_, std::move(sigma), std::move(height_diff), {},
                    tag_ids_);
}

Deployment Deployment::with_tags(std::vector<Vec2> tags) const {
  return Deployment(anchors_, std::move(tags), sigma_, height_diff_, anchor_ids_, tag_ids_);
}

double predicted_range(const Deployment& deployment, const Pose2& pose, std::size_t tag,
                       std::size_t anchor) {
  const Vec2 diff = deployment.anchor(anchor) - pose.transform(deployment.tag(tag));
  const double dh = deployment.height_diff(tag, anchor);
  return std::sqrt(diff.squaredNorm() + dh * dh);
}

RangeBatch::RangeBatch(std::shared_ptr<const Deployment> deployment, std::size_t repeats,
                       std::vector<double> ranges, RangeCheck check)
    : deployment_(std::move(deployment)), repeats_(repeats), ranges_(std::move(ranges)) {
  if (!deployment_) throw Error(ErrorCode::invalid_argument, "range batch needs a deployment");
  if (repeats_ < 1) throw Error(ErrorCode::invalid_argument, "repeat count must be >= 1");
  const std::size_t expected = deployment_->tag_count() * deployment_->anchor_count() * repeats_;
  if (ranges_.size() != expected) {
    throw Error(ErrorCode::invalid_argument,
                "range batch holds " + std::to_string(ranges_.size()) + " values, expected " +
                    std::to_string(expected));
  }
  for (double d : ranges_) {
    if (!std::isfinite(d)) throw Error(ErrorCode::invalid_argument, "ranges must be finite");
    if (check == RangeCheck::non_negative && d < 0.0) {
      throw Error(ErrorCode::invalid_argument, "ranges must be non-negative");
    }
  }
}

RangeBatch noiseless_batch(std::shared_ptr<const Deployment> deployment, const Pose2& pose,
                           std::size_t repeats) {
  const auto& dep = *deployment;
  std::vector<double> d;
  d.reserve(dep.tag_count() * dep.anchor_count() * repeats);
  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const double r = predicted_range(dep, pose, i, m);
      for (std::size_t k = 0; k < repeats; ++k) d.push_back(r);
    }
  }
  return RangeBatch(std::move(deployment), repeats, std::move(d));
}

double EstimateReport::total_microseconds() const {
  double total = 0.0;
  for (const auto& s : timings) total += s.microseconds;
  return total;
}

const char* to_string(ObservabilityFailure failure) {
  switch (failure) {
    case ObservabilityFailure::too_few_anchors: return "fewer than three anchors";
    case ObservabilityFailure::collinear_anchors: return "anchors are collinear";
    case ObservabilityFailure::too_few_tags: return "fewer than two tags";
    case ObservabilityFailure::tags_collinear_with_origin:
      return "tags are collinear with the body-frame origin";
  }
  return "unknown";
}

std::string ObservabilityVerdict::describe() const {
  if (observable()) return "observable";
  std::ostringstream out;
  out << "not observable:";
  for (std::size_t k = 0; k < failures.size(); ++k) {
    out << (k == 0 ? " " : "; ") << to_string(failures[k]);
  }
  return out.str();
}

namespace {

bool rank_below_two(const Eigen::Matrix2Xd& points) {
  Eigen::JacobiSVD<Eigen::Matrix2Xd> svd(points);
  const auto sv = svd.singularValues();
  return sv(0) == 0.0 || sv(1) < kCollinearityTolerance * sv(0);
}

}  // namespace

ObservabilityVerdict check_observability(const Deployment& deployment) {
  ObservabilityVerdict verdict;
  const auto m = static_cast<Eigen::Index>(deployment.anchor_count());
  const auto n = static_cast<Eigen::Index>(deployment.tag_count());

  if (m < 3) {
    verdict.failures.push_back(ObservabilityFailure::too_few_anchors);
  } else {
    Eigen::Matrix2Xd a(2, m);
    for (Eigen::Index k = 0; k < m; ++k) a.col(k) = deployment.anchor(static_cast<std::size_t>(k));
    a.colwise() -= a.rowwise().mean();
    if (rank_below_two(a)) verdict.failures.push_back(ObservabilityFailure::collinear_anchors);
  }

  if (n < 2) {
    verdict.failures.push_back(ObservabilityFailure::too_few_tags);
  } else {
    // The line must pass through the body origin, so the tag matrix is not centered.
    Eigen::Matrix2Xd s(2, n);
    for (Eigen::Index k = 0; k < n; ++k) s.col(k) = deployment.tag(static_cast<std::size_t>(k));
    if (rank_below_two(s)) {
      verdict.failures.push_back(ObservabilityFailure::tags_collinear_with_origin);
    }
  }
  return verdict;
}

double ml_cost(const RangeBatch& batch, const Pose2& pose) {
  const auto& dep = batch.deployment();
  const std::size_t reps = batch.repeats();
  double cost = 0.0;
  for (std::size_t i = 0; i < dep.tag_count(); ++i) {
    for (std::size_t m = 0; m < dep.anchor_count(); ++m) {
      const double g = predicted_range(dep, pose, i, m);
      const double w = 1.0 / (dep.sigma(i, m) * dep.sigma(i, m));
      const std::size_t base = batch.index(i, m, 0);
      double acc = 0.0;
      for (std::size_t k = 0; k < reps; ++k) {
        const double r = batch.ranges()[base + k] - g;
        acc += r * r;
      }
      cost += w * acc;
    }
  }
  return cost;
}

double chordal_rmse(std::span<const RotMat2> estimates, const RotMat2& truth) {
  if (estimates.empty()) {
    throw Error(ErrorCode::invalid_argument, "chordal RMSE of an empty list");
  }
  double acc = 0.0;
  for (const auto& r : estimates) acc += (r - truth).squaredNorm();
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

}  // namespace uwbpose
