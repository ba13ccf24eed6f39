#include "uwbpose/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace uwbpose {

std::map<StreamKey, std::vector<std::size_t>> split_streams(const RangeLog& log) {
  std::map<StreamKey, std::vector<std::size_t>> streams;
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& r = log.records[k];
    auto& idx = streams[{r.anchor, r.tag}];
    if (!idx.empty() && log.records[idx.back()].t > r.t) {
      throw Error(ErrorCode::invalid_argument,
                  "timestamps decrease in stream " + r.anchor + "/" + r.tag);
    }
    idx.push_back(k);
  }
  return streams;
}

std::vector<bool> flag_outliers(std::span<const double> values, const RejectionParams& params,
                                double frequency) {
  if (params.window < 1) throw Error(ErrorCode::invalid_argument, "window must be >= 1");
  if (!(params.v_max > 0.0)) throw Error(ErrorCode::invalid_argument, "v_max must be positive");
  if (!(frequency > 0.0)) throw Error(ErrorCode::invalid_argument, "frequency must be positive");

  const std::size_t k = params.window;
  const double margin =
      static_cast<double>(k) * params.v_max / frequency + params.error_bound;
  std::vector<bool> flags(values.size(), false);
  for (std::size_t t = k; t < values.size(); ++t) {
    const double window_min = *std::min_element(values.begin() + static_cast<long>(t - k),
                                                values.begin() + static_cast<long>(t));
    flags[t] = values[t] > window_min + margin;
  }
  return flags;
}

std::vector<double> fill_flagged(std::span<const double> times, std::span<const double> values,
                                 const std::vector<bool>& flags) {
  std::vector<double> out(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t prev = n;  // last unflagged index, n when none yet
  for (std::size_t t = 0; t < n; ++t) {
    if (!flags[t]) {
      prev = t;
      continue;
    }
    std::size_t next = t + 1;
    while (next < n && flags[next]) ++next;
    if (prev < n && next < n) {
      const double span = times[next] - times[prev];
      const double w = span > 0.0 ? (times[t] - times[prev]) / span : 0.0;
      out[t] = (1.0 - w) * values[prev] + w * values[next];
    } else if (prev < n) {
      out[t] = values[prev];
    } else if (next < n) {
      out[t] = values[next];
    }
  }
  return out;
}

RejectionResult reject_outliers(const RangeLog& log, const RejectionParams& params) {
  RejectionResult result{log, std::vector<bool>(log.records.size(), false)};
  for (const auto& [key, idx] : split_streams(log)) {
    std::vector<double> times, values;
    times.reserve(idx.size());
    values.reserve(idx.size());
    for (std::size_t k : idx) {
      times.push_back(log.records[k].t);
      values.push_back(log.records[k].range);
    }
    const auto flags = flag_outliers(values, params, log.frequency);
    const auto filled = fill_flagged(times, values, flags);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      result.rejected[idx[j]] = flags[j];
      result.log.records[idx[j]].range = filled[j];
    }
  }
  return result;
}

BiasModel BiasModel::identity() {
  BiasModel model;
  model.sigma = 0.05;
  return model;
}

const LinearBias& BiasModel::for_pair(const std::string& anchor, const std::string& tag) const {
  const auto it = per_pair.find({anchor, tag});
  return it == per_pair.end() ? pooled : it->second;
}

GroundTruthLog::GroundTruthLog(std::vector<GroundTruthRecord> records)
    : records_(std::move(records)) {
  for (std::size_t k = 1; k < records_.size(); ++k) {
    if (!(records_[k].t > records_[k - 1].t)) {
      throw Error(ErrorCode::invalid_argument, "ground-truth timestamps must strictly increase");
    }
  }
}

std::optional<Pose2> GroundTruthLog::interpolate(double t) const {
  if (records_.empty() || t < records_.front().t || t > records_.back().t) return std::nullopt;
  const auto it = std::lower_bound(records_.begin(), records_.end(), t,
                                   [](const GroundTruthRecord& r, double v) { return r.t < v; });
  if (it->t == t) return it->pose;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  double dtheta = hi.pose.theta() - lo.pose.theta();
  if (dtheta > std::numbers::pi) dtheta -= 2.0 * std::numbers::pi;
  if (dtheta < -std::numbers::pi) dtheta += 2.0 * std::numbers::pi;
  return Pose2(lo.pose.theta() + w * dtheta, (1.0 - w) * lo.pose.t() + w * hi.pose.t());
}

namespace {

struct LineFit {
  LinearBias bias;
  double residual_rms = 0.0;
  double residual_sigma = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
};

// Ordinary least squares of y on (x, 1).
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (!(sxx > 0.0)) {
    throw Error(ErrorCode::insufficient_data, "calibration distances do not vary");
  }
  LineFit fit;
  fit.bias.slope = sxy / sxx;
  fit.bias.intercept = my - fit.bias.slope * mx;
  double ssr = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - fit.bias.slope * x[k] - fit.bias.intercept;
    ssr += r * r;
  }
  fit.residual_rms = std::sqrt(ssr / n);
  fit.residual_sigma = std::sqrt(ssr / (n - 2.0));
  fit.slope_stderr = fit.residual_sigma / std::sqrt(sxx);
  fit.intercept_stderr = fit.residual_sigma * std::sqrt(1.0 / n + mx * mx / sxx);
  return fit;
}

constexpr std::size_t kMinCalibrationSamples = 10;

}  // namespace

BiasModel calibrate_bias(const RangeLog& log, const GroundTruthLog& truth,
                         const Deployment& deployment, BiasGranularity granularity) {
  std::vector<double> x, y;
  std::map<StreamKey, std::pair<std::vector<double>, std::vector<double>>> by_pair;
  for (const auto& r : log.records) {
    const auto pose = truth.interpolate(r.t);
    if (!pose) continue;
    const auto m = deployment.find_anchor(r.anchor);
    const auto i = deployment.find_tag(r.tag);
    if (!m) throw Error(ErrorCode::schema, "unknown anchor id '" + r.anchor + "'");
    if (!i) throw Error(ErrorCode::schema, "unknown tag id '" + r.tag + "'");
    const double d_true = predicted_range(deployment, *pose, *i, *m);
    x.push_back(d_true);
    y.push_back(r.range - d_true);
    if (granularity == BiasGranularity::per_pair) {
      auto& [px, py] = by_pair[{r.anchor, r.tag}];
      px.push_back(d_true);
      py.push_back(r.range - d_true);
    }
  }
  if (x.size() < kMinCalibrationSamples) {
    throw Error(ErrorCode::insufficient_data,
                "calibration needs at least 10 range samples overlapping the ground truth, got " +
                    std::to_string(x.size()));
  }

  const LineFit fit = fit_line(x, y);
  BiasModel model;
  model.pooled = fit.bias;
  model.residual_rms = fit.residual_rms;
  model.sigma = std::max(fit.residual_sigma, kMinSigma);
  model.slope_stderr = fit.slope_stderr;
  model.intercept_stderr = fit.intercept_stderr;
  model.samples = x.size();
  for (const auto& [key, xy] : by_pair) {
    if (xy.first.size() < kMinCalibrationSamples) continue;
    try {
      model.per_pair[key] = fit_line(xy.first, xy.second).bias;
    } catch (const Error&) {
      // constant distance in this stream: keep the pooled model for it
    }
  }
  return model;
}

SigmaEstimate estimate_sigma(const RangeLog& log, double t_begin, double t_end) {
  std::map<StreamKey, std::vector<double>> windowed;
  for (const auto& r : log.records) {
    if (r.t >= t_begin && r.t <= t_end) windowed[{r.anchor, r.tag}].push_back(r.range);
  }
  if (windowed.empty()) {
    throw Error(ErrorCode::insufficient_data, "no range samples inside the quiescent window");
  }
  SigmaEstimate est;
  double sum_var = 0.0;
  for (const auto& [key, v] : windowed) {
    if (v.size() < 30) {
      throw Error(ErrorCode::insufficient_data, "stream " + key.anchor + "/" + key.tag +
                                                    " has only " + std::to_string(v.size()) +
                                                    " samples in the quiescent window");
    }
    double mean = 0.0;
    for (double d : v) mean += d;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double d : v) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(v.size() - 1);
    est.per_stream[key] = std::sqrt(var);
    sum_var += var;
  }
  est.pooled = std::sqrt(sum_var / static_cast<double>(windowed.size()));
  return est;
}

namespace {

struct Stream {
  std::size_t tag;
  std::size_t anchor;
  std::vector<double> times;
  std::vector<double> values;
};

constexpr double kTimeSnap = 1e-9;

std::optional<double> sample_stream(const Stream& s, double t, double horizon) {
  const auto it = std::upper_bound(s.times.begin(), s.times.end(), t);
  const auto next = static_cast<std::size_t>(it - s.times.begin());
  if (next > 0 && t - s.times[next - 1] <= kTimeSnap) return s.values[next - 1];
  if (next < s.times.size() && s.times[next] - t <= kTimeSnap) return s.values[next];
  if (next == 0 || next == s.times.size()) return std::nullopt;
  const std::size_t prev = next - 1;
  const double span = s.times[next] - s.times[prev];
  if (span > horizon) return std::nullopt;
  const double w = (t - s.times[prev]) / span;
  return (1.0 - w) * s.values[prev] + w * s.values[next];
}

}  // namespace

std::vector<Epoch> align_and_batch(const RangeLog& log, const BiasModel& bias,
                                   std::shared_ptr<const Deployment> deployment,
                                   const EpochPolicy& policy) {
  if (!deployment) throw Error(ErrorCode::invalid_argument, "alignment needs a deployment");
  if (!(log.frequency > 0.0)) throw Error(ErrorCode::invalid_argument, "frequency must be positive");
  const auto& dep = *deployment;
  const std::size_t n_tags = dep.tag_count();
  const std::size_t n_anchors = dep.anchor_count();

  std::vector<Stream> streams;
  std::vector<int> slot(n_tags * n_anchors, -1);
  for (const auto& [key, idx] : split_streams(log)) {
    const auto m = dep.find_anchor(key.anchor);
    const auto i = dep.find_tag(key.tag);
    if (!m) throw Error(ErrorCode::schema, "unknown anchor id '" + key.anchor + "'");
    if (!i) throw Error(ErrorCode::schema, "unknown tag id '" + key.tag + "'");
    const LinearBias& model = bias.for_pair(key.anchor, key.tag);
    Stream s{*i, *m, {}, {}};
    for (std::size_t k : idx) {
      s.times.push_back(log.records[k].t);
      s.values.push_back(model.debias(log.records[k].range));
    }
    slot[*i * n_anchors + *m] = static_cast<int>(streams.size());
    streams.push_back(std::move(s));
  }

  std::vector<Epoch> epochs;
  if (std::find(slot.begin(), slot.end(), -1) != slot.end()) return epochs;

  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  for (const auto& s : streams) {
    start = std::max(start, s.times.front());
    end = std::min(end, s.times.back());
  }
  const double rate = policy.rate > 0.0 ? policy.rate : log.frequency;
  const double horizon = policy.max_gap_periods / log.frequency;

  for (std::size_t k = 0;; ++k) {
    const double t = start + static_cast<double>(k) / rate;
    if (t > end + kTimeSnap) break;
    std::vector<double> ranges(n_tags * n_anchors);
    bool complete = true;
    for (std::size_t i = 0; i < n_tags && complete; ++i) {
      for (std::size_t m = 0; m < n_anchors; ++m) {
        const auto v = sample_stream(streams[static_cast<std::size_t>(slot[i * n_anchors + m])],
                                     t, horizon);
        if (!v || !std::isfinite(*v) || *v < 0.0) {
          complete = false;
          break;
        }
        ranges[i * n_anchors + m] = *v;
      }
    }
    if (complete) epochs.push_back({t, RangeBatch(deployment, 1, std::move(ranges))});
  }
  return epochs;
}

}  // namespace uwbpose
