#pragma once

// Real-data pipeline: sliding-window outlier rejection, linear range-bias
// calibration against ground truth, noise estimation from quiescent data and
// alignment of asynchronous streams into per-epoch range batches.

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwbpose/core.hpp"

namespace uwbpose {

struct RangeRecord {
  double t = 0.0;  ///< seconds
  std::string anchor;
  std::string tag;
  double range = 0.0;  ///< meters
};

struct RangeLog {
  std::vector<RangeRecord> records;
  double frequency = 100.0;  ///< ranging rate per stream, Hz
};

/// One (anchor, tag) stream.
struct StreamKey {
  std::string anchor;
  std::string tag;
  auto operator<=>(const StreamKey&) const = default;
};

/// Record indices of each (anchor, tag) stream, in log order. Throws
/// invalid_argument if a stream's timestamps decrease.
std::map<StreamKey, std::vector<std::size_t>> split_streams(const RangeLog& log);

struct RejectionParams {
  std::size_t window = 5;     ///< k
  double v_max = 1.0;         ///< m/s
  double error_bound = 0.1;   ///< m
};

/// d_t is flagged when d_t > min(d_{t-k} .. d_{t-1}) + k v_max / f + bound.
/// The first k samples are never flagged. Depends only on samples <= t.
std::vector<bool> flag_outliers(std::span<const double> values, const RejectionParams& params,
                                double frequency);

/// Replaces flagged values by linear interpolation in time between the
/// nearest unflagged neighbours (or the single available neighbour at the ends).
std::vector<double> fill_flagged(std::span<const double> times, std::span<const double> values,
                                 const std::vector<bool>& flags);

struct RejectionResult {
  RangeLog log;               ///< flagged ranges replaced by interpolation
  std::vector<bool> rejected;  ///< aligned with log.records
};

RejectionResult reject_outliers(const RangeLog& log, const RejectionParams& params);

/// d_hat = (1 + slope) d_true + intercept.
struct LinearBias {
  double slope = 0.0;
  double intercept = 0.0;

  double debias(double measured) const { return (measured - intercept) / (1.0 + slope); }
  double rebias(double true_range) const { return (1.0 + slope) * true_range + intercept; }
};

enum class BiasGranularity { pooled, per_pair };

/// Smallest reported noise deviation (m).
inline constexpr double kMinSigma = 1e-6;

struct BiasModel {
  LinearBias pooled;
  std::map<StreamKey, LinearBias> per_pair;
  double sigma = 0.05;  ///< m
  double residual_rms = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
  std::size_t samples = 0;

  static BiasModel identity();

  /// Pair-specific model when present, pooled otherwise.
  const LinearBias& for_pair(const std::string& anchor, const std::string& tag) const;
};

struct GroundTruthRecord {
  double t = 0.0;
  Pose2 pose;
};

class GroundTruthLog {
 public:
  GroundTruthLog() = default;
  /// Timestamps must be strictly increasing.
  explicit GroundTruthLog(std::vector<GroundTruthRecord> records);

  const std::vector<GroundTruthRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }

  /// Linear in translation, shortest arc in yaw. Empty outside the logged span.
  std::optional<Pose2> interpolate(double t) const;

 private:
  std::vector<GroundTruthRecord> records_;
};

/// Fits the linear bias by ordinary least squares on (d_hat - d_true) vs d_true.
/// Throws insufficient_data with fewer than 10 samples inside the truth span.
BiasModel calibrate_bias(const RangeLog& log, const GroundTruthLog& truth,
                         const Deployment& deployment,
                         BiasGranularity granularity = BiasGranularity::pooled);

struct SigmaEstimate {
  double pooled = 0.0;  ///< RMS of the per-stream deviations
  std::map<StreamKey, double> per_stream;
};

/// Sample standard deviation per stream over [t_begin, t_end].
/// Every stream present in the window needs at least 30 samples.
SigmaEstimate estimate_sigma(const RangeLog& log, double t_begin, double t_end);

struct EpochPolicy {
  double rate = 0.0;             ///< estimation rate in Hz; 0 means the ranging rate
  double max_gap_periods = 3.0;  ///< drop an epoch if a stream gap exceeds this many periods
};

struct Epoch {
  double t;
  RangeBatch batch;
};

/// De-biases every range, then samples each stream at the epoch times by
/// linear interpolation. Epochs that cannot be filled for every pair are dropped.
std::vector<Epoch> align_and_batch(const RangeLog& log, const BiasModel& bias,
                                   std::shared_ptr<const Deployment> deployment,
                                   const EpochPolicy& policy = {});

}  // namespace uwbpose
