#pragma once

// Monte-Carlo harness: sweeps over repeated ranging, anchor count or noise
// level, comparing each estimator's RMSE against sqrt(trace(CRLB)).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uwbpose/core.hpp"
#include "uwbpose/preprocess.hpp"

namespace uwbpose {

enum class SweepAxis { repeat_t, anchor_count, noise_sigma };

const char* to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& name);

struct AnchorRegion {
  Vec2 min{0.0, 0.0};
  Vec2 max{50.0, 50.0};
};

struct McConfig {
  std::shared_ptr<const Deployment> deployment;
  Pose2 truth;
  SweepAxis axis = SweepAxis::repeat_t;
  /// T, M or sigma depending on the axis; positive and increasing.
  std::vector<double> values;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  std::vector<Method> estimators{Method::uls, Method::gn_uls, Method::dac, Method::gn_dac};
  /// Repeat count used when the axis is not repeat_t.
  std::size_t repeats = 1;
  /// Anchor-count sweeps keep the configured anchors and add uniform ones here.
  AnchorRegion anchor_region;
  /// When false the ranges are exact; estimators still use the configured sigma.
  bool inject_noise = true;
  std::size_t threads = 1;

  void validate() const;
};

struct McRow {
  double axis_value = 0.0;
  Method estimator = Method::uls;
  bool filtered = false;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double rotation_rmse = 0.0;     ///< chordal
  double translation_rmse = 0.0;  ///< m
  double combined_rmse = 0.0;     ///< sqrt(rotation^2 + translation^2)
  double combined_rmse_stderr = 0.0;
  double sqrt_crlb = 0.0;
  double mean_time_us = 0.0;
};

struct McResult {
  SweepAxis axis = SweepAxis::repeat_t;
  std::vector<McRow> rows;
  std::vector<std::string> notes;

  /// Everything except the wall-time column.
  bool same_statistics(const McResult& other) const;
};

/// The concrete problem behind one axis value.
struct McScenario {
  std::shared_ptr<const Deployment> deployment;
  std::size_t repeats = 1;
};

McScenario scenario_for(const McConfig& config, std::size_t axis_index);

/// Noisy ranges for one trial. Draws depend only on (seed, axis, trial, index).
RangeBatch synthesize_trial(const McConfig& config, const McScenario& scenario,
                            std::size_t axis_index, std::size_t trial);

/// Per-trial estimates for one axis value; poses[e][l] is empty on failure.
struct McTrials {
  std::vector<Method> estimators;
  std::vector<std::vector<std::optional<Pose2>>> poses;
  std::vector<std::vector<double>> microseconds;
};

McTrials run_trials(const McConfig& config, std::size_t axis_index);

/// Throws unobservable before any trial if a scenario is not observable.
McResult run_sweep(const McConfig& config);

struct OutlierFilter {
  RejectionParams params{5, 0.5, 0.1};
  double frequency = 100.0;  ///< rate at which repeats are taken
};

/// Adds +spike to each range with probability `rate` (in [0, 0.2]) and reports
/// every estimator with and without the outlier filter over repeats.
McResult run_outlier_stress(const McConfig& config, double spike, double rate,
                            const OutlierFilter& filter = {});

/// RFC-4180 CSV, one row per (axis value, estimator, filtered).
void write_csv(std::ostream& out, const McResult& result, bool include_timing);

}  // namespace uwbpose
