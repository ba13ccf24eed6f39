#pragma once

// Command implementations behind the uwbpose executable. Each returns the
// process exit status: 0 success, 1 runtime failure, 2 schema or input error,
// 3 unobservable deployment.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uwbpose/core.hpp"
#include "uwbpose/preprocess.hpp"

namespace uwbpose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitUnobservable = 3;

int exit_code_for(ErrorCode code);

struct SimulateArgs {
  std::filesystem::path scenario;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  bool timing = false;
  /// Outlier stress: spike added with probability outlier_rate.
  double spike = 0.0;
  double outlier_rate = 0.0;
};

struct CrlbArgs {
  std::filesystem::path scenario;
  std::optional<std::size_t> repeats;
};

struct EstimateArgs {
  std::filesystem::path ranges;
  std::optional<std::filesystem::path> truth;
  std::filesystem::path deployment;
  std::optional<std::filesystem::path> bias;
  std::filesystem::path out;
  Method method = Method::gn_uls;
  double yaw_offset_deg = 0.0;
  double frequency = 100.0;
  bool reject = true;
  RejectionParams rejection;
  EpochPolicy epochs;
  /// Gauss-Newton steps for gn-uls / gn-dac. Values above 1 are a diagnostic.
  std::size_t gn_iterations = 1;
};

struct CalibrateArgs {
  std::filesystem::path ranges;
  std::filesystem::path truth;
  std::filesystem::path deployment;
  std::filesystem::path out;
  double frequency = 100.0;
  bool per_pair = false;
  bool reject = true;
  RejectionParams rejection;
  /// Stationary window used to estimate the range noise deviation.
  std::optional<std::pair<double, double>> quiescent;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err);
int cmd_crlb(const CrlbArgs& args, std::ostream& out, std::ostream& err);
int cmd_estimate(const EstimateArgs& args, std::ostream& out, std::ostream& err);
int cmd_calibrate(const CalibrateArgs& args, std::ostream& out, std::ostream& err);

struct EpochEstimate {
  double t = 0.0;
  std::optional<Pose2> pose;
  std::string error;  ///< empty on success
};

struct TrackingSummary {
  std::size_t compared = 0;
  double position_rmse_cm = 0.0;
  double rotation_rmse_deg = 0.0;
};

struct ReplayResult {
  std::vector<EpochEstimate> epochs;
  std::optional<TrackingSummary> summary;
};

/// Preprocessing plus per-epoch estimation, shared by cmd_estimate.
ReplayResult replay(const EstimateArgs& args);

/// Per-epoch CSV: t,x,y,yaw_deg,method,error.
std::string epochs_csv(const ReplayResult& result, Method method);

/// Parses the command line and dispatches; what the executable's main calls.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace uwbpose::cli
