#pragma once

// File formats: JSON scenario, deployment and bias-model files, and the
// range / ground-truth CSV logs. Parse failures raise ErrorCode::schema.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "uwbpose/core.hpp"
#include "uwbpose/mc.hpp"
#include "uwbpose/preprocess.hpp"

namespace uwbpose {

struct Scenario {
  std::shared_ptr<const Deployment> deployment;
  std::optional<Pose2> truth;
  /// Present when the file has a "monte_carlo" section; deployment and truth filled in.
  std::optional<McConfig> monte_carlo;
  std::size_t crlb_repeats = 1;
};

Deployment parse_deployment(std::string_view json_text);
Scenario parse_scenario(std::string_view json_text);

/// Accepts either a bare deployment object or a scenario file.
Deployment load_deployment(const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

/// Columns t,anchor,tag,range. Negative or non-finite ranges are schema errors.
RangeLog read_range_log(std::istream& in, double frequency = 100.0);
RangeLog load_range_log(const std::filesystem::path& path, double frequency = 100.0);

/// Columns t,x,y,yaw_deg.
GroundTruthLog read_ground_truth(std::istream& in);
GroundTruthLog load_ground_truth(const std::filesystem::path& path);

std::string bias_model_to_json(const BiasModel& model);
BiasModel parse_bias_model(std::string_view json_text);
BiasModel load_bias_model(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace uwbpose
