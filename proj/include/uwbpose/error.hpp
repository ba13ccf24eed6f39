#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uwbpose {

enum class ErrorCode {
  invalid_argument,
  underdetermined_deployment,
  singular_system,
  degenerate_projection,
  degenerate_geometry,
  near_singularity,
  unobservable,
  insufficient_data,
  schema,
};

const char* to_string(ErrorCode code);

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, int numeric_rank)
      : Error(ErrorCode::singular_system, what), rank_(numeric_rank) {}

  int numeric_rank() const noexcept { return rank_; }

 private:
  int rank_;
};

/// A predicted range fell under the proximity floor; carries the offending pair.
class NearSingularityError : public Error {
 public:
  NearSingularityError(const std::string& what, std::size_t tag, std::size_t anchor)
      : Error(ErrorCode::near_singularity, what), tag_(tag), anchor_(anchor) {}

  std::size_t tag() const noexcept { return tag_; }
  std::size_t anchor() const noexcept { return anchor_; }

 private:
  std::size_t tag_;
  std::size_t anchor_;
};

}  // namespace uwbpose
