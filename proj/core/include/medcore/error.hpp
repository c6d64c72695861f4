#pragma once

#include <stdexcept>
#include <string>

namespace medcore {

/// Broad failure categories. The CLI maps each one onto a distinct exit code.
enum class ErrorKind {
  config,
  io,
  numeric,
  infeasible_plan,
  shape,
  invalid_argument,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};
struct InfeasiblePlanError : Error {
  explicit InfeasiblePlanError(const std::string& what) : Error(ErrorKind::infeasible_plan, what) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& what) : Error(ErrorKind::invalid_argument, what) {}
};

}  // namespace medcore
