#pragma once

#include <stdexcept>
#include <string>

namespace occtime {

/// Raised when user-supplied parameters or files violate a model constraint.
class ValidationError : public std::invalid_argument {
public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when an adaptive quadrature cannot reach the requested tolerance.
class QuadratureError : public std::runtime_error {
public:
  QuadratureError(const std::string& what, double achieved)
      : std::runtime_error(what + " (achieved error estimate " + std::to_string(achieved) + ")"),
        achieved_(achieved) {}

  double achieved() const noexcept { return achieved_; }

private:
  double achieved_;
};

class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace occtime
