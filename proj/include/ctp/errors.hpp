#pragma once

#include <stdexcept>
#include <string>

namespace ctp {

// Precondition or invariant violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Tensor shapes incompatible with the requested operation.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& what) : ContractError(what) {}
};

// NaN/Inf reached an exposed boundary.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss or gradient.
class DivergenceError : public NumericError {
 public:
  explicit DivergenceError(const std::string& what) : NumericError(what) {}
};

// A required on-disk artifact (dataset, checkpoint) is absent or unreadable.
class MissingArtifactError : public std::runtime_error {
 public:
  explicit MissingArtifactError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ctp
