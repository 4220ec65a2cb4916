#pragma once

#include <stdexcept>
#include <string>

namespace vdtlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix/tensor dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Violated value-level preconditions (non-stochastic rows, empty inputs, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or references (bad layer index, k out of range, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Out-of-range coordinates or sequence indices.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Operation undefined for this input (e.g. text metrics with no text tokens).
class NotApplicableError : public Error {
 public:
  using Error::Error;
};

// Mismatched layouts/schedules between runs that must agree; names the field.
class IncompatibilityError : public Error {
 public:
  IncompatibilityError(std::string field, const std::string& message)
      : Error(message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Capture or storage budget exceeded; the message names the offending size.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// File I/O failure or corrupt file contents.
class IoError : public Error {
 public:
  using Error::Error;
};

// A masked attention row lost every entry under the strict masking policy.
class DegenerateRowError : public Error {
 public:
  DegenerateRowError(int row, int head)
      : Error("all entries of row " + std::to_string(row) + " in head " +
              std::to_string(head) + " fall below the mask threshold"),
        row_(row),
        head_(head) {}
  int row() const { return row_; }
  int head() const { return head_; }

 private:
  int row_;
  int head_;
};

// Training loss became non-finite; carries the step where it happened.
class TrainingDivergedError : public Error {
 public:
  explicit TrainingDivergedError(int step)
      : Error("training loss became non-finite at step " + std::to_string(step)),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace vdtlab
