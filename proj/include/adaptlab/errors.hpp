#pragma once

#include <stdexcept>
#include <string>

namespace adaptlab {

// Invalid shapes or extents passed to a tensor op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Misuse of the autodiff tape (stale variables, repeated backward, ...).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A configuration value that violates its documented invariants.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated binary container (corpus or checkpoint).
class FormatError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kInvalid, kIo };

  FormatError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Failure during optimization that aborts a training run.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the parameter audit when the two counting routes disagree.
class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adaptlab
