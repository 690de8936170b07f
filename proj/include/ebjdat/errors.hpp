#ifndef EBJDAT_ERRORS_HPP_
#define EBJDAT_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ebjdat {

// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or Inf appeared in a tensor produced by an operation.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Input outside an operation's admissible set (e.g. the l-inf ball).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// API misuse: backward twice, backward on a non-scalar, ...
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Langevin chain or attack produced a non-finite input gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training gave up after repeated divergent steps.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Malformed CSV / IDX input. `row` is the 1-based data row (0 when unknown).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint written by an incompatible schema version.
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebjdat

#endif  // EBJDAT_ERRORS_HPP_
