#pragma once

#include <stdexcept>
#include <string>

namespace rrto {

/// Precondition or shape violation at an API boundary.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear solve or decomposition failed numerically.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed array file, manifest or checkpoint.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Object used in the wrong lifecycle state (e.g. apply before fit).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

}  // namespace detail
}  // namespace rrto
