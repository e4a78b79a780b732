// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace treenmt {

enum class ErrorKind {
  UnbalancedBrackets,
  EmptyNode,
  MultipleRoots,
  NonBinaryTree,
  EmptyCorpus,
  InvalidLeafIndex,
  AlignmentMismatch,
  ShapeMismatch,
  NotScalarLoss,
  UnknownTokenId,
  EmptyTarget,
  EmptySource,
  LineCountMismatch,
  TreeLeafMismatch,
  VersionMismatch,
  CorruptCheckpoint,
  MissingParameter,
  CountMismatch,
  NumericError,
  ConfigError,
  IoError,
  FormatError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (and tests) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace treenmt
