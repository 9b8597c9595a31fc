#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace typecase {

enum class ErrorCode {
  UnknownId,
  UnknownCharacter,
  UnknownSpread,
  IndexConflict,
  SyntaxError,
  SchemaError,
  IntegrityError,
  KeyMismatch,
  SameBlock,
  SingletonBlock,
  EmptyLog,
  RevisionConflict,
  InsufficientData,
  TooFewNodes,
  EmptyGraph,
  TooFewBlocks,
  NoConvergence,
  EmptyIntersection,
  ConstantImage,
  MissingImage,
  InfeasibleConfig,
  BadRequest,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code and,
// where one exists, a reference to the offending entity ("segment:12").
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string entity = {})
      : std::runtime_error(std::move(message)), code_(code), entity_(std::move(entity)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& entity() const noexcept { return entity_; }

 private:
  ErrorCode code_;
  std::string entity_;
};

}  // namespace typecase
