#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hscode {

// Every failure surfaced by the engine carries one of these codes. The CLI
// and HTTP layers map them to exit statuses and response codes.
enum class ErrorCode {
  // nomenclature
  MalformedLine,
  OrphanCode,
  DuplicateCode,
  UnknownCode,
  LevelNotBelowParent,
  InvalidCode,
  // embed
  EmptyEmbedding,
  ServiceUnavailable,
  DimensionMismatch,
  ZeroVector,
  // classify
  SingleClass,
  NonFiniteLoss,
  ZeroParentProbability,
  NoChildren,
  MissingBranchModel,
  MissingJointModel,
  // extract / kgraph
  NoEntities,
  MatchGraphMismatch,
  // ensemble / service
  NotTrained,
  EmptyAfterCleaning,
  UnknownHeading,
  EmptyTestSet,
  ManifestMismatch,
  InvalidArgument,
  IoError,
  FormatError,
  UnknownAudit,
  NotFound,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const { return code_; }
  std::string_view name() const { return error_name(code_); }
  const std::string &detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace hscode
