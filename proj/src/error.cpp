#include "hscode/error.hpp"

namespace hscode {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::OrphanCode: return "OrphanCode";
    case ErrorCode::DuplicateCode: return "DuplicateCode";
    case ErrorCode::UnknownCode: return "UnknownCode";
    case ErrorCode::LevelNotBelowParent: return "LevelNotBelowParent";
    case ErrorCode::InvalidCode: return "InvalidCode";
    case ErrorCode::EmptyEmbedding: return "EmptyEmbedding";
    case ErrorCode::ServiceUnavailable: return "ServiceUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ZeroParentProbability: return "ZeroParentProbability";
    case ErrorCode::NoChildren: return "NoChildren";
    case ErrorCode::MissingBranchModel: return "MissingBranchModel";
    case ErrorCode::MissingJointModel: return "MissingJointModel";
    case ErrorCode::NoEntities: return "NoEntities";
    case ErrorCode::MatchGraphMismatch: return "MatchGraphMismatch";
    case ErrorCode::NotTrained: return "NotTrained";
    case ErrorCode::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case ErrorCode::UnknownHeading: return "UnknownHeading";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnknownAudit: return "UnknownAudit";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace hscode
