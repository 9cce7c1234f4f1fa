#include "distillrag/errors.hpp"

namespace distillrag {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyDatabase: return "EmptyDatabase";
    case ErrorCode::DuplicateEntity: return "DuplicateEntity";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::UnknownAttribute: return "UnknownAttribute";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::EmptyQuestion: return "EmptyQuestion";
    case ErrorCode::NoToolCall: return "NoToolCall";
    case ErrorCode::UnbalancedParens: return "UnbalancedParens";
    case ErrorCode::AllItemsFailed: return "AllItemsFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::NoUserMessage: return "NoUserMessage";
    case ErrorCode::Aborted: return "Aborted";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownPlayer: return "UnknownPlayer";
    case ErrorCode::MissingAnswer: return "MissingAnswer";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace distillrag
