#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace distillrag {

enum class ErrorCode {
  // embedder
  EmptyText,
  RemoteUnavailable,
  DimensionMismatch,
  // knowledge index
  EmptyDatabase,
  DuplicateEntity,
  InvalidRecord,
  UnknownEntity,
  UnknownAttribute,
  EmptyQuery,
  // toolcall
  EmptyQuestion,
  NoToolCall,
  UnbalancedParens,
  AllItemsFailed,
  // llm client
  Timeout,
  HttpError,
  MalformedResponse,
  NoUserMessage,
  // pipeline
  Aborted,
  // benchmark
  ParseError,
  SchemaViolation,
  DuplicateId,
  // elo
  UnknownPlayer,
  MissingAnswer,
  // service / misc
  UnknownSession,
  StorageFailure,
  Conflict,
  InvalidArgument,
  Io,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Single exception type for the library. The code classifies the failure;
/// `step` names the pipeline stage when one applies and `index` points at the
/// offending element of a batch input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string step = {},
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(message), code_(code), step_(std::move(step)), index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& step() const noexcept { return step_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

  /// Copy of this error with a pipeline step label attached.
  Error with_step(std::string step) const { return Error(code_, what(), std::move(step), index_); }

  // HTTP status only meaningful for ErrorCode::HttpError.
  int http_status = 0;

 private:
  ErrorCode code_;
  std::string step_;
  std::optional<std::size_t> index_;
};

}  // namespace distillrag
