#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "distillrag/errors.hpp"

namespace distillrag {

class LlmClient;

inline constexpr std::string_view kToolName = "search_engine";

struct DialogueTurn {
  std::string question;
  std::string answer;

  bool operator==(const DialogueTurn&) const = default;
};

/// Prior (question, answer) rounds of a consultation, oldest first.
using DialogueHistory = std::vector<DialogueTurn>;

/// Canonical history rendering shared by the distiller and reader prompts:
/// alternating "User: ..." / "Assistant: ..." lines, or "(none)" when empty.
std::string serialize_history(const DialogueHistory& history);

struct ToolCall {
  std::string tool_name{kToolName};
  std::string query;
  /// Set when the output contained more than one search_engine call; only
  /// the first is used.
  bool multiple_calls = false;

  bool operator==(const ToolCall&) const = default;
};

enum class ToolCallError { none, no_tool_call, unbalanced_parens, empty_query };

std::string_view to_string(ToolCallError e) noexcept;

struct ToolCallParse {
  std::optional<ToolCall> call;
  ToolCallError error = ToolCallError::none;

  bool ok() const noexcept { return call.has_value(); }
};

/// Total parser: every input is classified, nothing throws. The first
/// case-insensitive "search_engine(" wins; the argument extends to the
/// matching close paren and is trimmed.
ToolCallParse try_parse_tool_call(std::string_view model_output) noexcept;

/// Throwing form of try_parse_tool_call (NoToolCall, UnbalancedParens, EmptyQuery).
ToolCall parse_tool_call(std::string_view model_output);

std::string format_tool_call(std::string_view query);

/// Prompt renderer for the distillation step. Holds the template text, which
/// defaults to the bundled asset and can be replaced from a file.
class DistillPrompt {
 public:
  DistillPrompt();
  explicit DistillPrompt(std::string template_text);
  static DistillPrompt from_file(const std::filesystem::path& path);

  std::string build(const DialogueHistory& history, std::string_view question) const;
  const std::string& template_text() const noexcept { return template_; }

 private:
  std::string template_;
};

std::string build_distill_prompt(const DialogueHistory& history, std::string_view question);

enum class BaselineKind { history, last_question };

BaselineKind parse_baseline_kind(std::string_view s);

/// Query builders for the ablation baselines: the whole dialogue joined by
/// newlines, or only the latest question.
std::string baseline_query(const DialogueHistory& history, std::string_view question,
                           BaselineKind kind);

struct SyntheticPair {
  std::string input;
  std::string output;

  bool operator==(const SyntheticPair&) const = default;
};

struct SynthFailure {
  std::size_t index = 0;
  std::string input;
  std::string reason;
};

struct SynthResult {
  std::vector<SyntheticPair> pairs;
  std::size_t dropped = 0;
  std::vector<SynthFailure> failures;
};

struct SynthOptions {
  std::size_t workers = 4;
};

/// Asks the teacher model to distill each question into a tool call. Replies
/// that do not parse are dropped; transport failures skip the item. Output
/// order follows input order. Throws AllItemsFailed when nothing survives.
SynthResult generate_synthetic_pairs(const std::vector<std::string>& questions, LlmClient& teacher,
                                     const SynthOptions& options = {});

enum class SynthViolation { no_tool_call, unbalanced_parens, empty_query, non_compressive };

std::string_view to_string(SynthViolation v) noexcept;

/// Empty result means the record is valid.
std::vector<SynthViolation> validate_synthetic_record(const SyntheticPair& record);

std::string to_jsonl(const std::vector<SyntheticPair>& pairs);
std::vector<SyntheticPair> parse_synthetic_jsonl(std::string_view text);

}  // namespace distillrag
