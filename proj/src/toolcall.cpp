#include "distillrag/toolcall.hpp"

#include <mutex>

#include "distillrag/io.hpp"
#include "distillrag/json_types.hpp"
#include "distillrag/llm_client.hpp"
#include "distillrag/prompt_assets.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

std::string serialize_history(const DialogueHistory& history) {
  if (history.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out.push_back('\n');
    out.append("User: ").append(history[i].question);
    out.append("\nAssistant: ").append(history[i].answer);
  }
  return out;
}

std::string_view to_string(ToolCallError e) noexcept {
  switch (e) {
    case ToolCallError::none: return "none";
    case ToolCallError::no_tool_call: return "no_tool_call";
    case ToolCallError::unbalanced_parens: return "unbalanced_parens";
    case ToolCallError::empty_query: return "empty_query";
  }
  return "unknown";
}

namespace {

bool ieq(char a, char b) {
  auto lower = [](unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; };
  return lower(static_cast<unsigned char>(a)) == lower(static_cast<unsigned char>(b));
}

/// Position just past the '(' of the first tool call at or after `from`.
std::size_t find_call_open(std::string_view s, std::size_t from) {
  const std::string_view name = kToolName;
  for (std::size_t p = from; p + name.size() <= s.size(); ++p) {
    std::size_t k = 0;
    while (k < name.size() && ieq(s[p + k], name[k])) ++k;
    if (k != name.size()) continue;
    std::size_t q = p + name.size();
    while (q < s.size() && (s[q] == ' ' || s[q] == '\t')) ++q;
    if (q < s.size() && s[q] == '(') return q + 1;
  }
  return std::string_view::npos;
}

}  // namespace

ToolCallParse try_parse_tool_call(std::string_view output) noexcept {
  ToolCallParse result;
  const std::size_t open = find_call_open(output, 0);
  if (open == std::string_view::npos) {
    result.error = ToolCallError::no_tool_call;
    return result;
  }
  int depth = 1;
  std::size_t close = std::string_view::npos;
  for (std::size_t i = open; i < output.size(); ++i) {
    if (output[i] == '(') {
      ++depth;
    } else if (output[i] == ')' && --depth == 0) {
      close = i;
      break;
    }
  }
  if (close == std::string_view::npos) {
    result.error = ToolCallError::unbalanced_parens;
    return result;
  }
  const auto query = text::trim(output.substr(open, close - open));
  if (query.empty()) {
    result.error = ToolCallError::empty_query;
    return result;
  }
  ToolCall call;
  call.query = std::string(query);
  call.multiple_calls = find_call_open(output, close + 1) != std::string_view::npos;
  result.call = std::move(call);
  return result;
}

ToolCall parse_tool_call(std::string_view model_output) {
  auto parsed = try_parse_tool_call(model_output);
  switch (parsed.error) {
    case ToolCallError::none: return std::move(*parsed.call);
    case ToolCallError::no_tool_call:
      throw Error(ErrorCode::NoToolCall, "no search_engine(...) call in model output");
    case ToolCallError::unbalanced_parens:
      throw Error(ErrorCode::UnbalancedParens, "search_engine call has unbalanced parentheses");
    case ToolCallError::empty_query:
      throw Error(ErrorCode::EmptyQuery, "search_engine call has an empty query");
  }
  throw Error(ErrorCode::NoToolCall, "unparseable tool call");
}

std::string format_tool_call(std::string_view query) {
  return std::string(kToolName) + "(" + std::string(query) + ")";
}

DistillPrompt::DistillPrompt() : template_(assets::k_distill_template) {}

DistillPrompt::DistillPrompt(std::string template_text) : template_(std::move(template_text)) {}

DistillPrompt DistillPrompt::from_file(const std::filesystem::path& path) {
  return DistillPrompt(io::read_file(path));
}

std::string DistillPrompt::build(const DialogueHistory& history, std::string_view question) const {
  if (text::is_blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is blank");
  return text::render_template(template_, {{"history", serialize_history(history)},
                                           {"question", std::string(text::trim(question))}});
}

std::string build_distill_prompt(const DialogueHistory& history, std::string_view question) {
  static const DistillPrompt prompt;
  return prompt.build(history, question);
}

BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "history") return BaselineKind::history;
  if (s == "last_question") return BaselineKind::last_question;
  throw Error(ErrorCode::InvalidArgument, "baseline must be history or last_question, got " + std::string(s));
}

std::string baseline_query(const DialogueHistory& history, std::string_view question, BaselineKind kind) {
  if (text::is_blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is blank");
  if (kind == BaselineKind::last_question) return std::string(question);
  std::string out;
  for (const auto& turn : history) {
    out.append(turn.question).push_back('\n');
    out.append(turn.answer).push_back('\n');
  }
  out.append(question);
  return out;
}

SynthResult generate_synthetic_pairs(const std::vector<std::string>& questions, LlmClient& teacher,
                                     const SynthOptions& options) {
  std::vector<std::optional<SyntheticPair>> slots(questions.size());
  std::vector<std::optional<SynthFailure>> failures(questions.size());

  io::parallel_for(questions.size(), options.workers, [&](std::size_t i) {
    const auto& q = questions[i];
    try {
      const std::vector<ChatMessage> messages{{Role::user, build_distill_prompt({}, q)}};
      const std::string reply = teacher.complete(messages);
      auto parsed = try_parse_tool_call(reply);
      if (!parsed.ok()) {
        failures[i] = SynthFailure{i, q, "reply did not parse: " + std::string(to_string(parsed.error))};
        return;
      }
      slots[i] = SyntheticPair{q, format_tool_call(parsed.call->query)};
    } catch (const std::exception& e) {
      failures[i] = SynthFailure{i, q, std::string("teacher call failed: ") + e.what()};
    }
  });

  SynthResult result;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (slots[i]) {
      result.pairs.push_back(std::move(*slots[i]));
    } else {
      ++result.dropped;
      result.failures.push_back(std::move(*failures[i]));
    }
  }
  if (result.pairs.empty()) {
    throw Error(ErrorCode::AllItemsFailed,
                "no synthetic pairs survived out of " + std::to_string(questions.size()) + " questions");
  }
  return result;
}

std::string_view to_string(SynthViolation v) noexcept {
  switch (v) {
    case SynthViolation::no_tool_call: return "NoToolCall";
    case SynthViolation::unbalanced_parens: return "UnbalancedParens";
    case SynthViolation::empty_query: return "EmptyQuery";
    case SynthViolation::non_compressive: return "NonCompressive";
  }
  return "Unknown";
}

std::vector<SynthViolation> validate_synthetic_record(const SyntheticPair& record) {
  const auto parsed = try_parse_tool_call(record.output);
  switch (parsed.error) {
    case ToolCallError::no_tool_call: return {SynthViolation::no_tool_call};
    case ToolCallError::unbalanced_parens: return {SynthViolation::unbalanced_parens};
    case ToolCallError::empty_query: return {SynthViolation::empty_query};
    case ToolCallError::none: break;
  }
  if (text::codepoint_length(parsed.call->query) >= text::codepoint_length(text::trim(record.input))) {
    return {SynthViolation::non_compressive};
  }
  return {};
}

std::string to_jsonl(const std::vector<SyntheticPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out.append(Json{{"input", p.input}, {"output", p.output}}.dump());
    out.push_back('\n');
  }
  return out;
}

std::vector<SyntheticPair> parse_synthetic_jsonl(std::string_view data) {
  std::vector<SyntheticPair> out;
  const auto lines = text::split(data, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    try {
      const auto j = Json::parse(lines[i]);
      out.push_back({j.at("input").get<std::string>(), j.at("output").get<std::string>()});
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(i + 1) + ": " + e.what(), {}, i + 1);
    }
  }
  return out;
}

}  // namespace distillrag
