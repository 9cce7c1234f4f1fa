#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "distillrag/embedder.hpp"
#include "distillrag/errors.hpp"
#include "distillrag/json_types.hpp"
#include "distillrag/knowledge_index.hpp"
#include "distillrag/llm_client.hpp"
#include "distillrag/toolcall.hpp"

namespace distillrag {

enum class FallbackPolicy { last_question, history, fail };

FallbackPolicy parse_fallback_policy(std::string_view s);
std::string_view to_string(FallbackPolicy p) noexcept;

struct RetrievalSettings {
  Granularity granularity = Granularity::fine;
  std::size_t num = 5;
  FineMode mode = FineMode::hierarchical;
  std::size_t fanout = 10;
};

struct PipelineConfig {
  RetrievalSettings retrieval;
  std::size_t evidence_budget = 4000;
  FallbackPolicy fallback = FallbackPolicy::last_question;

  void validate() const;
};

PipelineConfig pipeline_config_from_json(const Json& j);
Json to_json(const PipelineConfig& c);

enum class DistillFailureKind { transport, no_tool_call, unbalanced_parens, empty_query };

std::string_view to_string(DistillFailureKind k) noexcept;

struct DistillFailure {
  DistillFailureKind kind = DistillFailureKind::no_tool_call;
  std::string raw_reply;
  std::string detail;
  /// Classification of the wire failure when kind == transport.
  ErrorCode transport_error = ErrorCode::HttpError;
};

using DistillOutcome = std::variant<ToolCall, DistillFailure>;

struct StepTimings {
  double distill_ms = 0.0;
  double retrieve_ms = 0.0;
  double read_ms = 0.0;
};

struct TurnResult {
  DistillOutcome distilled;
  /// Query actually sent to retrieval (the distilled one, or the fallback).
  std::string query;
  bool used_fallback = false;
  RetrievalResult retrieval;
  std::string answer;
  StepTimings timings;
  std::string trace_id;
};

/// Serialization used for the trace log and the service. Timings are
/// included only when `with_timings` is set, keeping default output
/// reproducible.
Json to_json(const TurnResult& r, bool with_timings = true);

/// Reader-prompt evidence block: numbered 「key」: text lines, cut to the
/// budget with a truncation marker, or "Evidence: (none)".
std::string format_evidence(const std::vector<Candidate>& evidence, std::size_t budget);

/// Distill, retrieve and read for one consultation turn. Stateless across
/// turns and safe to call from several threads when the LLM clients are.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::shared_ptr<LlmClient> distiller,
           std::shared_ptr<LlmClient> reader, std::shared_ptr<const Embedder> embedder,
           DistillPrompt prompt = {});

  DistillOutcome distill(const DialogueHistory& history, std::string_view question) const;

  RetrievalResult retrieve(const KnowledgeIndex& index, std::string_view query) const;
  RetrievalResult retrieve(const KnowledgeIndex& index, std::string_view query,
                           const RetrievalSettings& settings) const;

  std::string build_reader_prompt(const DialogueHistory& history, std::string_view question,
                                  const std::vector<Candidate>& evidence) const;
  std::string read(const DialogueHistory& history, std::string_view question,
                   const std::vector<Candidate>& evidence) const;

  TurnResult run_turn(const KnowledgeIndex& index, const DialogueHistory& history,
                      std::string_view question) const;

  /// The query retrieval should use after `outcome`, applying the fallback
  /// policy. Throws Aborted when the policy is `fail`.
  std::string query_for(const DistillOutcome& outcome, const DialogueHistory& history,
                        std::string_view question) const;

  const PipelineConfig& config() const noexcept { return config_; }
  const Embedder& embedder() const noexcept { return *embedder_; }

 private:
  PipelineConfig config_;
  std::shared_ptr<LlmClient> distiller_;
  std::shared_ptr<LlmClient> reader_;
  std::shared_ptr<const Embedder> embedder_;
  DistillPrompt prompt_;
};

/// Appends one TurnResult per line to a JSONL run log.
class TraceWriter {
 public:
  explicit TraceWriter(const std::filesystem::path& path);
  void write(const TurnResult& r);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace distillrag
