#include "distillrag/pipeline.hpp"

#include <chrono>

#include "distillrag/prompt_assets.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

FallbackPolicy parse_fallback_policy(std::string_view s) {
  if (s == "last_question") return FallbackPolicy::last_question;
  if (s == "history") return FallbackPolicy::history;
  if (s == "fail") return FallbackPolicy::fail;
  throw Error(ErrorCode::InvalidArgument, "fallback must be last_question, history or fail");
}

std::string_view to_string(FallbackPolicy p) noexcept {
  switch (p) {
    case FallbackPolicy::last_question: return "last_question";
    case FallbackPolicy::history: return "history";
    case FallbackPolicy::fail: return "fail";
  }
  return "last_question";
}

std::string_view to_string(DistillFailureKind k) noexcept {
  switch (k) {
    case DistillFailureKind::transport: return "transport";
    case DistillFailureKind::no_tool_call: return "no_tool_call";
    case DistillFailureKind::unbalanced_parens: return "unbalanced_parens";
    case DistillFailureKind::empty_query: return "empty_query";
  }
  return "transport";
}

void PipelineConfig::validate() const {
  if (retrieval.num == 0) throw Error(ErrorCode::InvalidArgument, "retrieval.num must be >= 1");
  if (retrieval.fanout == 0) throw Error(ErrorCode::InvalidArgument, "retrieval.fanout must be >= 1");
  if (evidence_budget == 0) throw Error(ErrorCode::InvalidArgument, "evidence_budget must be >= 1");
}

PipelineConfig pipeline_config_from_json(const Json& j) {
  PipelineConfig c;
  if (j.contains("retrieval")) {
    const auto& r = j.at("retrieval");
    if (r.contains("granularity")) c.retrieval.granularity = parse_granularity(r.at("granularity").get<std::string>());
    if (r.contains("mode")) c.retrieval.mode = parse_fine_mode(r.at("mode").get<std::string>());
    c.retrieval.num = r.value("num", c.retrieval.num);
    c.retrieval.fanout = r.value("fanout", c.retrieval.fanout);
  }
  c.evidence_budget = j.value("evidence_budget", c.evidence_budget);
  if (j.contains("fallback")) c.fallback = parse_fallback_policy(j.at("fallback").get<std::string>());
  c.validate();
  return c;
}

Json to_json(const PipelineConfig& c) {
  return Json{{"retrieval",
               {{"granularity", to_string(c.retrieval.granularity)},
                {"num", c.retrieval.num},
                {"mode", to_string(c.retrieval.mode)},
                {"fanout", c.retrieval.fanout}}},
              {"evidence_budget", c.evidence_budget},
              {"fallback", to_string(c.fallback)}};
}

Json to_json(const TurnResult& r, bool with_timings) {
  Json distilled;
  if (const auto* call = std::get_if<ToolCall>(&r.distilled)) {
    distilled = {{"ok", true}, {"query", call->query}, {"multiple_calls", call->multiple_calls}};
  } else {
    const auto& f = std::get<DistillFailure>(r.distilled);
    distilled = {{"ok", false}, {"kind", to_string(f.kind)}, {"raw_reply", f.raw_reply}, {"detail", f.detail}};
  }
  Json j{{"trace_id", r.trace_id},
         {"distilled", std::move(distilled)},
         {"query", r.query},
         {"used_fallback", r.used_fallback},
         {"retrieval", to_json(r.retrieval)},
         {"answer", r.answer}};
  if (with_timings) {
    j["timings_ms"] = {{"distill", r.timings.distill_ms},
                       {"retrieve", r.timings.retrieve_ms},
                       {"read", r.timings.read_ms}};
  }
  return j;
}

std::string format_evidence(const std::vector<Candidate>& evidence, std::size_t budget) {
  if (evidence.empty()) return "Evidence: (none)";
  std::string body;
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    if (i) body.push_back('\n');
    body.append(std::to_string(i + 1)).append(". 「").append(evidence[i].display_key()).append("」: ");
    body.append(evidence[i].evidence_text);
  }
  return "Evidence:\n" + text::truncate_codepoints(body, budget);
}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<LlmClient> distiller, std::shared_ptr<LlmClient> reader,
                   std::shared_ptr<const Embedder> embedder, DistillPrompt prompt)
    : config_(std::move(config)),
      distiller_(std::move(distiller)),
      reader_(std::move(reader)),
      embedder_(std::move(embedder)),
      prompt_(std::move(prompt)) {
  config_.validate();
  if (!embedder_) throw Error(ErrorCode::InvalidArgument, "pipeline requires an embedder");
}

DistillOutcome Pipeline::distill(const DialogueHistory& history, std::string_view question) const {
  const std::vector<ChatMessage> messages{{Role::user, prompt_.build(history, question)}};
  if (!distiller_) {
    return DistillFailure{DistillFailureKind::transport, "", "no distiller configured", ErrorCode::InvalidArgument};
  }
  std::string reply;
  try {
    reply = distiller_->complete(messages);
  } catch (const Error& e) {
    return DistillFailure{DistillFailureKind::transport, "", e.what(), e.code()};
  } catch (const std::exception& e) {
    return DistillFailure{DistillFailureKind::transport, "", e.what(), ErrorCode::HttpError};
  }
  auto parsed = try_parse_tool_call(reply);
  switch (parsed.error) {
    case ToolCallError::none: return std::move(*parsed.call);
    case ToolCallError::no_tool_call:
      return DistillFailure{DistillFailureKind::no_tool_call, reply, "no search_engine(...) call"};
    case ToolCallError::unbalanced_parens:
      return DistillFailure{DistillFailureKind::unbalanced_parens, reply, "unbalanced parentheses"};
    case ToolCallError::empty_query:
      return DistillFailure{DistillFailureKind::empty_query, reply, "empty query"};
  }
  return DistillFailure{DistillFailureKind::no_tool_call, reply, "unparseable"};
}

std::string Pipeline::query_for(const DistillOutcome& outcome, const DialogueHistory& history,
                                std::string_view question) const {
  if (const auto* call = std::get_if<ToolCall>(&outcome)) return call->query;
  switch (config_.fallback) {
    case FallbackPolicy::last_question: return baseline_query(history, question, BaselineKind::last_question);
    case FallbackPolicy::history: return baseline_query(history, question, BaselineKind::history);
    case FallbackPolicy::fail: break;
  }
  const auto& f = std::get<DistillFailure>(outcome);
  throw Error(ErrorCode::Aborted, "distillation failed (" + std::string(to_string(f.kind)) + ") and fallback is 'fail'",
              "distill");
}

RetrievalResult Pipeline::retrieve(const KnowledgeIndex& index, std::string_view query) const {
  return retrieve(index, query, config_.retrieval);
}

RetrievalResult Pipeline::retrieve(const KnowledgeIndex& index, std::string_view query,
                                   const RetrievalSettings& settings) const {
  if (text::is_blank(query)) throw Error(ErrorCode::EmptyQuery, "retrieval query is blank", "retrieve");
  RetrievalResult result =
      settings.granularity == Granularity::coarse
          ? index.search_coarse(query, settings.num, *embedder_)
          : index.search_fine(query, settings.num, *embedder_, {settings.mode, settings.fanout});
  for (auto& c : result.candidates) c.evidence_text = text::truncate_codepoints(c.evidence_text, config_.evidence_budget);
  return result;
}

std::string Pipeline::build_reader_prompt(const DialogueHistory& history, std::string_view question,
                                          const std::vector<Candidate>& evidence) const {
  if (text::is_blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is blank");
  return text::render_template(assets::k_reader_template,
                               {{"history", serialize_history(history)},
                                {"evidence", format_evidence(evidence, config_.evidence_budget)},
                                {"question", std::string(text::trim(question))}});
}

std::string Pipeline::read(const DialogueHistory& history, std::string_view question,
                           const std::vector<Candidate>& evidence) const {
  if (!reader_) throw Error(ErrorCode::InvalidArgument, "no reader configured", "read");
  const std::vector<ChatMessage> messages{{Role::user, build_reader_prompt(history, question, evidence)}};
  std::string answer;
  try {
    answer = reader_->complete(messages);
  } catch (const Error& e) {
    throw e.with_step("read");
  }
  if (text::is_blank(answer)) throw Error(ErrorCode::MalformedResponse, "reader returned an empty answer", "read");
  return answer;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

TurnResult Pipeline::run_turn(const KnowledgeIndex& index, const DialogueHistory& history,
                              std::string_view question) const {
  if (text::is_blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is blank");
  TurnResult result;
  result.trace_id = text::hex64(text::stable_hash64(std::string(question), text::stable_hash64(serialize_history(history))));

  auto t0 = std::chrono::steady_clock::now();
  result.distilled = distill(history, question);
  result.timings.distill_ms = elapsed_ms(t0);
  if (const auto* f = std::get_if<DistillFailure>(&result.distilled); f && f->kind == DistillFailureKind::transport) {
    throw Error(f->transport_error, "distiller call failed: " + f->detail, "distill");
  }
  result.used_fallback = std::holds_alternative<DistillFailure>(result.distilled);
  result.query = query_for(result.distilled, history, question);

  t0 = std::chrono::steady_clock::now();
  try {
    result.retrieval = retrieve(index, result.query);
  } catch (const Error& e) {
    throw e.step().empty() ? e.with_step("retrieve") : e;
  }
  result.timings.retrieve_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  result.answer = read(history, question, result.retrieval.candidates);
  result.timings.read_ms = elapsed_ms(t0);
  return result;
}

TraceWriter::TraceWriter(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw Error(ErrorCode::Io, "cannot open trace log " + path.string());
}

void TraceWriter::write(const TurnResult& r) {
  const std::string line = to_json(r).dump();
  std::lock_guard lock(mutex_);
  out_ << line << '\n';
  out_.flush();
}

}  // namespace distillrag
