#include "distillrag/llm_client.hpp"

#include <cstdlib>

#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "http_util.hpp"

namespace distillrag {

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

void LlmConfig::validate() const {
  if (kind == LlmKind::remote && (endpoint.empty() || model_name.empty())) {
    throw Error(ErrorCode::InvalidArgument, "remote LLM config requires endpoint and model");
  }
  if (temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
  if (retries < 0) throw Error(ErrorCode::InvalidArgument, "retries must be >= 0");
}

LlmConfig llm_config_from_json(const Json& j) {
  LlmConfig c;
  const std::string kind = j.value("kind", std::string("scripted"));
  if (kind == "remote") {
    c.kind = LlmKind::remote;
  } else if (kind == "scripted") {
    c.kind = LlmKind::scripted;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown LLM kind: " + kind);
  }
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model_name = j.value("model", c.model_name);
  c.api_key = j.value("api_key", c.api_key);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long>(c.timeout.count())));
  c.retries = j.value("retries", c.retries);
  c.fallback = j.value("fallback", c.fallback);
  if (j.contains("script")) {
    for (const auto& e : j.at("script")) {
      c.script.push_back({e.at("match").get<std::string>(), e.value("reply", std::string()),
                          e.value("error", std::string())});
    }
  }
  return c;
}

Json to_json(const LlmConfig& c) {
  Json j{{"kind", c.kind == LlmKind::remote ? "remote" : "scripted"},
         {"temperature", c.temperature},
         {"max_tokens", c.max_tokens},
         {"timeout_ms", c.timeout.count()},
         {"retries", c.retries}};
  if (c.kind == LlmKind::remote) {
    j["endpoint"] = c.endpoint;
    j["model"] = c.model_name;
  } else {
    Json script = Json::array();
    for (const auto& e : c.script) {
      Json s{{"match", e.matcher}, {"reply", e.reply}};
      if (!e.error.empty()) s["error"] = e.error;
      script.push_back(std::move(s));
    }
    j["script"] = std::move(script);
    j["fallback"] = c.fallback;
  }
  return j;
}

LlmConfig load_llm_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, "LLM config " + path.string() + ": " + e.what());
  }
  auto c = llm_config_from_json(j);
  apply_env_overrides(c);
  c.validate();
  return c;
}

void apply_env_overrides(LlmConfig& c) {
  if (c.kind != LlmKind::remote) return;
  if (const char* v = std::getenv("DISTILLRAG_LLM_ENDPOINT"); v && *v) c.endpoint = v;
  if (const char* v = std::getenv("DISTILLRAG_LLM_MODEL"); v && *v) c.model_name = v;
  if (const char* v = std::getenv("DISTILLRAG_LLM_KEY"); v && *v) c.api_key = v;
  if (const char* v = std::getenv("DISTILLRAG_LLM_TIMEOUT_MS"); v && *v) {
    c.timeout = std::chrono::milliseconds(std::strtol(v, nullptr, 10));
  }
}

void require_user_turn(std::span<const ChatMessage> messages) {
  if (messages.empty() || messages.back().role != Role::user) {
    throw Error(ErrorCode::NoUserMessage, "chat request must end with a user message");
  }
}

namespace {

[[noreturn]] void raise_scripted(const std::string& kind) {
  if (kind == "timeout") throw Error(ErrorCode::Timeout, "scripted timeout");
  if (kind == "malformed") throw Error(ErrorCode::MalformedResponse, "scripted malformed response");
  if (kind.rfind("http_", 0) == 0) {
    Error e(ErrorCode::HttpError, "scripted HTTP error " + kind.substr(5));
    e.http_status = std::atoi(kind.c_str() + 5);
    throw e;
  }
  throw Error(ErrorCode::HttpError, "scripted failure: " + kind);
}

}  // namespace

ScriptedLlmClient::ScriptedLlmClient(std::vector<ScriptEntry> script, std::string fallback)
    : script_(std::move(script)), fallback_(std::move(fallback)) {}

ScriptedLlmClient::ScriptedLlmClient(const LlmConfig& config)
    : script_(config.script), fallback_(config.fallback) {}

std::string ScriptedLlmClient::complete(std::span<const ChatMessage> messages) {
  require_user_turn(messages);
  {
    std::lock_guard lock(mutex_);
    transcript_.emplace_back(messages.begin(), messages.end());
  }
  const std::string& last = messages.back().content;
  for (const auto& entry : script_) {
    if (last.find(entry.matcher) == std::string::npos) continue;
    if (!entry.error.empty()) raise_scripted(entry.error);
    return entry.reply;
  }
  return fallback_;
}

std::size_t ScriptedLlmClient::call_count() const {
  std::lock_guard lock(mutex_);
  return transcript_.size();
}

std::vector<std::vector<ChatMessage>> ScriptedLlmClient::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

RemoteLlmClient::RemoteLlmClient(LlmConfig config) : config_(std::move(config)) { config_.validate(); }

std::string RemoteLlmClient::complete(std::span<const ChatMessage> messages) {
  require_user_turn(messages);
  Json req{{"model", config_.model_name},
           {"temperature", config_.temperature},
           {"max_tokens", config_.max_tokens},
           {"messages", Json::array()}};
  for (const auto& m : messages) req["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  const std::string body = req.dump();

  for (int attempt = 0;; ++attempt) {
    try {
      return this->attempt(body);
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::Timeout ||
                             (e.code() == ErrorCode::HttpError && (e.http_status >= 500 || e.http_status == 0));
      if (!retryable || attempt >= config_.retries) throw;
    }
  }
}

std::string RemoteLlmClient::attempt(const std::string& body) const {
  const auto ep = detail::parse_endpoint(config_.endpoint);
  auto client = detail::make_client(ep, config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client->Post(ep.path, headers, body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::Timeout, "LLM request timed out after " +
                                          std::to_string(config_.timeout.count()) + " ms");
    }
    Error e(ErrorCode::HttpError, "LLM transport failure: " + httplib::to_string(err));
    e.http_status = 0;
    throw e;
  }
  if (res->status != 200) {
    Error e(ErrorCode::HttpError,
            "LLM endpoint returned HTTP " + std::to_string(res->status) + ": " + detail::excerpt(res->body));
    e.http_status = res->status;
    throw e;
  }
  try {
    const Json reply = Json::parse(res->body);
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw Error(ErrorCode::MalformedResponse, "LLM content is not a string");
    return content.get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedResponse,
                std::string("malformed chat completion: ") + e.what() + " body: " + detail::excerpt(res->body));
  }
}

std::string CallbackLlmClient::complete(std::span<const ChatMessage> messages) {
  require_user_turn(messages);
  return fn_(messages);
}

std::shared_ptr<LlmClient> make_llm_client(const LlmConfig& config) {
  config.validate();
  if (config.kind == LlmKind::scripted) return std::make_shared<ScriptedLlmClient>(config);
  return std::make_shared<RemoteLlmClient>(config);
}

}  // namespace distillrag
