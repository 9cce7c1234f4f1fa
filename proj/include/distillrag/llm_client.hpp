#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distillrag/json_types.hpp"

namespace distillrag {

enum class Role { system, user, assistant };

std::string_view to_string(Role r) noexcept;

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

enum class LlmKind { remote, scripted };

/// One scripted rule. When `matcher` occurs in the last user message the
/// client returns `reply`, or raises `error` ("timeout", "http_<status>",
/// "malformed") when that is set instead.
struct ScriptEntry {
  std::string matcher;
  std::string reply;
  std::string error;
};

struct LlmConfig {
  LlmKind kind = LlmKind::scripted;
  std::string endpoint;
  std::string model_name;
  std::string api_key;
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  int retries = 1;
  std::vector<ScriptEntry> script;
  std::string fallback = "I am not sure how to help with that.";

  void validate() const;
};

LlmConfig llm_config_from_json(const Json& j);
Json to_json(const LlmConfig& c);
LlmConfig load_llm_config(const std::filesystem::path& path);
/// DISTILLRAG_LLM_ENDPOINT / _MODEL / _TIMEOUT_MS / _KEY, remote kind only.
void apply_env_overrides(LlmConfig& c);

class LlmClient {
 public:
  virtual ~LlmClient() = default;

  /// Returns the assistant text. Requires a non-empty message list ending in
  /// a user message (NoUserMessage otherwise).
  virtual std::string complete(std::span<const ChatMessage> messages) = 0;
};

void require_user_turn(std::span<const ChatMessage> messages);

/// Deterministic stand-in for a chat model: first matching script entry
/// wins, otherwise the fallback reply. Every call is recorded.
class ScriptedLlmClient final : public LlmClient {
 public:
  explicit ScriptedLlmClient(std::vector<ScriptEntry> script, std::string fallback = "");
  explicit ScriptedLlmClient(const LlmConfig& config);

  std::string complete(std::span<const ChatMessage> messages) override;

  std::size_t call_count() const;
  std::vector<std::vector<ChatMessage>> transcript() const;

 private:
  std::vector<ScriptEntry> script_;
  std::string fallback_;
  mutable std::mutex mutex_;
  std::vector<std::vector<ChatMessage>> transcript_;
};

/// Chat-completions JSON client:
///   POST {"model","messages":[{"role","content"}],"temperature","max_tokens"}
///   -> {"choices":[{"message":{"content"}}]}
/// Timeouts and 5xx replies are retried up to `retries` extra times.
class RemoteLlmClient final : public LlmClient {
 public:
  explicit RemoteLlmClient(LlmConfig config);

  std::string complete(std::span<const ChatMessage> messages) override;

 private:
  std::string attempt(const std::string& body) const;

  LlmConfig config_;
};

/// Adapter for tests and embedding applications that already have a model
/// callable in-process.
class CallbackLlmClient final : public LlmClient {
 public:
  using Fn = std::function<std::string(std::span<const ChatMessage>)>;
  explicit CallbackLlmClient(Fn fn) : fn_(std::move(fn)) {}

  std::string complete(std::span<const ChatMessage> messages) override;

 private:
  Fn fn_;
};

std::shared_ptr<LlmClient> make_llm_client(const LlmConfig& config);

}  // namespace distillrag
