#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distillrag/embedder.hpp"
#include "distillrag/json_types.hpp"
#include "distillrag/knowledge_index.hpp"
#include "distillrag/llm_client.hpp"
#include "distillrag/pipeline.hpp"

namespace distillrag {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Binding anything other than a loopback address requires this flag.
  bool allow_public_bind = false;
  std::filesystem::path data_dir = "distillrag-data";
  std::optional<std::filesystem::path> database_path;
  std::optional<std::filesystem::path> cache_dir;
  std::optional<std::filesystem::path> trace_path;
  std::optional<std::filesystem::path> ui_dir;
  EmbedderConfig embedder;
  LlmConfig distiller;
  LlmConfig reader;
  PipelineConfig pipeline;
};

/// Relative paths in the file are resolved against `base_dir`.
ServiceConfig service_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);
/// DISTILLRAG_LISTEN (host:port), DISTILLRAG_DATA_DIR, DISTILLRAG_DB plus the
/// embedder and LLM endpoint variables.
void apply_env_overrides(ServiceConfig& c);

struct SessionTurn {
  std::size_t turn_index = 0;
  std::string question;
  std::string answer;
  std::string distilled_query;
  bool distill_failed = false;
  std::vector<Candidate> evidence;
};

struct Session {
  std::string session_id;
  std::string created_at;
  std::vector<SessionTurn> turns;

  DialogueHistory history() const;
};

Json to_json(const SessionTurn& t);
Json to_json(const Session& s);

/// Sessions persisted in a single SQLite file. Turns are append-only.
class SessionStore {
 public:
  explicit SessionStore(const std::filesystem::path& db_file);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  Session create();
  std::optional<Session> get(std::string_view id) const;
  void append_turn(std::string_view id, const SessionTurn& turn);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP consultation service. The business operations are public so they
/// can be driven without a socket; start()/listen() expose them over REST.
class Service {
 public:
  /// Null clients/embedder are created from the config.
  explicit Service(ServiceConfig config, std::shared_ptr<const Embedder> embedder = nullptr,
                   std::shared_ptr<LlmClient> distiller = nullptr,
                   std::shared_ptr<LlmClient> reader = nullptr);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::string create_session();
  std::optional<Session> get_session(std::string_view id) const;
  Json post_message(std::string_view session_id, std::string_view question);
  Json search_debug(std::string_view query, Granularity granularity, std::size_t num) const;
  IndexStats ingest(std::string_view database_json);
  Json health() const;

  /// Current index snapshot; null until a database has been ingested.
  std::shared_ptr<const KnowledgeIndex> index() const;

  /// Binds and serves on a background thread. Returns the bound port (useful
  /// with port 0).
  int start();
  /// Binds and serves on the calling thread until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace distillrag
