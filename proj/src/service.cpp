#include "distillrag/service.hpp"

#include <atomic>
#include <cstdlib>
#include <map>
#include <thread>

#include <httplib.h>

#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_relative() && !base.empty()) ? base / path : path;
}

LlmConfig llm_from(const Json& j, const fs::path& base) {
  if (j.is_string()) {
    auto c = llm_config_from_json(Json::parse(io::read_file(resolve(base, j.get<std::string>()))));
    return c;
  }
  return llm_config_from_json(j);
}

bool is_loopback(std::string_view host) {
  return host == "localhost" || host == "::1" || host.rfind("127.", 0) == 0;
}

}  // namespace

ServiceConfig service_config_from_json(const Json& j, const fs::path& base_dir) {
  ServiceConfig c;
  if (j.contains("listen")) {
    const auto listen = j.at("listen").get<std::string>();
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "listen must be host:port");
    c.host = listen.substr(0, colon);
    c.port = std::stoi(listen.substr(colon + 1));
  }
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.allow_public_bind = j.value("allow_public_bind", c.allow_public_bind);
  if (j.contains("data_dir")) c.data_dir = resolve(base_dir, j.at("data_dir").get<std::string>());
  if (j.contains("database")) c.database_path = resolve(base_dir, j.at("database").get<std::string>());
  if (j.contains("cache_dir")) c.cache_dir = resolve(base_dir, j.at("cache_dir").get<std::string>());
  if (j.contains("trace_log")) c.trace_path = resolve(base_dir, j.at("trace_log").get<std::string>());
  if (j.contains("ui_dir")) c.ui_dir = resolve(base_dir, j.at("ui_dir").get<std::string>());
  if (j.contains("embedder")) c.embedder = embedder_config_from_json(j.at("embedder"));
  if (j.contains("distiller")) c.distiller = llm_from(j.at("distiller"), base_dir);
  if (j.contains("reader")) c.reader = llm_from(j.at("reader"), base_dir);
  if (j.contains("pipeline")) c.pipeline = pipeline_config_from_json(j.at("pipeline"));
  return c;
}

ServiceConfig load_service_config(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, "service config " + path.string() + ": " + e.what());
  }
  auto c = service_config_from_json(j, path.parent_path());
  apply_env_overrides(c);
  return c;
}

void apply_env_overrides(ServiceConfig& c) {
  if (const char* v = std::getenv("DISTILLRAG_LISTEN"); v && *v) {
    const std::string listen = v;
    const auto colon = listen.rfind(':');
    if (colon != std::string::npos) {
      c.host = listen.substr(0, colon);
      c.port = std::atoi(listen.c_str() + colon + 1);
    }
  }
  if (const char* v = std::getenv("DISTILLRAG_DATA_DIR"); v && *v) c.data_dir = v;
  if (const char* v = std::getenv("DISTILLRAG_DB"); v && *v) c.database_path = fs::path(v);
  apply_env_overrides(c.embedder);
  apply_env_overrides(c.distiller);
  apply_env_overrides(c.reader);
}

struct Service::Impl {
  ServiceConfig config;
  std::shared_ptr<const Embedder> embedder;
  std::unique_ptr<Pipeline> pipeline;
  std::unique_ptr<SessionStore> store;
  std::unique_ptr<TraceWriter> trace;

  mutable std::mutex index_mutex;
  std::shared_ptr<const KnowledgeIndex> index;
  std::atomic<bool> ingest_running{false};

  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<std::mutex>, std::less<>> session_locks;

  httplib::Server server;
  std::thread server_thread;

  std::shared_ptr<const KnowledgeIndex> snapshot() const {
    std::lock_guard lock(index_mutex);
    return index;
  }

  void swap_in(std::shared_ptr<const KnowledgeIndex> next) {
    std::lock_guard lock(index_mutex);
    index = std::move(next);
  }

  std::shared_ptr<std::mutex> session_lock(std::string_view id) {
    std::lock_guard lock(sessions_mutex);
    auto it = session_locks.find(id);
    if (it == session_locks.end()) it = session_locks.emplace(std::string(id), std::make_shared<std::mutex>()).first;
    return it->second;
  }
};

Service::Service(ServiceConfig config, std::shared_ptr<const Embedder> embedder, std::shared_ptr<LlmClient> distiller,
                 std::shared_ptr<LlmClient> reader)
    : impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  auto& c = impl_->config;
  c.pipeline.validate();
  impl_->embedder = embedder ? std::move(embedder) : make_embedder(c.embedder);
  if (!distiller) distiller = make_llm_client(c.distiller);
  if (!reader) reader = make_llm_client(c.reader);
  impl_->pipeline = std::make_unique<Pipeline>(c.pipeline, std::move(distiller), std::move(reader), impl_->embedder);
  fs::create_directories(c.data_dir);
  impl_->store = std::make_unique<SessionStore>(c.data_dir / "sessions.sqlite3");
  if (c.trace_path) impl_->trace = std::make_unique<TraceWriter>(*c.trace_path);
  if (c.database_path) {
    BuildOptions opts{c.cache_dir};
    impl_->swap_in(std::make_shared<const KnowledgeIndex>(
        KnowledgeIndex::build(load_database(*c.database_path), *impl_->embedder, opts)));
  }
}

Service::~Service() { stop(); }

std::string Service::create_session() { return impl_->store->create().session_id; }

std::optional<Session> Service::get_session(std::string_view id) const { return impl_->store->get(id); }

Json Service::post_message(std::string_view session_id, std::string_view question) {
  if (text::is_blank(question)) throw Error(ErrorCode::EmptyQuestion, "question is blank");
  auto lock_ptr = impl_->session_lock(session_id);
  std::lock_guard session_guard(*lock_ptr);

  auto session = impl_->store->get(session_id);
  if (!session) throw Error(ErrorCode::UnknownSession, "unknown session: " + std::string(session_id));
  const auto index = impl_->snapshot();
  if (!index) throw Error(ErrorCode::EmptyDatabase, "no database has been ingested", "retrieve");

  const auto result = impl_->pipeline->run_turn(*index, session->history(), question);
  if (impl_->trace) impl_->trace->write(result);

  SessionTurn turn;
  turn.turn_index = session->turns.size();
  turn.question = std::string(question);
  turn.answer = result.answer;
  if (const auto* call = std::get_if<ToolCall>(&result.distilled)) {
    turn.distilled_query = call->query;
  } else {
    turn.distill_failed = true;
  }
  turn.evidence = result.retrieval.candidates;
  impl_->store->append_turn(session_id, turn);

  Json out = to_json(turn);
  out["retrieval_query"] = result.query;
  out["used_fallback"] = result.used_fallback;
  out["trace_id"] = result.trace_id;
  out["timings_ms"] = {{"distill", result.timings.distill_ms},
                       {"retrieve", result.timings.retrieve_ms},
                       {"read", result.timings.read_ms}};
  return out;
}

Json Service::search_debug(std::string_view query, Granularity granularity, std::size_t num) const {
  if (text::is_blank(query)) throw Error(ErrorCode::EmptyQuery, "query is blank");
  if (num == 0) throw Error(ErrorCode::InvalidArgument, "num must be >= 1");
  const auto index = impl_->snapshot();
  if (!index) throw Error(ErrorCode::EmptyDatabase, "no database has been ingested", "retrieve");
  RetrievalSettings settings = impl_->pipeline->config().retrieval;
  settings.granularity = granularity;
  settings.num = num;
  return to_json(impl_->pipeline->retrieve(*index, query, settings));
}

IndexStats Service::ingest(std::string_view database_json) {
  bool expected = false;
  if (!impl_->ingest_running.compare_exchange_strong(expected, true)) {
    throw Error(ErrorCode::Conflict, "another ingest is already running");
  }
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag.store(false); }
  } release{impl_->ingest_running};

  const auto records = parse_database(database_json);
  BuildOptions opts{impl_->config.cache_dir};
  auto next = std::make_shared<const KnowledgeIndex>(KnowledgeIndex::build(records, *impl_->embedder, opts));
  const auto stats = next->stats();
  impl_->swap_in(std::move(next));
  return stats;
}

Json Service::health() const {
  const auto index = impl_->snapshot();
  const auto stats = index ? index->stats() : IndexStats{};
  return Json{{"status", "ok"}, {"index", {{"entities", stats.entities}, {"items", stats.items}}}};
}

std::shared_ptr<const KnowledgeIndex> Service::index() const { return impl_->snapshot(); }

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::EmptyQuestion:
    case ErrorCode::EmptyQuery:
    case ErrorCode::EmptyText:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidRecord:
    case ErrorCode::DuplicateEntity:
    case ErrorCode::ParseError:
    case ErrorCode::SchemaViolation:
      return 400;
    case ErrorCode::Aborted: return 422;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::EmptyDatabase: return 503;
    case ErrorCode::Timeout:
    case ErrorCode::HttpError:
    case ErrorCode::MalformedResponse:
    case ErrorCode::RemoteUnavailable:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NoUserMessage:
      return 502;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message,
                std::string_view step = {}) {
  Json body{{"error_code", code}, {"message", message}};
  if (!step.empty()) body["step"] = step;
  send_json(res, status, body);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn, bool payload_errors = false) {
  try {
    fn();
  } catch (const Error& e) {
    int status = status_for(e.code());
    if (payload_errors && e.code() != ErrorCode::Conflict && status != 502) status = 400;
    send_error(res, status, error_code_name(e.code()), e.what(), e.step());
  } catch (const Json::exception& e) {
    send_error(res, 400, "ParseError", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "Internal", e.what());
  }
}

}  // namespace

namespace {

void install_routes(httplib::Server& server, Service& svc) {
  server.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, svc.health()); });
  });

  server.Post("/api/sessions", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, Json{{"session_id", svc.create_session()}}); });
  });

  server.Get(R"(/api/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto session = svc.get_session(req.matches[1].str());
      if (!session) throw Error(ErrorCode::UnknownSession, "unknown session: " + req.matches[1].str());
      send_json(res, 200, to_json(*session));
    });
  });

  server.Post(R"(/api/sessions/([^/]+)/messages)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = Json::parse(req.body);
      if (!body.is_object() || !body.contains("question") || !body.at("question").is_string()) {
        throw Error(ErrorCode::EmptyQuestion, "body must be {\"question\": string}");
      }
      send_json(res, 200, svc.post_message(req.matches[1].str(), body.at("question").get<std::string>()));
    });
  });

  server.Get("/api/search", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string q = req.get_param_value("q");
      const Granularity g =
          req.has_param("granularity") ? parse_granularity(req.get_param_value("granularity")) : Granularity::fine;
      std::size_t num = 5;
      if (req.has_param("num")) {
        const auto raw = req.get_param_value("num");
        char* end = nullptr;
        const long v = std::strtol(raw.c_str(), &end, 10);
        if (raw.empty() || *end != '\0' || v < 1) throw Error(ErrorCode::InvalidArgument, "num must be a positive integer");
        num = static_cast<std::size_t>(v);
      }
      send_json(res, 200, svc.search_debug(q, g, num));
    });
  });

  server.Post("/api/admin/ingest", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(
        res,
        [&] {
          const auto stats = svc.ingest(req.body);
          send_json(res, 200, Json{{"entities", stats.entities}, {"items", stats.items}});
        },
        /*payload_errors=*/true);
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send_error(res, 500, "Internal", "internal error");
  });
}

}  // namespace

int Service::start() {
  const auto& c = impl_->config;
  if (!is_loopback(c.host) && !c.allow_public_bind) {
    throw Error(ErrorCode::InvalidArgument, "refusing to bind " + c.host + " without allow_public_bind");
  }
  install_routes(impl_->server, *this);
  if (c.ui_dir) impl_->server.set_mount_point("/", c.ui_dir->string());
  int port = c.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(c.host);
  } else if (!impl_->server.bind_to_port(c.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorCode::Io, "cannot bind " + c.host + ":" + std::to_string(c.port));
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::listen() {
  start();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->server_thread.joinable() && impl_->server_thread.get_id() != std::this_thread::get_id()) {
    impl_->server_thread.join();
  }
}

}  // namespace distillrag
