#include <sqlite3.h>

#include <chrono>
#include <ctime>
#include <mutex>
#include <random>

#include "distillrag/errors.hpp"
#include "distillrag/service.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

DialogueHistory Session::history() const {
  DialogueHistory h;
  h.reserve(turns.size());
  for (const auto& t : turns) h.push_back({t.question, t.answer});
  return h;
}

Json to_json(const SessionTurn& t) {
  Json evidence = Json::array();
  for (const auto& c : t.evidence) {
    Json e{{"key", c.display_key()}, {"entity", c.entity}, {"score", c.score}, {"text", c.evidence_text}};
    if (c.attribute) e["attribute"] = *c.attribute;
    evidence.push_back(std::move(e));
  }
  return Json{{"turn_index", t.turn_index},
              {"question", t.question},
              {"answer", t.answer},
              {"distilled_query", t.distilled_query},
              {"distill_failed", t.distill_failed},
              {"evidence", std::move(evidence)}};
}

Json to_json(const Session& s) {
  Json turns = Json::array();
  for (const auto& t : s.turns) turns.push_back(to_json(t));
  return Json{{"session_id", s.session_id}, {"created_at", s.created_at}, {"turns", std::move(turns)}};
}

namespace {

SessionTurn turn_from_json(const Json& j) {
  SessionTurn t;
  t.turn_index = j.at("turn_index").get<std::size_t>();
  t.question = j.at("question").get<std::string>();
  t.answer = j.at("answer").get<std::string>();
  t.distilled_query = j.value("distilled_query", std::string());
  t.distill_failed = j.value("distill_failed", false);
  for (const auto& e : j.at("evidence")) {
    Candidate c;
    c.entity = e.at("entity").get<std::string>();
    if (e.contains("attribute")) c.attribute = e.at("attribute").get<std::string>();
    c.score = e.at("score").get<double>();
    c.evidence_text = e.at("text").get<std::string>();
    t.evidence.push_back(std::move(c));
  }
  return t;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string random_session_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{[] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }()};
  std::lock_guard lock(mu);
  return text::hex64(gen()) + text::hex64(gen());
}

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::StorageFailure, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int idx, std::string_view v) {
    sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int idx, std::int64_t v) {
    sqlite3_bind_int64(stmt_, idx, v);
    return *this;
  }
  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(ErrorCode::StorageFailure, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  std::string text(int col) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
  }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

struct SessionStore::Impl {
  sqlite3* db = nullptr;
  mutable std::mutex mutex;

  void exec(const char* sql) const {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw Error(ErrorCode::StorageFailure, "sqlite: " + msg);
    }
  }
};

SessionStore::SessionStore(const std::filesystem::path& db_file) : impl_(std::make_unique<Impl>()) {
  if (db_file.has_parent_path()) std::filesystem::create_directories(db_file.parent_path());
  if (sqlite3_open_v2(db_file.string().c_str(), &impl_->db,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr) != SQLITE_OK) {
    const std::string msg = impl_->db ? sqlite3_errmsg(impl_->db) : "cannot allocate";
    sqlite3_close(impl_->db);
    impl_->db = nullptr;
    throw Error(ErrorCode::StorageFailure, "cannot open session store " + db_file.string() + ": " + msg);
  }
  sqlite3_busy_timeout(impl_->db, 5000);
  impl_->exec("PRAGMA journal_mode=WAL;");
  impl_->exec(
      "CREATE TABLE IF NOT EXISTS sessions(id TEXT PRIMARY KEY, created_at TEXT NOT NULL);"
      "CREATE TABLE IF NOT EXISTS turns(session_id TEXT NOT NULL, turn_index INTEGER NOT NULL,"
      " payload TEXT NOT NULL, PRIMARY KEY(session_id, turn_index));");
}

SessionStore::~SessionStore() {
  if (impl_ && impl_->db) sqlite3_close(impl_->db);
}

Session SessionStore::create() {
  Session s{random_session_id(), utc_now_iso8601(), {}};
  std::lock_guard lock(impl_->mutex);
  Statement(impl_->db, "INSERT INTO sessions(id, created_at) VALUES(?1, ?2)").bind(1, s.session_id).bind(2, s.created_at).step();
  return s;
}

std::optional<Session> SessionStore::get(std::string_view id) const {
  std::lock_guard lock(impl_->mutex);
  Statement q(impl_->db, "SELECT id, created_at FROM sessions WHERE id = ?1");
  q.bind(1, id);
  if (!q.step()) return std::nullopt;
  Session s{q.text(0), q.text(1), {}};
  Statement t(impl_->db, "SELECT payload FROM turns WHERE session_id = ?1 ORDER BY turn_index");
  t.bind(1, id);
  while (t.step()) {
    try {
      s.turns.push_back(turn_from_json(Json::parse(t.text(0))));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::StorageFailure, std::string("corrupt turn record: ") + e.what());
    }
  }
  return s;
}

void SessionStore::append_turn(std::string_view id, const SessionTurn& turn) {
  std::lock_guard lock(impl_->mutex);
  Statement(impl_->db, "INSERT INTO turns(session_id, turn_index, payload) VALUES(?1, ?2, ?3)")
      .bind(1, id)
      .bind(2, static_cast<std::int64_t>(turn.turn_index))
      .bind(3, to_json(turn).dump())
      .step();
}

}  // namespace distillrag
