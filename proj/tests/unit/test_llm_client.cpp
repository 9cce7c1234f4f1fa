#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "distillrag/errors.hpp"
#include "distillrag/llm_client.hpp"
#include "fake_server.hpp"
#include "test_support.hpp"

using namespace distillrag;

namespace {

const std::vector<ChatMessage> kAsk{{Role::user, "tell me about ibuprofen please"}};

Error error_of(LlmClient& c, std::span<const ChatMessage> msgs) {
  try {
    (void)c.complete(msgs);
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorCode::Io, "unreachable");
}

LlmConfig remote(const std::string& url) {
  LlmConfig c;
  c.kind = LlmKind::remote;
  c.endpoint = url;
  c.model_name = "m";
  c.retries = 1;
  c.timeout = std::chrono::milliseconds(300);
  return c;
}

}  // namespace

TEST_CASE("scripted client matches, falls back and records calls") {
  ScriptedLlmClient c({{"ibuprofen", "search_engine(ibuprofen dosage)", ""}}, "fallback reply");
  CHECK(c.complete(kAsk) == "search_engine(ibuprofen dosage)");
  const std::vector<ChatMessage> other{{Role::user, "hello"}};
  CHECK(c.complete(other) == "fallback reply");
  CHECK(c.call_count() == 2);
  CHECK(c.transcript()[1] == other);
  CHECK(error_of(c, {}).code() == ErrorCode::NoUserMessage);
  const std::vector<ChatMessage> ends_with_assistant{{Role::user, "a"}, {Role::assistant, "b"}};
  CHECK(error_of(c, ends_with_assistant).code() == ErrorCode::NoUserMessage);
}

TEST_CASE("scripted client raises configured errors") {
  ScriptedLlmClient c({{"t", "", "timeout"}, {"m", "", "malformed"}, {"h", "", "http_503"}});
  CHECK(error_of(c, std::vector<ChatMessage>{{Role::user, "t"}}).code() == ErrorCode::Timeout);
  CHECK(error_of(c, std::vector<ChatMessage>{{Role::user, "m"}}).code() == ErrorCode::MalformedResponse);
  const auto http = error_of(c, std::vector<ChatMessage>{{Role::user, "h"}});
  CHECK(http.code() == ErrorCode::HttpError);
  CHECK(http.http_status == 503);
}

TEST_CASE("llm config json and file loading") {
  const auto c = llm_config_from_json(Json::parse(R"({"kind":"scripted","script":[{"match":"a","reply":"b"}],
                                                     "fallback":"f"})"));
  CHECK(c.kind == LlmKind::scripted);
  REQUIRE(c.script.size() == 1);
  CHECK(c.script[0].reply == "b");
  CHECK(llm_config_from_json(to_json(c)).fallback == "f");
  CHECK_THROWS_AS(llm_config_from_json(Json::parse(R"({"kind":"remote"})")).validate(), Error);

  const testsupport::TempDir dir;
  testsupport::write_text(dir / "llm.json", R"({"kind":"remote","endpoint":"http://127.0.0.1:9/x","model":"m"})");
  setenv("DISTILLRAG_LLM_ENDPOINT", "http://127.0.0.1:7/override", 1);
  setenv("DISTILLRAG_LLM_KEY", "secret", 1);
  const auto loaded = load_llm_config(dir / "llm.json");
  unsetenv("DISTILLRAG_LLM_ENDPOINT");
  unsetenv("DISTILLRAG_LLM_KEY");
  CHECK(loaded.endpoint == "http://127.0.0.1:7/override");
  CHECK(loaded.api_key == "secret");
}

TEST_CASE("remote client speaks chat completions") {
  testsupport::FakeServer fake;
  fake.server().Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = Json::parse(req.body);
    CHECK(body.at("model") == "m");
    CHECK(body.at("temperature") == 0.0);
    CHECK(req.get_header_value("Authorization") == "Bearer k");
    const auto content = body.at("messages").back().at("content").get<std::string>();
    res.set_content(Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo: " + content}}}}}}}.dump(),
                    "application/json");
  });
  fake.start();
  auto cfg = remote(fake.url("/v1/chat/completions"));
  cfg.api_key = "k";
  RemoteLlmClient c(cfg);
  CHECK(c.complete(kAsk) == "echo: tell me about ibuprofen please");
}

TEST_CASE("remote client classifies and retries failures") {
  testsupport::FakeServer fake;
  std::atomic<int> flaky_calls{0}, bad_calls{0}, slow_calls{0};
  fake.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (flaky_calls++ == 0) {
      res.status = 502;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
  });
  fake.server().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad_calls;
    res.status = 400;
    res.set_content("nope", "text/plain");
  });
  fake.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[]})", "application/json");
  });
  fake.server().Post("/slow", [&](const httplib::Request&, httplib::Response& res) {
    ++slow_calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content(R"({"choices":[{"message":{"content":"late"}}]})", "application/json");
  });
  fake.start();

  RemoteLlmClient flaky(remote(fake.url("/flaky")));
  CHECK(flaky.complete(kAsk) == "ok");
  CHECK(flaky_calls == 2);

  RemoteLlmClient bad(remote(fake.url("/bad")));
  const auto e400 = error_of(bad, kAsk);
  CHECK(e400.code() == ErrorCode::HttpError);
  CHECK(e400.http_status == 400);
  CHECK(bad_calls == 1);

  RemoteLlmClient garbage(remote(fake.url("/garbage")));
  CHECK(error_of(garbage, kAsk).code() == ErrorCode::MalformedResponse);

  RemoteLlmClient slow(remote(fake.url("/slow")));
  CHECK(error_of(slow, kAsk).code() == ErrorCode::Timeout);
  CHECK(slow_calls == 2);

  RemoteLlmClient refused(remote("http://127.0.0.1:1/none"));
  const auto conn = error_of(refused, kAsk);
  CHECK(conn.code() == ErrorCode::HttpError);
  CHECK(conn.http_status == 0);
}
