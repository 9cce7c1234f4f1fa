#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "distillrag/embedder.hpp"
#include "distillrag/errors.hpp"
#include "fake_server.hpp"

using namespace distillrag;

namespace {

double norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("local-hash embedding is deterministic and unit norm") {
  const LocalHashEmbedder e(256);
  const auto a = e.embed_text("Amoxicillin");
  CHECK(a == e.embed_text("Amoxicillin"));
  CHECK(a.dim() == 256);
  CHECK(std::abs(norm(a) - 1.0) <= 1e-6);
  const auto c = e.embed_text("Amoxicillin contraindications");
  CHECK(cosine(c, c) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("local-hash is case-insensitive and handles short and CJK text") {
  const LocalHashEmbedder e(64);
  CHECK(e.embed_text("AMOXICILLIN") == e.embed_text("amoxicillin"));
  for (const char* t : {"a", "ab", "阿", "阿莫西林", "x y"}) {
    const auto v = e.embed_text(t);
    CHECK(v.dim() == 64);
    CHECK(std::abs(norm(v) - 1.0) <= 1e-6);
  }
}

TEST_CASE("local-hash rejects blank text and tiny dimensions") {
  const LocalHashEmbedder e(32);
  CHECK(code_of([&] { (void)e.embed_text("   "); }) == ErrorCode::EmptyText);
  CHECK_THROWS_AS(LocalHashEmbedder(8), Error);
}

TEST_CASE("embed_batch matches embed_text element-wise") {
  const LocalHashEmbedder e(128);
  const std::vector<std::string> texts{"a", "b", "ibuprofen dosage"};
  const auto batch = e.embed_batch(texts);
  REQUIRE(batch.size() == 3);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(batch[i] == e.embed_text(texts[i]));
  CHECK(e.embed_batch(std::vector<std::string>{}).empty());

  try {
    (void)e.embed_batch(std::vector<std::string>{"x", ""});
    FAIL("expected EmptyText");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::EmptyText);
    REQUIRE(err.index().has_value());
    CHECK(*err.index() == 1);
  }
}

TEST_CASE("cosine of random local-hash vectors stays in [-1, 1]") {
  const LocalHashEmbedder e(48);
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> ch('a', 'z');
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    for (int k = 0; k < 1 + i % 17; ++k) a.push_back(static_cast<char>(ch(rng)));
    for (int k = 0; k < 1 + i % 11; ++k) b.push_back(static_cast<char>(ch(rng)));
    const double c = cosine(e.embed_text(a), e.embed_text(b));
    CHECK(c >= -1.0 - 1e-6);
    CHECK(c <= 1.0 + 1e-6);
  }
}

TEST_CASE("embedder config validation and json") {
  EmbedderConfig c;
  c.kind = EmbedderKind::remote;
  CHECK_THROWS_AS(c.validate(), Error);
  c.endpoint = "http://127.0.0.1:1/v1/embeddings";
  CHECK_NOTHROW(c.validate());

  const auto parsed = embedder_config_from_json(Json{{"kind", "local-hash"}, {"dim", 64}});
  CHECK(parsed.kind == EmbedderKind::local_hash);
  CHECK(parsed.dim == 64);
  CHECK(embedder_config_from_json(to_json(parsed)).fingerprint() == parsed.fingerprint());
  CHECK_THROWS_AS(embedder_config_from_json(Json{{"kind", "local-hash"}, {"dim", 4}}).validate(), Error);
}

TEST_CASE("remote embedder speaks the embeddings wire format") {
  testsupport::FakeServer fake;
  std::atomic<int> calls{0};
  fake.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    const auto body = Json::parse(req.body);
    CHECK(body.at("model") == "tiny");
    Json data = Json::array();
    const auto& input = body.at("input");
    // Reply out of order to exercise the index field.
    for (std::size_t i = input.size(); i-- > 0;) {
      const double len = static_cast<double>(input[i].get<std::string>().size());
      data.push_back({{"index", i}, {"embedding", {len, 1.0, 0.0}}});
    }
    res.set_content(Json{{"data", data}}.dump(), "application/json");
  });
  fake.start();

  EmbedderConfig c;
  c.kind = EmbedderKind::remote;
  c.endpoint = fake.url("/v1/embeddings");
  c.model_name = "tiny";
  c.dim = 0;
  c.batch_size = 2;
  const RemoteEmbedder e(c);
  const auto out = e.embed_batch(std::vector<std::string>{"a", "abc", "abcd"});
  REQUIRE(out.size() == 3);
  CHECK(calls == 2);
  CHECK(out[1].values[0] == doctest::Approx(3.0 / std::sqrt(10.0)));
  CHECK(std::abs(norm(out[2]) - 1.0) <= 1e-9);
}

TEST_CASE("remote embedder classifies failures") {
  testsupport::FakeServer fake;
  std::atomic<int> flaky{0};
  fake.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (flaky++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"data":[{"index":0,"embedding":[1,0]}]})", "application/json");
  });
  fake.server().Post("/wrongdim", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"index":0,"embedding":[1,0,0]}]})", "application/json");
  });
  fake.server().Post("/zero", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"index":0,"embedding":[0,0]}]})", "application/json");
  });
  fake.start();

  EmbedderConfig c;
  c.kind = EmbedderKind::remote;
  c.retries = 1;

  c.endpoint = fake.url("/flaky");
  c.dim = 2;
  CHECK(RemoteEmbedder(c).embed_text("x").dim() == 2);

  c.endpoint = fake.url("/wrongdim");
  CHECK(code_of([&] { (void)RemoteEmbedder(c).embed_text("x"); }) == ErrorCode::DimensionMismatch);

  c.endpoint = fake.url("/zero");
  CHECK(code_of([&] { (void)RemoteEmbedder(c).embed_text("x"); }) == ErrorCode::RemoteUnavailable);

  c.endpoint = "http://127.0.0.1:1/none";
  c.retries = 0;
  c.timeout = std::chrono::milliseconds(500);
  CHECK(code_of([&] { (void)RemoteEmbedder(c).embed_text("x"); }) == ErrorCode::RemoteUnavailable);
}
