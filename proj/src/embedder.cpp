#include "distillrag/embedder.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "distillrag/errors.hpp"
#include "distillrag/text.hpp"
#include "http_util.hpp"

namespace distillrag {

namespace {

constexpr char32_t kBoundary = 0x0002;

}  // namespace

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine of vectors with dims " +
                                                  std::to_string(a.dim()) + " and " +
                                                  std::to_string(b.dim()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  return dot;
}

bool l2_normalize(std::vector<double>& values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (!(sq > 0.0) || !std::isfinite(sq)) return false;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
  return true;
}

void EmbedderConfig::validate() const {
  if (kind == EmbedderKind::remote && endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "remote embedder requires an endpoint");
  }
  if (kind == EmbedderKind::local_hash && dim < LocalHashEmbedder::kMinDim) {
    throw Error(ErrorCode::InvalidArgument,
                "local-hash embedder dim must be >= 16, got " + std::to_string(dim));
  }
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "embedder batch_size must be >= 1");
}

std::string EmbedderConfig::fingerprint() const {
  if (kind == EmbedderKind::local_hash) return LocalHashEmbedder(dim).fingerprint();
  return "remote:" + endpoint + "|" + model_name + "|" + std::to_string(dim);
}

EmbedderConfig embedder_config_from_json(const Json& j) {
  EmbedderConfig c;
  const std::string kind = j.value("kind", std::string("local-hash"));
  if (kind == "remote") {
    c.kind = EmbedderKind::remote;
    c.dim = 0;
  } else if (kind == "local-hash") {
    c.kind = EmbedderKind::local_hash;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown embedder kind: " + kind);
  }
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model_name = j.value("model", c.model_name);
  c.api_key = j.value("api_key", c.api_key);
  c.dim = j.value("dim", c.dim);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long>(c.timeout.count())));
  c.retries = j.value("retries", c.retries);
  c.batch_size = j.value("batch_size", c.batch_size);
  return c;
}

Json to_json(const EmbedderConfig& c) {
  Json j{{"kind", c.kind == EmbedderKind::remote ? "remote" : "local-hash"}, {"dim", c.dim}};
  if (c.kind == EmbedderKind::remote) {
    j["endpoint"] = c.endpoint;
    j["model"] = c.model_name;
    j["timeout_ms"] = c.timeout.count();
    j["retries"] = c.retries;
    j["batch_size"] = c.batch_size;
  }
  return j;
}

void apply_env_overrides(EmbedderConfig& c) {
  if (c.kind != EmbedderKind::remote) return;
  if (const char* v = std::getenv("DISTILLRAG_EMBED_ENDPOINT"); v && *v) c.endpoint = v;
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) const {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::is_blank(texts[i])) {
      throw Error(ErrorCode::EmptyText, "blank text at index " + std::to_string(i), {}, i);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

LocalHashEmbedder::LocalHashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim < kMinDim) {
    throw Error(ErrorCode::InvalidArgument, "local-hash embedder dim must be >= 16");
  }
}

EmbeddingVector LocalHashEmbedder::embed_text(std::string_view input) const {
  const auto trimmed = text::trim(input);
  if (trimmed.empty()) throw Error(ErrorCode::EmptyText, "cannot embed blank text");

  std::vector<char32_t> cps;
  cps.push_back(kBoundary);
  for (char32_t cp : text::decode_utf8(trimmed)) cps.push_back(text::fold_case(cp));
  cps.push_back(kBoundary);

  EmbeddingVector v;
  v.values.assign(dim_, 0.0);
  std::string trigram;
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    trigram.clear();
    for (std::size_t k = 0; k < 3; ++k) text::append_utf8(trigram, cps[i + k]);
    const std::uint64_t h = text::stable_hash64(trigram, kSeed);
    v.values[h % dim_] += 1.0;
  }
  // At least one trigram always exists thanks to the two boundary markers.
  l2_normalize(v.values);
  return v;
}

std::string LocalHashEmbedder::fingerprint() const {
  return "local-hash:v1:dim=" + std::to_string(dim_) + ":seed=" + text::hex64(kSeed);
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.dim != 0) learned_dim_.store(config_.dim);
}

EmbeddingVector RemoteEmbedder::embed_text(std::string_view text) const {
  const std::string owned(text);
  return embed_batch(std::span<const std::string>(&owned, 1)).front();
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) const {
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (text::is_blank(texts[i])) {
      throw Error(ErrorCode::EmptyText, "blank text at index " + std::to_string(i), {}, i);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += config_.batch_size) {
    const std::size_t len = std::min(config_.batch_size, texts.size() - start);
    auto part = request(texts.subspan(start, len));
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::request(std::span<const std::string> texts) const {
  const auto ep = detail::parse_endpoint(config_.endpoint);
  Json req{{"model", config_.model_name}, {"input", Json::array()}};
  for (const auto& t : texts) req["input"].push_back(t);
  const std::string body = req.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto client = detail::make_client(ep, config_.timeout);
    auto res = client->Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + detail::excerpt(res->body);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::RemoteUnavailable,
                  "embedding endpoint returned HTTP " + std::to_string(res->status) + ": " +
                      detail::excerpt(res->body));
    }

    std::vector<EmbeddingVector> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    try {
      const Json reply = Json::parse(res->body);
      const auto& data = reply.at("data");
      if (!data.is_array() || data.size() != texts.size()) {
        throw Error(ErrorCode::RemoteUnavailable, "embedding response has wrong item count");
      }
      for (std::size_t pos = 0; pos < data.size(); ++pos) {
        const auto& item = data[pos];
        const std::size_t idx = item.value("index", pos);
        if (idx >= texts.size() || seen[idx]) {
          throw Error(ErrorCode::RemoteUnavailable, "embedding response has bad index");
        }
        seen[idx] = true;
        out[idx].values = item.at("embedding").get<std::vector<double>>();
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::RemoteUnavailable, std::string("malformed embedding response: ") + e.what());
    }

    for (auto& v : out) {
      std::size_t expected = learned_dim_.load();
      if (expected == 0 && learned_dim_.compare_exchange_strong(expected, v.dim())) {
        expected = v.dim();
      }
      if (v.dim() != expected || v.dim() == 0) {
        throw Error(ErrorCode::DimensionMismatch, "embedding endpoint returned dim " +
                                                      std::to_string(v.dim()) + ", expected " +
                                                      std::to_string(expected));
      }
      if (!l2_normalize(v.values)) {
        throw Error(ErrorCode::RemoteUnavailable, "embedding endpoint returned a zero vector");
      }
    }
    return out;
  }
  throw Error(ErrorCode::RemoteUnavailable, "embedding endpoint unavailable: " + last_error);
}

std::string RemoteEmbedder::fingerprint() const { return config_.fingerprint(); }

std::shared_ptr<const Embedder> make_embedder(const EmbedderConfig& config) {
  config.validate();
  if (config.kind == EmbedderKind::local_hash) {
    return std::make_shared<LocalHashEmbedder>(config.dim);
  }
  return std::make_shared<RemoteEmbedder>(config);
}

}  // namespace distillrag
