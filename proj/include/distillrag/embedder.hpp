#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distillrag/json_types.hpp"

namespace distillrag {

/// Unit-norm dense vector. All embedders in this library return vectors with
/// | ||v|| - 1 | <= 1e-6, so cosine similarity is a plain dot product.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Dot product of two unit vectors. Summation runs in index order so callers
/// that recompute it the same way get bit-identical scores.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Scales in place to unit L2 norm. Returns false for the zero vector.
bool l2_normalize(std::vector<double>& values);

enum class EmbedderKind { remote, local_hash };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::local_hash;
  std::string endpoint;    // remote only
  std::string model_name;  // remote only
  std::string api_key;     // remote only, sent as a bearer token
  std::size_t dim = 256;   // local-hash; for remote, 0 means "learn from first reply"
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  std::size_t batch_size = 64;

  void validate() const;
  /// Stable identifier of everything that influences the produced vectors.
  std::string fingerprint() const;
};

EmbedderConfig embedder_config_from_json(const Json& j);
Json to_json(const EmbedderConfig& c);
/// Applies DISTILLRAG_EMBED_ENDPOINT when set (remote kind only).
void apply_env_overrides(EmbedderConfig& c);

class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual EmbeddingVector embed_text(std::string_view text) const = 0;
  /// result[i] corresponds to texts[i]. Blank inputs raise EmptyText with
  /// the offending index before any work is done.
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;
  virtual std::string fingerprint() const = 0;
};

/// Character-trigram feature hashing. The text is case-folded, trimmed and
/// wrapped in boundary sentinels so even a single character yields a trigram.
class LocalHashEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kMinDim = 16;
  static constexpr std::uint64_t kSeed = 0x5eed'd157'111a'9a9eULL;

  explicit LocalHashEmbedder(std::size_t dim = 256);

  EmbeddingVector embed_text(std::string_view text) const override;
  std::string fingerprint() const override;
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
};

/// Client for a JSON embeddings endpoint:
///   POST {"model": ..., "input": [...]} -> {"data": [{"index", "embedding"}]}
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderConfig config);

  EmbeddingVector embed_text(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override;
  std::string fingerprint() const override;

 private:
  std::vector<EmbeddingVector> request(std::span<const std::string> texts) const;

  EmbedderConfig config_;
  mutable std::atomic<std::size_t> learned_dim_{0};
};

std::shared_ptr<const Embedder> make_embedder(const EmbedderConfig& config);

}  // namespace distillrag
