#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "distillrag/embedder.hpp"
#include "distillrag/json_types.hpp"

namespace distillrag {

/// Separator placed between the generic name and the attribute text of an
/// entity-attribute item.
inline constexpr std::string_view kItemSeparator = " — ";
/// Separator between generic name and brand names in the entity embedding text.
inline constexpr std::string_view kBrandSeparator = "; ";

/// One medicine. Attribute order is the order given in the database file.
struct MedicineRecord {
  std::string id;
  std::string generic_name;
  std::vector<std::string> brand_names;
  std::vector<std::pair<std::string, std::string>> attributes;
};

/// (entity, attribute) composite key, in display casing.
struct AttributeKey {
  std::string entity;
  std::string attribute;

  bool operator==(const AttributeKey&) const = default;
};

struct EntityAttributeItem {
  std::string entity_key;
  AttributeKey attribute_key;
  std::string attribute_text;
  std::string item_text;
  EmbeddingVector embedding;
};

struct EntityNode {
  MedicineRecord record;
  std::string embed_text;
  EmbeddingVector embedding;
  std::vector<EntityAttributeItem> items;
};

enum class Granularity { coarse, fine };
enum class FineMode { hierarchical, flat };

std::string_view to_string(Granularity g) noexcept;
Granularity parse_granularity(std::string_view s);
std::string_view to_string(FineMode m) noexcept;
FineMode parse_fine_mode(std::string_view s);

struct Candidate {
  std::string entity;
  std::optional<std::string> attribute;  // set for fine-grained hits
  double score = 0.0;
  std::string evidence_text;

  /// The entity name, or entity and attribute joined by kItemSeparator.
  std::string display_key() const;
};

struct RetrievalResult {
  Granularity granularity = Granularity::coarse;
  std::vector<Candidate> candidates;
};

Json to_json(const RetrievalResult& r);

struct IndexStats {
  std::size_t entities = 0;
  std::size_t items = 0;
};

struct FineSearchOptions {
  FineMode mode = FineMode::hierarchical;
  std::size_t fanout = 10;
};

struct BuildOptions {
  /// When set, embeddings are read from / written to a sidecar file in this
  /// directory keyed by (embedder fingerprint, database content hash).
  std::optional<std::filesystem::path> cache_dir;
};

/// Parses the database JSON (top-level array of records). Unknown fields are
/// ignored; attribute order follows the file.
std::vector<MedicineRecord> parse_database(std::string_view json_text);
std::vector<MedicineRecord> load_database(const std::filesystem::path& path);

/// Entity-oriented store: entities keyed by normalized generic name, each
/// owning its embedded attribute items. Immutable once built, so a single
/// instance can be shared between threads.
class KnowledgeIndex {
 public:
  static KnowledgeIndex build(const std::vector<MedicineRecord>& records, const Embedder& embedder,
                              const BuildOptions& options = {});

  const std::vector<EntityAttributeItem>& get_entity(std::string_view entity_key) const;
  const EntityAttributeItem& get_attribute_item(std::string_view entity_key,
                                                std::string_view attribute) const;
  const EntityNode* find_entity(std::string_view entity_key) const;

  RetrievalResult search_coarse(std::string_view query, std::size_t num,
                                const Embedder& embedder) const;
  RetrievalResult search_coarse(const EmbeddingVector& query, std::size_t num) const;

  RetrievalResult search_fine(std::string_view query, std::size_t num, const Embedder& embedder,
                              const FineSearchOptions& options = {}) const;
  RetrievalResult search_fine(const EmbeddingVector& query, std::size_t num,
                              const FineSearchOptions& options = {}) const;

  IndexStats stats() const noexcept { return {entities_.size(), item_count_}; }
  /// Entities in database file order.
  const std::vector<EntityNode>& entities() const noexcept { return entities_; }
  /// True when the last build() reused a cached embedding file.
  bool loaded_from_cache() const noexcept { return from_cache_; }

 private:
  struct ScoredRef {
    double score;
    std::size_t entity;
    std::size_t item;  // ignored for coarse
  };

  void require_searchable(std::string_view query, std::size_t num) const;
  std::vector<std::size_t> rank_entities(const EmbeddingVector& q, std::size_t limit) const;
  std::string coarse_evidence(const EntityNode& node) const;

  std::vector<EntityNode> entities_;
  std::vector<std::string> normalized_keys_;
  std::vector<std::vector<std::string>> normalized_attrs_;
  std::unordered_map<std::string, std::size_t> by_key_;
  std::size_t item_count_ = 0;
  bool from_cache_ = false;
};

}  // namespace distillrag
