#include "distillrag/knowledge_index.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

namespace fs = std::filesystem;

std::string_view to_string(Granularity g) noexcept {
  return g == Granularity::coarse ? "coarse" : "fine";
}

Granularity parse_granularity(std::string_view s) {
  if (s == "coarse") return Granularity::coarse;
  if (s == "fine") return Granularity::fine;
  throw Error(ErrorCode::InvalidArgument, "granularity must be coarse or fine, got " + std::string(s));
}

std::string_view to_string(FineMode m) noexcept {
  return m == FineMode::flat ? "flat" : "hierarchical";
}

FineMode parse_fine_mode(std::string_view s) {
  if (s == "flat") return FineMode::flat;
  if (s == "hierarchical") return FineMode::hierarchical;
  throw Error(ErrorCode::InvalidArgument, "mode must be hierarchical or flat, got " + std::string(s));
}

std::string Candidate::display_key() const {
  if (!attribute) return entity;
  return entity + std::string(kItemSeparator) + *attribute;
}

Json to_json(const RetrievalResult& r) {
  Json cands = Json::array();
  for (const auto& c : r.candidates) {
    Json j{{"key", c.display_key()}, {"entity", c.entity}, {"score", c.score}, {"text", c.evidence_text}};
    if (c.attribute) j["attribute"] = *c.attribute;
    cands.push_back(std::move(j));
  }
  return Json{{"granularity", to_string(r.granularity)}, {"candidates", std::move(cands)}};
}

std::vector<MedicineRecord> parse_database(std::string_view json_text) {
  OrderedJson doc;
  try {
    doc = OrderedJson::parse(json_text);
  } catch (const OrderedJson::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("database is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::InvalidRecord, "database must be a JSON array of records");

  std::vector<MedicineRecord> records;
  records.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& r = doc[i];
    const std::string where = "record " + std::to_string(i);
    if (!r.is_object()) throw Error(ErrorCode::InvalidRecord, where + " is not an object", {}, i);
    MedicineRecord rec;
    try {
      if (r.contains("id")) {
        rec.id = r["id"].is_string() ? r["id"].get<std::string>() : r["id"].dump();
      }
      rec.generic_name = r.at("generic_name").get<std::string>();
      if (r.contains("brand_names")) rec.brand_names = r["brand_names"].get<std::vector<std::string>>();
      const auto& attrs = r.at("attributes");
      if (!attrs.is_object()) throw Error(ErrorCode::InvalidRecord, where + ": attributes must be an object", {}, i);
      for (const auto& [name, value] : attrs.items()) {
        rec.attributes.emplace_back(name, value.get<std::string>());
      }
    } catch (const OrderedJson::exception& e) {
      throw Error(ErrorCode::InvalidRecord, where + ": " + e.what(), {}, i);
    }
    if (rec.id.empty()) rec.id = rec.generic_name;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<MedicineRecord> load_database(const fs::path& path) {
  return parse_database(io::read_file(path));
}

namespace {

constexpr char kCacheMagic[8] = {'D', 'R', 'A', 'G', 'E', 'M', 'B', '1'};

fs::path cache_file(const fs::path& dir, std::uint64_t cfg_hash, std::uint64_t content_hash) {
  return dir / ("embeddings-" + text::hex64(cfg_hash) + "-" + text::hex64(content_hash) + ".bin");
}

std::uint64_t content_hash(const std::vector<std::string>& texts) {
  std::uint64_t h = text::stable_hash64("distillrag-db");
  for (const auto& t : texts) {
    h = text::stable_hash64(t, h);
  }
  return text::stable_hash64(std::to_string(texts.size()), h);
}

struct CacheHeader {
  char magic[8];
  std::uint64_t cfg_hash;
  std::uint64_t content_hash;
  std::uint64_t count;
  std::uint64_t dim;
};

std::optional<std::vector<EmbeddingVector>> read_cache(const fs::path& file, std::uint64_t cfg_hash,
                                                       std::uint64_t db_hash, std::size_t count) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  CacheHeader h{};
  if (!in.read(reinterpret_cast<char*>(&h), sizeof(h))) return std::nullopt;
  if (std::memcmp(h.magic, kCacheMagic, sizeof(kCacheMagic)) != 0 || h.cfg_hash != cfg_hash ||
      h.content_hash != db_hash || h.count != count || h.dim == 0) {
    return std::nullopt;
  }
  std::vector<EmbeddingVector> out(count);
  for (auto& v : out) {
    v.values.resize(h.dim);
    if (!in.read(reinterpret_cast<char*>(v.values.data()),
                 static_cast<std::streamsize>(h.dim * sizeof(double)))) {
      return std::nullopt;
    }
  }
  return out;
}

void write_cache(const fs::path& file, std::uint64_t cfg_hash, std::uint64_t db_hash,
                 const std::vector<EmbeddingVector>& vectors) {
  CacheHeader h{};
  std::memcpy(h.magic, kCacheMagic, sizeof(kCacheMagic));
  h.cfg_hash = cfg_hash;
  h.content_hash = db_hash;
  h.count = vectors.size();
  h.dim = vectors.empty() ? 0 : vectors.front().dim();
  std::string blob(reinterpret_cast<const char*>(&h), sizeof(h));
  for (const auto& v : vectors) {
    blob.append(reinterpret_cast<const char*>(v.values.data()), v.values.size() * sizeof(double));
  }
  fs::create_directories(file.parent_path());
  io::write_file_atomic(file, blob);
}

}  // namespace

KnowledgeIndex KnowledgeIndex::build(const std::vector<MedicineRecord>& records, const Embedder& embedder,
                                     const BuildOptions& options) {
  if (records.empty()) throw Error(ErrorCode::EmptyDatabase, "database contains no records");

  KnowledgeIndex index;
  index.entities_.reserve(records.size());
  std::vector<std::string> texts;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::string key = text::normalize_key(rec.generic_name);
    if (key.empty()) {
      throw Error(ErrorCode::InvalidRecord, "record " + std::to_string(i) + " has a blank generic_name", {}, i);
    }
    if (index.by_key_.contains(key)) {
      throw Error(ErrorCode::DuplicateEntity, "duplicate entity: " + rec.generic_name, {}, i);
    }
    if (rec.attributes.empty()) {
      throw Error(ErrorCode::InvalidRecord, "entity " + rec.generic_name + " has no attributes", {}, i);
    }

    EntityNode node;
    node.record = rec;
    node.record.generic_name = std::string(text::trim(rec.generic_name));
    const std::string& name = node.record.generic_name;

    node.embed_text = name;
    for (const auto& brand : rec.brand_names) {
      if (text::is_blank(brand)) continue;
      node.embed_text.append(kBrandSeparator);
      node.embed_text.append(text::trim(brand));
    }

    std::vector<std::string> attr_keys;
    for (const auto& [attr, body] : rec.attributes) {
      const std::string attr_key = text::normalize_key(attr);
      if (attr_key.empty() || text::is_blank(body)) {
        throw Error(ErrorCode::InvalidRecord,
                    "entity " + name + " has a blank attribute name or text (" + attr + ")", {}, i);
      }
      if (std::find(attr_keys.begin(), attr_keys.end(), attr_key) != attr_keys.end()) {
        throw Error(ErrorCode::InvalidRecord, "entity " + name + " repeats attribute " + attr, {}, i);
      }
      attr_keys.push_back(attr_key);

      EntityAttributeItem item;
      item.entity_key = name;
      item.attribute_key = {name, std::string(text::trim(attr))};
      item.attribute_text = body;
      item.item_text = name + std::string(kItemSeparator) + body;
      node.items.push_back(std::move(item));
    }

    index.by_key_.emplace(key, index.entities_.size());
    index.normalized_keys_.push_back(key);
    index.normalized_attrs_.push_back(std::move(attr_keys));
    index.item_count_ += node.items.size();
    index.entities_.push_back(std::move(node));
  }

  // Entity texts first, then every item in entity order.
  for (const auto& node : index.entities_) texts.push_back(node.embed_text);
  for (const auto& node : index.entities_) {
    for (const auto& item : node.items) texts.push_back(item.item_text);
  }

  std::optional<std::vector<EmbeddingVector>> vectors;
  fs::path cache_path;
  const std::uint64_t cfg_hash = text::stable_hash64(embedder.fingerprint());
  const std::uint64_t db_hash = content_hash(texts);
  if (options.cache_dir) {
    cache_path = cache_file(*options.cache_dir, cfg_hash, db_hash);
    vectors = read_cache(cache_path, cfg_hash, db_hash, texts.size());
    index.from_cache_ = vectors.has_value();
  }
  if (!vectors) {
    try {
      vectors = embedder.embed_batch(texts);
    } catch (const Error& e) {
      std::string context = "while embedding the database";
      if (auto at = e.index(); at && *at < texts.size()) context += " (text: \"" + texts[*at] + "\")";
      throw Error(e.code(), std::string(e.what()) + " " + context, e.step(), e.index());
    }
    if (options.cache_dir) write_cache(cache_path, cfg_hash, db_hash, *vectors);
  }

  std::size_t pos = 0;
  for (auto& node : index.entities_) node.embedding = std::move((*vectors)[pos++]);
  for (auto& node : index.entities_) {
    for (auto& item : node.items) item.embedding = std::move((*vectors)[pos++]);
  }
  return index;
}

const EntityNode* KnowledgeIndex::find_entity(std::string_view entity_key) const {
  const auto it = by_key_.find(text::normalize_key(entity_key));
  return it == by_key_.end() ? nullptr : &entities_[it->second];
}

const std::vector<EntityAttributeItem>& KnowledgeIndex::get_entity(std::string_view entity_key) const {
  const auto* node = find_entity(entity_key);
  if (!node) throw Error(ErrorCode::UnknownEntity, "unknown entity: " + std::string(entity_key));
  return node->items;
}

const EntityAttributeItem& KnowledgeIndex::get_attribute_item(std::string_view entity_key,
                                                              std::string_view attribute) const {
  const auto it = by_key_.find(text::normalize_key(entity_key));
  if (it == by_key_.end()) throw Error(ErrorCode::UnknownEntity, "unknown entity: " + std::string(entity_key));
  const auto& attrs = normalized_attrs_[it->second];
  const auto want = text::normalize_key(attribute);
  const auto at = std::find(attrs.begin(), attrs.end(), want);
  if (at == attrs.end()) {
    throw Error(ErrorCode::UnknownAttribute,
                "unknown attribute: " + std::string(entity_key) + " / " + std::string(attribute));
  }
  return entities_[it->second].items[static_cast<std::size_t>(at - attrs.begin())];
}

void KnowledgeIndex::require_searchable(std::string_view query, std::size_t num) const {
  if (text::is_blank(query)) throw Error(ErrorCode::EmptyQuery, "search query is blank");
  if (num == 0) throw Error(ErrorCode::InvalidArgument, "num must be >= 1");
  if (entities_.empty()) throw Error(ErrorCode::EmptyDatabase, "index is empty");
}

std::vector<std::size_t> KnowledgeIndex::rank_entities(const EmbeddingVector& q, std::size_t limit) const {
  std::vector<double> scores(entities_.size());
  for (std::size_t i = 0; i < entities_.size(); ++i) scores[i] = cosine(q, entities_[i].embedding);
  std::vector<std::size_t> order(entities_.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(limit, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return normalized_keys_[a] < normalized_keys_[b];
                    });
  order.resize(k);
  return order;
}

std::string KnowledgeIndex::coarse_evidence(const EntityNode& node) const {
  std::string out;
  for (std::size_t i = 0; i < node.items.size(); ++i) {
    if (i) out.push_back('\n');
    out.append(node.items[i].item_text);
  }
  return out;
}

RetrievalResult KnowledgeIndex::search_coarse(std::string_view query, std::size_t num,
                                              const Embedder& embedder) const {
  require_searchable(query, num);
  return search_coarse(embedder.embed_text(query), num);
}

RetrievalResult KnowledgeIndex::search_coarse(const EmbeddingVector& query, std::size_t num) const {
  if (num == 0) throw Error(ErrorCode::InvalidArgument, "num must be >= 1");
  if (entities_.empty()) throw Error(ErrorCode::EmptyDatabase, "index is empty");
  RetrievalResult result;
  result.granularity = Granularity::coarse;
  for (std::size_t idx : rank_entities(query, num)) {
    const auto& node = entities_[idx];
    result.candidates.push_back(
        {node.record.generic_name, std::nullopt, cosine(query, node.embedding), coarse_evidence(node)});
  }
  return result;
}

RetrievalResult KnowledgeIndex::search_fine(std::string_view query, std::size_t num, const Embedder& embedder,
                                            const FineSearchOptions& options) const {
  require_searchable(query, num);
  return search_fine(embedder.embed_text(query), num, options);
}

RetrievalResult KnowledgeIndex::search_fine(const EmbeddingVector& query, std::size_t num,
                                            const FineSearchOptions& options) const {
  if (num == 0) throw Error(ErrorCode::InvalidArgument, "num must be >= 1");
  if (entities_.empty()) throw Error(ErrorCode::EmptyDatabase, "index is empty");

  std::vector<std::size_t> pool;
  if (options.mode == FineMode::hierarchical) {
    if (options.fanout == 0) throw Error(ErrorCode::InvalidArgument, "fanout must be >= 1");
    pool = rank_entities(query, options.fanout);
  } else {
    pool.resize(entities_.size());
    std::iota(pool.begin(), pool.end(), 0);
  }

  std::vector<ScoredRef> scored;
  for (std::size_t e : pool) {
    const auto& items = entities_[e].items;
    for (std::size_t i = 0; i < items.size(); ++i) scored.push_back({cosine(query, items[i].embedding), e, i});
  }
  const std::size_t k = std::min(num, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [&](const ScoredRef& a, const ScoredRef& b) {
                      if (a.score != b.score) return a.score > b.score;
                      const auto& ka = normalized_keys_[a.entity];
                      const auto& kb = normalized_keys_[b.entity];
                      if (ka != kb) return ka < kb;
                      return normalized_attrs_[a.entity][a.item] < normalized_attrs_[b.entity][b.item];
                    });
  scored.resize(k);

  RetrievalResult result;
  result.granularity = Granularity::fine;
  for (const auto& s : scored) {
    const auto& item = entities_[s.entity].items[s.item];
    result.candidates.push_back({item.attribute_key.entity, item.attribute_key.attribute, s.score, item.item_text});
  }
  return result;
}

}  // namespace distillrag
