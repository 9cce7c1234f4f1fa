#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distillrag/json_types.hpp"
#include "distillrag/knowledge_index.hpp"
#include "distillrag/pipeline.hpp"
#include "distillrag/toolcall.hpp"

namespace distillrag {

enum class Language { en, zh };

/// One benchmark item: dialogue history, final question, and the coarse
/// (entity) and fine (entity, attribute) retrieval ground truth.
struct DialogueSample {
  std::string id;
  Language language = Language::en;
  DialogueHistory history;
  std::string question;
  std::string k_c;
  std::vector<AttributeKey> k_f;
  std::optional<std::string> category;
};

DialogueSample sample_from_json(const Json& j);
Json to_json(const DialogueSample& s);

/// Parses a JSONL dataset. Blank lines are skipped; line numbers in errors
/// are 1-based physical lines.
std::vector<DialogueSample> parse_dataset(std::string_view jsonl);
std::vector<DialogueSample> load_dataset(const std::filesystem::path& path);

/// Confirms every ground-truth key exists in the index (SchemaViolation).
void validate_against_index(const std::vector<DialogueSample>& samples, const KnowledgeIndex& index);

enum class FineHitRule { any, all };

FineHitRule parse_fine_hit_rule(std::string_view s);

struct Hit {
  bool hit = false;
  /// 1-based position of the first matching candidate over the whole list.
  std::optional<std::size_t> rank;
};

Hit hit_at(const std::vector<std::string>& candidates, std::string_view truth, std::size_t num);
Hit hit_at(const std::vector<AttributeKey>& candidates, const std::vector<AttributeKey>& truth,
           std::size_t num, FineHitRule rule = FineHitRule::any);

enum class QueryMode { distill, history, last_question };

QueryMode parse_query_mode(std::string_view s);
std::string_view to_string(QueryMode m) noexcept;

struct SampleOutcome {
  std::string id;
  bool followed = false;
  std::optional<std::size_t> coarse_rank;
  std::optional<std::size_t> fine_rank;
  std::string distilled_query;
  std::map<std::size_t, bool> coarse_hits;
  std::map<std::size_t, bool> fine_hits;
  std::optional<std::string> error;
};

struct EvalReport {
  std::string query_mode;
  std::size_t n_samples = 0;
  double instruction_follow_rate = 0.0;
  std::map<std::size_t, double> hr_coarse;
  std::map<std::size_t, double> hr_fine;
  std::vector<SampleOutcome> per_sample;  // sorted by id
};

Json to_json(const EvalReport& r);

/// Fixed-width table: follow rate | coarse HR@num... | fine HR@num...
std::string format_report_table(const EvalReport& r, std::string_view label);

struct EvalOptions {
  std::vector<std::size_t> nums{1, 5, 10, 50};
  QueryMode query_mode = QueryMode::distill;
  FineHitRule fine_rule = FineHitRule::any;
  std::size_t workers = 4;
};

/// Runs query formulation and coarse + fine retrieval (max(nums) candidates
/// each) for every sample. Per-sample failures are recorded and counted as
/// misses, never aborting the run.
EvalReport evaluate_retrieval(const std::vector<DialogueSample>& samples, const Pipeline& pipeline,
                              const KnowledgeIndex& index, const EvalOptions& options = {});

}  // namespace distillrag
