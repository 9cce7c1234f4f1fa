#include "distillrag/benchmark_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

namespace {

[[noreturn]] void schema_violation(const std::string& id, const std::string& field, const std::string& why) {
  throw Error(ErrorCode::SchemaViolation, "sample " + (id.empty() ? std::string("<no id>") : id) + ": field '" +
                                              field + "' " + why);
}

std::string required_string(const Json& j, const char* field, const std::string& id) {
  if (!j.contains(field) || !j.at(field).is_string()) schema_violation(id, field, "must be a string");
  auto v = j.at(field).get<std::string>();
  if (text::is_blank(v)) schema_violation(id, field, "must not be blank");
  return v;
}

}  // namespace

DialogueSample sample_from_json(const Json& j) {
  if (!j.is_object()) schema_violation("", "<root>", "must be an object");
  DialogueSample s;
  s.id = required_string(j, "id", "");
  const std::string lang = j.value("language", std::string("en"));
  if (lang == "en") {
    s.language = Language::en;
  } else if (lang == "zh") {
    s.language = Language::zh;
  } else {
    schema_violation(s.id, "language", "must be en or zh");
  }
  if (j.contains("history")) {
    if (!j.at("history").is_array()) schema_violation(s.id, "history", "must be an array");
    for (const auto& turn : j.at("history")) {
      if (!turn.is_object() || !turn.contains("q") || !turn.at("q").is_string() ||
          text::is_blank(turn.at("q").get<std::string>())) {
        schema_violation(s.id, "history", "turns need a non-blank 'q'");
      }
      const auto& a = turn.contains("a") ? turn.at("a") : Json("");
      if (!a.is_string()) schema_violation(s.id, "history", "turn 'a' must be a string");
      s.history.push_back({turn.at("q").get<std::string>(), a.get<std::string>()});
    }
  }
  s.question = required_string(j, "question", s.id);
  s.k_c = required_string(j, "k_c", s.id);
  const std::string kc_norm = text::normalize_key(s.k_c);
  if (j.contains("k_f")) {
    if (!j.at("k_f").is_array()) schema_violation(s.id, "k_f", "must be an array");
    for (const auto& k : j.at("k_f")) {
      if (!k.is_object() || !k.contains("entity") || !k.contains("attribute") || !k.at("entity").is_string() ||
          !k.at("attribute").is_string()) {
        schema_violation(s.id, "k_f", "elements need string 'entity' and 'attribute'");
      }
      AttributeKey key{k.at("entity").get<std::string>(), k.at("attribute").get<std::string>()};
      if (text::normalize_key(key.entity) != kc_norm) {
        schema_violation(s.id, "k_f", "entity '" + key.entity + "' differs from k_c '" + s.k_c + "'");
      }
      s.k_f.push_back(std::move(key));
    }
  }
  if (j.contains("category") && !j.at("category").is_null()) {
    if (!j.at("category").is_string()) schema_violation(s.id, "category", "must be a string");
    s.category = j.at("category").get<std::string>();
  }
  return s;
}

Json to_json(const DialogueSample& s) {
  Json history = Json::array();
  for (const auto& t : s.history) history.push_back({{"q", t.question}, {"a", t.answer}});
  Json kf = Json::array();
  for (const auto& k : s.k_f) kf.push_back({{"entity", k.entity}, {"attribute", k.attribute}});
  Json j{{"id", s.id},
         {"language", s.language == Language::zh ? "zh" : "en"},
         {"history", std::move(history)},
         {"question", s.question},
         {"k_c", s.k_c},
         {"k_f", std::move(kf)}};
  if (s.category) j["category"] = *s.category;
  return j;
}

std::vector<DialogueSample> parse_dataset(std::string_view jsonl) {
  std::vector<DialogueSample> out;
  std::set<std::string> ids;
  const auto lines = text::split(jsonl, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    Json j;
    try {
      j = Json::parse(lines[i]);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(i + 1) + ": " + e.what(), {}, i + 1);
    }
    DialogueSample s;
    try {
      s = sample_from_json(j);
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(i + 1) + ": " + e.what(), {}, i + 1);
    }
    if (!ids.insert(s.id).second) {
      throw Error(ErrorCode::DuplicateId, "line " + std::to_string(i + 1) + ": duplicate id " + s.id, {}, i + 1);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<DialogueSample> load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_file(path));
}

void validate_against_index(const std::vector<DialogueSample>& samples, const KnowledgeIndex& index) {
  for (const auto& s : samples) {
    if (!index.find_entity(s.k_c)) schema_violation(s.id, "k_c", "'" + s.k_c + "' is not a database key");
    for (const auto& k : s.k_f) {
      try {
        index.get_attribute_item(k.entity, k.attribute);
      } catch (const Error&) {
        schema_violation(s.id, "k_f", "'" + k.entity + " / " + k.attribute + "' is not a database key");
      }
    }
  }
}

FineHitRule parse_fine_hit_rule(std::string_view s) {
  if (s == "any") return FineHitRule::any;
  if (s == "all") return FineHitRule::all;
  throw Error(ErrorCode::InvalidArgument, "fine hit rule must be any or all");
}

Hit hit_at(const std::vector<std::string>& candidates, std::string_view truth, std::size_t num) {
  if (num == 0) throw Error(ErrorCode::InvalidArgument, "num must be >= 1");
  const std::string want = text::normalize_key(truth);
  Hit h;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (text::normalize_key(candidates[i]) == want) {
      h.rank = i + 1;
      break;
    }
  }
  h.hit = h.rank && *h.rank <= num;
  return h;
}

Hit hit_at(const std::vector<AttributeKey>& candidates, const std::vector<AttributeKey>& truth, std::size_t num,
           FineHitRule rule) {
  if (num == 0) throw Error(ErrorCode::InvalidArgument, "num must be >= 1");
  std::set<std::pair<std::string, std::string>> wanted;
  for (const auto& k : truth) wanted.emplace(text::normalize_key(k.entity), text::normalize_key(k.attribute));

  Hit h;
  if (wanted.empty()) return h;
  std::set<std::pair<std::string, std::string>> found_in_top;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    std::pair<std::string, std::string> key{text::normalize_key(candidates[i].entity),
                                            text::normalize_key(candidates[i].attribute)};
    if (!wanted.contains(key)) continue;
    if (!h.rank) h.rank = i + 1;
    if (i < num) found_in_top.insert(std::move(key));
  }
  h.hit = rule == FineHitRule::any ? !found_in_top.empty() : found_in_top.size() == wanted.size();
  return h;
}

QueryMode parse_query_mode(std::string_view s) {
  if (s == "distill") return QueryMode::distill;
  if (s == "history") return QueryMode::history;
  if (s == "last_question") return QueryMode::last_question;
  throw Error(ErrorCode::InvalidArgument, "query mode must be distill, history or last_question");
}

std::string_view to_string(QueryMode m) noexcept {
  switch (m) {
    case QueryMode::distill: return "distill";
    case QueryMode::history: return "history";
    case QueryMode::last_question: return "last_question";
  }
  return "distill";
}

Json to_json(const EvalReport& r) {
  auto rates = [](const std::map<std::size_t, double>& m) {
    Json j = Json::object();
    for (const auto& [num, v] : m) j[std::to_string(num)] = v;
    return j;
  };
  auto rank = [](const std::optional<std::size_t>& v) { return v ? Json(*v) : Json(nullptr); };
  Json samples = Json::array();
  for (const auto& s : r.per_sample) {
    Json j{{"id", s.id},
           {"followed", s.followed},
           {"coarse_rank", rank(s.coarse_rank)},
           {"fine_rank", rank(s.fine_rank)},
           {"distilled_query", s.distilled_query}};
    if (s.error) j["error"] = *s.error;
    samples.push_back(std::move(j));
  }
  return Json{{"query_mode", r.query_mode},
              {"n_samples", r.n_samples},
              {"instruction_follow_rate", r.instruction_follow_rate},
              {"hr_coarse", rates(r.hr_coarse)},
              {"hr_fine", rates(r.hr_fine)},
              {"per_sample", std::move(samples)}};
}

std::string format_report_table(const EvalReport& r, std::string_view label) {
  auto pct = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%7.2f", v * 100.0);
    return std::string(buf);
  };
  auto hr_header = [](const std::map<std::size_t, double>& m) {
    std::string out;
    for (const auto& [num, v] : m) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%7s", ("HR@" + std::to_string(num)).c_str());
      out += buf;
    }
    return out;
  };
  const std::size_t group_width = 7 * r.hr_coarse.size();
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };

  std::string out;
  out += pad("", 20) + " | " + pad("", 11) + " | " + pad("Retrieved Doc.", group_width) + " | Retrieved Attr.\n";
  out += pad("Query", 20) + " | " + pad("Ins. follow", 11) + " | " + hr_header(r.hr_coarse) + " | " +
         hr_header(r.hr_fine) + "\n";
  out += std::string(20 + 3 + 11 + 3 + group_width + 3 + 7 * r.hr_fine.size(), '-') + "\n";
  std::string row = pad(std::string(label), 20) + " | " + pad(pct(r.instruction_follow_rate), 11) + " | ";
  for (const auto& [num, v] : r.hr_coarse) row += pct(v);
  row += " | ";
  for (const auto& [num, v] : r.hr_fine) row += pct(v);
  out += row + "\n";
  return out;
}

EvalReport evaluate_retrieval(const std::vector<DialogueSample>& samples, const Pipeline& pipeline,
                              const KnowledgeIndex& index, const EvalOptions& options) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no samples to evaluate");
  if (options.nums.empty() || !std::is_sorted(options.nums.begin(), options.nums.end()) ||
      options.nums.front() == 0) {
    throw Error(ErrorCode::InvalidArgument, "nums must be a non-empty ascending list of positive integers");
  }
  const std::size_t max_num = options.nums.back();
  const auto& settings = pipeline.config().retrieval;
  const FineSearchOptions fine_opts{settings.mode, settings.fanout};

  std::vector<SampleOutcome> outcomes(samples.size());
  io::parallel_for(samples.size(), options.workers, [&](std::size_t i) {
    const auto& s = samples[i];
    auto& o = outcomes[i];
    o.id = s.id;
    for (std::size_t num : options.nums) {
      o.coarse_hits[num] = false;
      o.fine_hits[num] = false;
    }
    try {
      std::string query;
      if (options.query_mode == QueryMode::distill) {
        const auto outcome = pipeline.distill(s.history, s.question);
        if (const auto* f = std::get_if<DistillFailure>(&outcome); f && f->kind == DistillFailureKind::transport) {
          throw Error(f->transport_error, "distiller transport failure: " + f->detail, "distill");
        }
        o.followed = std::holds_alternative<ToolCall>(outcome);
        query = pipeline.query_for(outcome, s.history, s.question);
      } else {
        o.followed = true;
        query = baseline_query(s.history, s.question,
                               options.query_mode == QueryMode::history ? BaselineKind::history
                                                                        : BaselineKind::last_question);
      }
      o.distilled_query = query;

      const auto qv = pipeline.embedder().embed_text(query);
      const auto coarse = index.search_coarse(qv, max_num);
      const auto fine = index.search_fine(qv, max_num, fine_opts);

      std::vector<std::string> coarse_keys;
      for (const auto& c : coarse.candidates) coarse_keys.push_back(c.entity);
      std::vector<AttributeKey> fine_keys;
      for (const auto& c : fine.candidates) fine_keys.push_back({c.entity, c.attribute.value_or("")});

      for (std::size_t num : options.nums) {
        const auto ch = hit_at(coarse_keys, s.k_c, num);
        const auto fh = hit_at(fine_keys, s.k_f, num, options.fine_rule);
        o.coarse_hits[num] = ch.hit;
        o.fine_hits[num] = fh.hit;
        o.coarse_rank = ch.rank;
        o.fine_rank = fh.rank;
      }
    } catch (const std::exception& e) {
      o.followed = false;
      o.error = e.what();
      for (auto& [num, hit] : o.coarse_hits) hit = false;
      for (auto& [num, hit] : o.fine_hits) hit = false;
      o.coarse_rank.reset();
      o.fine_rank.reset();
    }
  });

  EvalReport report;
  report.query_mode = std::string(to_string(options.query_mode));
  report.n_samples = samples.size();
  std::size_t followed = 0;
  for (std::size_t num : options.nums) {
    std::size_t ch = 0, fh = 0;
    for (const auto& o : outcomes) {
      ch += o.coarse_hits.at(num) ? 1 : 0;
      fh += o.fine_hits.at(num) ? 1 : 0;
    }
    report.hr_coarse[num] = static_cast<double>(ch) / static_cast<double>(samples.size());
    report.hr_fine[num] = static_cast<double>(fh) / static_cast<double>(samples.size());
  }
  for (const auto& o : outcomes) followed += o.followed ? 1 : 0;
  report.instruction_follow_rate = static_cast<double>(followed) / static_cast<double>(samples.size());

  std::sort(outcomes.begin(), outcomes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  report.per_sample = std::move(outcomes);
  return report;
}

}  // namespace distillrag
