#include <doctest.h>

#include "distillrag/errors.hpp"
#include "distillrag/knowledge_index.hpp"
#include "distillrag/text.hpp"
#include "test_support.hpp"

using namespace distillrag;
using testsupport::GeneratedDbOptions;

namespace {

MedicineRecord rec(std::string name, std::vector<std::string> brands,
                   std::vector<std::pair<std::string, std::string>> attrs) {
  return MedicineRecord{name, std::move(name), std::move(brands), std::move(attrs)};
}

std::vector<MedicineRecord> small_db() {
  return {rec("Amoxicillin", {"Amoxil"},
              {{"usage", "Bacterial infections."}, {"contraindications", "Penicillin allergy."},
               {"adverse_reactions", "Diarrhoea and rash."}}),
          rec("Ibuprofen", {"Advil", "Motrin"},
              {{"usage", "Pain and fever."}, {"dosage", "200-400 mg every 4-6 hours."},
               {"interactions", "Warfarin raises bleeding risk."}})};
}

ErrorCode build_error(const std::vector<MedicineRecord>& db) {
  const LocalHashEmbedder e(64);
  try {
    (void)KnowledgeIndex::build(db, e);
  } catch (const Error& err) {
    return err.code();
  }
  FAIL("expected build to fail");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("build counts entities and items") {
  const LocalHashEmbedder e(64);
  const auto idx = KnowledgeIndex::build(small_db(), e);
  CHECK(idx.stats().entities == 2);
  CHECK(idx.stats().items == 6);
  const auto& items = idx.get_entity("Amoxicillin");
  REQUIRE(items.size() == 3);
  CHECK(items[0].item_text == "Amoxicillin — Bacterial infections.");
  CHECK(items[1].attribute_key == AttributeKey{"Amoxicillin", "contraindications"});
  CHECK(idx.find_entity("ibuprofen")->embed_text == "Ibuprofen; Advil; Motrin");
}

TEST_CASE("build rejects bad databases") {
  CHECK(build_error({}) == ErrorCode::EmptyDatabase);
  CHECK(build_error({rec("amoxicillin", {}, {{"usage", "x"}}), rec(" AMOXICILLIN", {}, {{"usage", "y"}})}) ==
        ErrorCode::DuplicateEntity);
  CHECK(build_error({rec("Amoxicillin", {}, {})}) == ErrorCode::InvalidRecord);
  CHECK(build_error({rec("  ", {}, {{"usage", "x"}})}) == ErrorCode::InvalidRecord);
  CHECK(build_error({rec("A", {}, {{"usage", " "}})}) == ErrorCode::InvalidRecord);
}

TEST_CASE("lookups normalize keys and classify misses") {
  const LocalHashEmbedder e(64);
  const auto idx = KnowledgeIndex::build(small_db(), e);
  CHECK(&idx.get_entity("amoxicillin") == &idx.get_entity("Amoxicillin"));
  CHECK(idx.get_attribute_item("AMOXICILLIN", "Contraindications").attribute_text == "Penicillin allergy.");
  try {
    (void)idx.get_entity("no-such-drug");
    FAIL("expected UnknownEntity");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownEntity);
  }
  try {
    (void)idx.get_attribute_item("Amoxicillin", "flavor");
    FAIL("expected UnknownAttribute");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownAttribute);
  }
  try {
    (void)idx.get_attribute_item("Ghostdrug", "usage");
    FAIL("expected UnknownEntity");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::UnknownEntity);
  }
  CHECK(idx.find_entity("ghost") == nullptr);
}

TEST_CASE("coarse search: self-similarity, full listing and prefix property") {
  const LocalHashEmbedder e(256);
  const auto idx = KnowledgeIndex::build(small_db(), e);
  const auto top = idx.search_coarse("Ibuprofen; Advil; Motrin", 1, e);
  REQUIRE(top.candidates.size() == 1);
  CHECK(top.candidates[0].entity == "Ibuprofen");
  CHECK(top.candidates[0].score == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(top.candidates[0].attribute.has_value());
  CHECK(top.candidates[0].evidence_text.find("Ibuprofen — Pain and fever.") != std::string::npos);

  const auto all = idx.search_coarse("pain", 10, e);
  CHECK(all.candidates.size() == 2);
  CHECK(all.candidates[0].score >= all.candidates[1].score);
  CHECK(idx.search_coarse("pain", 1, e).candidates[0].entity == all.candidates[0].entity);
}

TEST_CASE("search validates its arguments") {
  const LocalHashEmbedder e(64);
  const auto idx = KnowledgeIndex::build(small_db(), e);
  CHECK_THROWS_AS(idx.search_coarse("  ", 3, e), Error);
  CHECK_THROWS_AS(idx.search_fine("x", 0, e), Error);
  CHECK_THROWS_AS(idx.search_fine("x", 3, e, {FineMode::hierarchical, 0}), Error);
}

TEST_CASE("fine search: flat item self-similarity and hierarchical restriction") {
  const LocalHashEmbedder e(256);
  const auto db = testsupport::generate_database(GeneratedDbOptions{.entities = 5, .attributes = {"a", "b", "c"}});
  const auto idx = KnowledgeIndex::build(db, e);
  const auto& target = idx.get_entity(db[2].generic_name)[1];

  const auto flat = idx.search_fine(target.item_text, 3, e, {FineMode::flat, 10});
  REQUIRE(flat.candidates.size() == 3);
  CHECK(flat.candidates[0].entity == db[2].generic_name);
  CHECK(flat.candidates[0].attribute == std::optional<std::string>("b"));

  const auto oracle = testsupport::oracle_fine_flat(db, e, target.item_text, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(flat.candidates[i].entity == oracle[i].entity);
    CHECK(*flat.candidates[i].attribute == oracle[i].attribute);
    CHECK(flat.candidates[i].score == oracle[i].score);
  }

  const std::string q = "renal dose";
  const auto coarse = idx.search_coarse(q, 2, e);
  const auto hier = idx.search_fine(q, 15, e, {FineMode::hierarchical, 2});
  CHECK(hier.candidates.size() == 6);
  for (const auto& c : hier.candidates) {
    CHECK((c.entity == coarse.candidates[0].entity || c.entity == coarse.candidates[1].entity));
  }

  const auto h_all = idx.search_fine(q, 15, e, {FineMode::hierarchical, 5});
  const auto f_all = idx.search_fine(q, 15, e, {FineMode::flat, 1});
  REQUIRE(h_all.candidates.size() == f_all.candidates.size());
  for (std::size_t i = 0; i < h_all.candidates.size(); ++i) {
    CHECK(h_all.candidates[i].display_key() == f_all.candidates[i].display_key());
  }
}

TEST_CASE("ties are broken by normalized key") {
  // A single-character query shares no trigram bucket with many items, so
  // most scores are exactly zero and ordering falls to the key rule.
  const LocalHashEmbedder e(1024);
  const auto db = testsupport::generate_database(GeneratedDbOptions{.entities = 30});
  const auto idx = KnowledgeIndex::build(db, e);
  const auto res = idx.search_coarse("の", 30, e);
  std::size_t ties = 0;
  for (std::size_t i = 1; i < res.candidates.size(); ++i) {
    const auto& a = res.candidates[i - 1];
    const auto& b = res.candidates[i];
    CHECK(a.score >= b.score);
    if (a.score == b.score) {
      ++ties;
      CHECK(text::normalize_key(a.entity) < text::normalize_key(b.entity));
    }
  }
  CHECK(ties > 0);
}

TEST_CASE("repeated queries return identical results") {
  const LocalHashEmbedder e(128);
  const auto idx = KnowledgeIndex::build(small_db(), e);
  CHECK(to_json(idx.search_fine("bleeding", 4, e)) == to_json(idx.search_fine("bleeding", 4, e)));
}

TEST_CASE("database parsing keeps attribute order and defaults ids") {
  const auto db = parse_database(R"([{"generic_name":"Zeta","attributes":{"z":"1","a":"2"},"extra":true}])");
  REQUIRE(db.size() == 1);
  CHECK(db[0].id == "Zeta");
  CHECK(db[0].attributes[0].first == "z");
  CHECK(db[0].attributes[1].first == "a");
  CHECK_THROWS_AS(parse_database("{"), Error);
  CHECK_THROWS_AS(parse_database(R"({"generic_name":"x"})"), Error);
  CHECK_THROWS_AS(parse_database(R"([{"attributes":{}}])"), Error);
}

TEST_CASE("embedding cache is reused and keyed by content") {
  const testsupport::TempDir dir;
  const LocalHashEmbedder e(64);
  const BuildOptions opts{dir.path()};
  const auto first = KnowledgeIndex::build(small_db(), e, opts);
  CHECK_FALSE(first.loaded_from_cache());
  const auto second = KnowledgeIndex::build(small_db(), e, opts);
  CHECK(second.loaded_from_cache());
  CHECK(second.entities()[1].items[2].embedding == first.entities()[1].items[2].embedding);

  auto changed = small_db();
  changed[0].attributes[0].second = "Something else.";
  CHECK_FALSE(KnowledgeIndex::build(changed, e, opts).loaded_from_cache());
  CHECK_FALSE(KnowledgeIndex::build(small_db(), LocalHashEmbedder(128), opts).loaded_from_cache());
}
