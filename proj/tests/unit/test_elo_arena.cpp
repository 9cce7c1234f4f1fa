#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "distillrag/elo_arena.hpp"
#include "distillrag/errors.hpp"

using namespace distillrag;

namespace {

/// Referee that prefers whichever anonymized answer starts with `marker`.
std::shared_ptr<LlmClient> marker_referee(std::string marker) {
  return std::make_shared<CallbackLlmClient>([marker](std::span<const ChatMessage> m) -> std::string {
    const auto& p = m.back().content;
    if (p.find("Answer 1:\n" + marker) != std::string::npos) return "1";
    if (p.find("Answer 2:\n" + marker) != std::string::npos) return "2";
    return "TIE";
  });
}

}  // namespace

TEST_CASE("expected score formula") {
  CHECK(expected_score(1000, 1000) == 0.5);
  CHECK(std::abs(expected_score(1200, 1600) - 1.0 / 11.0) < 1e-12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(0, 3000);
  for (int i = 0; i < 100; ++i) {
    const double a = d(rng), b = d(rng);
    CHECK(std::abs(expected_score(a, b) + expected_score(b, a) - 1.0) < 1e-12);
  }
}

TEST_CASE("update_pair") {
  EloState s;
  s.add_player("A");
  s.add_player("B");
  const auto [ra, rb] = s.update_pair("A", "B", 1.0);
  CHECK(ra == 1016.0);
  CHECK(rb == 984.0);
  CHECK(s.match_log().size() == 1);
  CHECK(s.match_log()[0].verdict == Verdict::win_a);

  EloState t;
  t.add_player("A");
  t.add_player("B");
  t.update_pair("A", "B", 0.5);
  CHECK(t.rating("A") == 1000.0);
  CHECK(t.rating("B") == 1000.0);

  CHECK_THROWS_AS(t.update_pair("A", "Z", 1.0), Error);
  CHECK_THROWS_AS(t.update_pair("A", "B", 0.3), Error);
  CHECK_THROWS_AS(t.rating("Z"), Error);
}

TEST_CASE("referee reply grammar") {
  CHECK(parse_referee_reply(" 1 ") == 1);
  CHECK(parse_referee_reply("2\n") == 2);
  CHECK(parse_referee_reply("tie") == 0);
  CHECK(parse_referee_reply("TIE") == 0);
  CHECK_FALSE(parse_referee_reply("1.").has_value());
  CHECK_FALSE(parse_referee_reply("Answer 1").has_value());
  CHECK_FALSE(parse_referee_reply("").has_value());
}

TEST_CASE("judge_match de-anonymizes the verdict") {
  ScriptedLlmClient one({}, "1");
  CHECK(judge_match(one, "q", "ev", "a", "b", PresentationOrder::ab).verdict == Verdict::win_a);
  CHECK(judge_match(one, "q", "ev", "a", "b", PresentationOrder::ba).verdict == Verdict::win_b);
  ScriptedLlmClient tie({}, "Tie");
  CHECK(judge_match(tie, "q", "ev", "a", "b", PresentationOrder::ba).verdict == Verdict::draw);

  ScriptedLlmClient chatty({}, "the first answer seems better");
  const auto out = judge_match(chatty, "q", "ev", "a", "b", PresentationOrder::ab);
  CHECK(out.verdict == Verdict::skipped);
  CHECK(out.attempts == 3);
  CHECK(chatty.call_count() == 3);
  CHECK(chatty.transcript().back().size() == 5);

  ScriptedLlmClient broken({{"Question", "", "timeout"}});
  CHECK(judge_match(broken, "q", "ev", "a", "b", PresentationOrder::ab).verdict == Verdict::skipped);
  CHECK_THROWS_AS(judge_match(one, "q", "ev", " ", "b", PresentationOrder::ab), Error);
}

TEST_CASE("judge prompt places answers in presentation order") {
  const auto p = build_judge_prompt("Q?", "", "first", "second");
  CHECK(p.find("Answer 1:\nfirst") != std::string::npos);
  CHECK(p.find("Answer 2:\nsecond") != std::string::npos);
  CHECK(p.find("(none)") != std::string::npos);
}

TEST_CASE("seeded permutation is a deterministic permutation") {
  const auto p = seeded_permutation(50, 42);
  CHECK(p == seeded_permutation(50, 42));
  CHECK(p != seeded_permutation(50, 43));
  CHECK(std::set<std::size_t>(p.begin(), p.end()).size() == 50);
  CHECK(seeded_permutation(0, 1).empty());
  // Reference values from an independent mt19937_64 implementation.
  CHECK(seeded_permutation(8, 0) == std::vector<std::size_t>{4, 5, 2, 0, 7, 1, 3, 6});
}

TEST_CASE("tournament with an always-winning player") {
  PlayerAnswers players{{"good", {{"s1", "WIN a"}, {"s2", "WIN b"}}}, {"bad", {{"s1", "meh"}, {"s2", "meh"}}}};
  const std::vector<ArenaSample> samples{{"s1", "q1", "e1"}, {"s2", "q2", ""}};
  auto referee = marker_referee("WIN");
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto r = run_tournament(players, samples, *referee, {.rounds = 3, .seed = seed});
    REQUIRE(r.ranking.size() == 2);
    CHECK(r.ranking[0].id == "good");
    CHECK(r.ranking[0].rank == 1);
    CHECK(r.state.match_log().size() == 6);
    CHECK(std::abs(r.state.rating("good") + r.state.rating("bad") - 2000.0) < 1e-9);
  }
}

TEST_CASE("position-biased referee with alternating order") {
  // Sequential Elo does not return exactly to the start here: after the first
  // game the ratings are asymmetric, so the reversed game moves them by a
  // different amount. Check the replay and a drift bound instead.
  PlayerAnswers players{{"a", {{"s1", "x"}, {"s2", "y"}}}, {"b", {{"s1", "z"}, {"s2", "w"}}}};
  const std::vector<ArenaSample> samples{{"s1", "q1", ""}, {"s2", "q2", ""}};
  ScriptedLlmClient first({}, "1");
  for (std::size_t rounds : {2u, 4u}) {
    const auto r = run_tournament(players, samples, first, {.rounds = rounds, .seed = 11});
    std::map<std::string, double> replay{{"a", 1000.0}, {"b", 1000.0}};
    std::size_t ab = 0;
    for (const auto& m : r.state.match_log()) {
      REQUIRE(m.verdict != Verdict::skipped);
      ab += m.presentation_order == PresentationOrder::ab ? 1 : 0;
      const double s_a = m.verdict == Verdict::win_a ? 1.0 : 0.0;
      const double e_a = 1.0 / (1.0 + std::pow(10.0, (replay[m.player_b] - replay[m.player_a]) / 400.0));
      replay[m.player_a] += 32.0 * (s_a - e_a);
      replay[m.player_b] -= 32.0 * (s_a - e_a);
    }
    CHECK(ab * 2 == r.state.match_log().size());
    for (const auto& [id, rating] : r.state.ratings()) {
      CHECK(std::abs(rating - replay[id]) <= 1e-9);
      CHECK(std::abs(rating - 1000.0) < 16.0);
    }
    CHECK(std::abs(r.state.rating("a") + r.state.rating("b") - 2000.0) < 1e-9);
  }
}

TEST_CASE("tournament validation and output") {
  PlayerAnswers players{{"a", {{"s1", "x"}}}, {"b", {}}};
  const std::vector<ArenaSample> samples{{"s1", "q", ""}};
  ScriptedLlmClient tie({}, "TIE");
  CHECK_THROWS_AS(run_tournament(players, samples, tie, {}), Error);

  players["b"]["s1"] = "y";
  const TournamentConfig cfg{.rounds = 2, .seed = 3, .bootstrap = 5};
  const auto r = run_tournament(players, samples, tie, cfg);
  CHECK(r.state.rating("a") == 1000.0);
  REQUIRE(r.ranking[0].median_rating.has_value());
  const auto j = to_json(r, cfg);
  CHECK(j.at("k_factor") == 32.0);
  CHECK(j.contains("defaults_note"));
  CHECK(format_ranking_table(r.ranking).find("Rating") != std::string::npos);
  const auto log = match_log_jsonl(r.state.match_log());
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);
}

TEST_CASE("answer jsonl parsing") {
  const auto m = parse_answer_jsonl("{\"sample_id\":\"s1\",\"answer\":\"x\"}\n\n{\"sample_id\":\"s2\",\"answer\":\"y\"}");
  CHECK(m.size() == 2);
  CHECK_THROWS_AS(parse_answer_jsonl("{\"sample_id\":\"s1\",\"answer\":\"x\"}\n{\"sample_id\":\"s1\",\"answer\":\"z\"}"),
                  Error);
  CHECK_THROWS_AS(parse_answer_jsonl("nope"), Error);
}
