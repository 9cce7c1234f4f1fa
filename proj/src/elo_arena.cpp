#include "distillrag/elo_arena.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "distillrag/prompt_assets.hpp"
#include "distillrag/text.hpp"

namespace distillrag {

double expected_score(double rating_a, double rating_b) noexcept {
  return 1.0 / (1.0 + std::pow(10.0, (rating_b - rating_a) / 400.0));
}

std::string_view to_string(PresentationOrder o) noexcept { return o == PresentationOrder::ab ? "ab" : "ba"; }

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::win_a: return "win_a";
    case Verdict::win_b: return "win_b";
    case Verdict::draw: return "draw";
    case Verdict::skipped: return "skipped";
  }
  return "skipped";
}

Json to_json(const MatchRecord& m) {
  Json j{{"sample_id", m.sample_id},
         {"player_a", m.player_a},
         {"player_b", m.player_b},
         {"presentation_order", to_string(m.presentation_order)},
         {"verdict", to_string(m.verdict)},
         {"s_a", m.s_a ? Json(*m.s_a) : Json(nullptr)},
         {"referee_raw", m.referee_raw}};
  if (!m.skip_reason.empty()) j["skip_reason"] = m.skip_reason;
  return j;
}

EloState::EloState(double k_factor, double initial_rating) : k_(k_factor), initial_(initial_rating) {
  if (!(k_factor > 0.0)) throw Error(ErrorCode::InvalidArgument, "K-factor must be positive");
}

void EloState::add_player(const std::string& id) { add_player(id, initial_); }

void EloState::add_player(const std::string& id, double rating) { ratings_.insert_or_assign(id, rating); }

bool EloState::has_player(std::string_view id) const { return ratings_.find(id) != ratings_.end(); }

double EloState::rating(std::string_view id) const {
  const auto it = ratings_.find(id);
  if (it == ratings_.end()) throw Error(ErrorCode::UnknownPlayer, "unknown player: " + std::string(id));
  return it->second;
}

std::pair<double, double> EloState::update_pair(const std::string& a, const std::string& b, double s_a,
                                                MatchRecord record) {
  const auto ia = ratings_.find(a);
  const auto ib = ratings_.find(b);
  if (ia == ratings_.end()) throw Error(ErrorCode::UnknownPlayer, "unknown player: " + a);
  if (ib == ratings_.end()) throw Error(ErrorCode::UnknownPlayer, "unknown player: " + b);
  if (s_a != 1.0 && s_a != 0.5 && s_a != 0.0) {
    throw Error(ErrorCode::InvalidArgument, "score must be 1, 0.5 or 0");
  }
  const double delta = k_ * (s_a - expected_score(ia->second, ib->second));
  ia->second += delta;
  ib->second -= delta;

  record.player_a = a;
  record.player_b = b;
  record.s_a = s_a;
  record.verdict = s_a == 1.0 ? Verdict::win_a : (s_a == 0.0 ? Verdict::win_b : Verdict::draw);
  log_.push_back(std::move(record));
  return {ia->second, ib->second};
}

void EloState::record_skip(MatchRecord record) {
  record.verdict = Verdict::skipped;
  record.s_a.reset();
  log_.push_back(std::move(record));
}

std::string build_judge_prompt(std::string_view question, std::string_view evidence, std::string_view answer_1,
                               std::string_view answer_2) {
  return text::render_template(assets::k_judge_template,
                               {{"question", std::string(question)},
                                {"evidence", text::is_blank(evidence) ? std::string("(none)") : std::string(evidence)},
                                {"answer_1", std::string(answer_1)},
                                {"answer_2", std::string(answer_2)}});
}

std::optional<int> parse_referee_reply(std::string_view reply) noexcept {
  const auto t = text::trim(reply);
  if (t == "1") return 1;
  if (t == "2") return 2;
  if (t.size() == 3 && text::icontains(t, "tie")) return 0;
  return std::nullopt;
}

namespace {

constexpr std::string_view kReask =
    "\n\nYour previous reply could not be parsed. Reply with exactly one token: 1, 2, or TIE.";

}  // namespace

JudgeOutcome judge_match(LlmClient& referee, std::string_view question, std::string_view evidence,
                         std::string_view answer_a, std::string_view answer_b, PresentationOrder order,
                         int max_reasks) {
  if (text::is_blank(answer_a) || text::is_blank(answer_b)) {
    throw Error(ErrorCode::InvalidArgument, "both answers must be non-empty");
  }
  const bool ab = order == PresentationOrder::ab;
  const std::string prompt = build_judge_prompt(question, evidence, ab ? answer_a : answer_b, ab ? answer_b : answer_a);

  JudgeOutcome out;
  std::vector<ChatMessage> messages{{Role::user, prompt}};
  for (int attempt = 0; attempt <= max_reasks; ++attempt) {
    ++out.attempts;
    try {
      out.raw = referee.complete(messages);
    } catch (const std::exception& e) {
      out.verdict = Verdict::skipped;
      out.skip_reason = std::string("referee transport failure: ") + e.what();
      return out;
    }
    if (const auto choice = parse_referee_reply(out.raw)) {
      if (*choice == 0) {
        out.verdict = Verdict::draw;
      } else {
        const bool first = *choice == 1;
        out.verdict = (first == ab) ? Verdict::win_a : Verdict::win_b;
      }
      return out;
    }
    messages.push_back({Role::assistant, out.raw});
    messages.push_back({Role::user, prompt + std::string(kReask)});
  }
  out.verdict = Verdict::skipped;
  out.skip_reason = "unparseable referee reply after " + std::to_string(out.attempts) + " attempts";
  return out;
}

std::map<std::string, std::string> parse_answer_jsonl(std::string_view data) {
  std::map<std::string, std::string> out;
  const auto lines = text::split(data, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::is_blank(lines[i])) continue;
    try {
      const auto j = Json::parse(lines[i]);
      auto id = j.at("sample_id").get<std::string>();
      if (!out.emplace(id, j.at("answer").get<std::string>()).second) {
        throw Error(ErrorCode::DuplicateId, "line " + std::to_string(i + 1) + ": duplicate sample_id " + id, {}, i + 1);
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(i + 1) + ": " + e.what(), {}, i + 1);
    }
  }
  return out;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 gen(seed);
  auto bounded = [&gen](std::uint64_t range) {
    const std::uint64_t threshold = (0 - range) % range;
    std::uint64_t r = gen();
    while (r < threshold) r = gen();
    return r % range;
  };
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<RankingRow> rank_players(const EloState& state) {
  std::vector<RankingRow> rows;
  for (const auto& [id, rating] : state.ratings()) rows.push_back({id, rating, 0, std::nullopt});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.rating > b.rating; });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
  return rows;
}

namespace {

struct ScheduledMatch {
  const ArenaSample* sample;
  std::string a;
  std::string b;
  PresentationOrder order;
  JudgeOutcome outcome;
};

void apply(EloState& state, const ScheduledMatch& m) {
  MatchRecord rec;
  rec.sample_id = m.sample->id;
  rec.player_a = m.a;
  rec.player_b = m.b;
  rec.presentation_order = m.order;
  rec.referee_raw = m.outcome.raw;
  switch (m.outcome.verdict) {
    case Verdict::win_a: state.update_pair(m.a, m.b, 1.0, std::move(rec)); break;
    case Verdict::win_b: state.update_pair(m.a, m.b, 0.0, std::move(rec)); break;
    case Verdict::draw: state.update_pair(m.a, m.b, 0.5, std::move(rec)); break;
    case Verdict::skipped:
      rec.skip_reason = m.outcome.skip_reason;
      state.record_skip(std::move(rec));
      break;
  }
}

EloState replay(const std::vector<ScheduledMatch>& matches, const std::vector<std::string>& ids,
                const TournamentConfig& config, std::uint64_t seed) {
  EloState state(config.k_factor, config.initial_rating);
  for (const auto& id : ids) state.add_player(id);
  for (std::size_t idx : seeded_permutation(matches.size(), seed)) apply(state, matches[idx]);
  return state;
}

}  // namespace

TournamentResult run_tournament(const PlayerAnswers& players, const std::vector<ArenaSample>& samples,
                                LlmClient& referee, const TournamentConfig& config) {
  if (config.rounds == 0) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 1");
  std::vector<std::string> ids;
  for (const auto& [id, answers] : players) {
    ids.push_back(id);
    for (const auto& s : samples) {
      const auto it = answers.find(s.id);
      if (it == answers.end() || text::is_blank(it->second)) {
        throw Error(ErrorCode::MissingAnswer, "player " + id + " has no answer for sample " + s.id);
      }
    }
  }

  std::vector<ScheduledMatch> matches;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        for (std::size_t r = 0; r < config.rounds; ++r) {
          matches.push_back({&s, ids[i], ids[j], r % 2 == 0 ? PresentationOrder::ab : PresentationOrder::ba, {}});
        }
      }
    }
  }

  io::parallel_for(matches.size(), config.workers, [&](std::size_t k) {
    auto& m = matches[k];
    try {
      m.outcome = judge_match(referee, m.sample->question, m.sample->evidence, players.at(m.a).at(m.sample->id),
                              players.at(m.b).at(m.sample->id), m.order);
    } catch (const std::exception& e) {
      m.outcome.verdict = Verdict::skipped;
      m.outcome.skip_reason = e.what();
    }
  });

  TournamentResult result{replay(matches, ids, config, config.seed), {}};
  result.ranking = rank_players(result.state);

  if (config.bootstrap > 0) {
    std::map<std::string, std::vector<double>> samples_by_player;
    for (std::size_t b = 1; b <= config.bootstrap; ++b) {
      const auto state = replay(matches, ids, config, config.seed + 0x9e3779b97f4a7c15ULL * b);
      for (const auto& [id, rating] : state.ratings()) samples_by_player[id].push_back(rating);
    }
    for (auto& row : result.ranking) {
      auto& v = samples_by_player[row.id];
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      row.median_rating = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
  }
  return result;
}

Json to_json(const TournamentResult& r, const TournamentConfig& config) {
  Json ranking = Json::array();
  for (const auto& row : r.ranking) {
    Json j{{"id", row.id}, {"rating", row.rating}, {"rank", row.rank}};
    if (row.median_rating) j["median_rating"] = *row.median_rating;
    ranking.push_back(std::move(j));
  }
  std::size_t skipped = 0;
  for (const auto& m : r.state.match_log()) skipped += m.verdict == Verdict::skipped ? 1 : 0;
  return Json{{"k_factor", config.k_factor},
              {"initial_rating", config.initial_rating},
              {"rounds", config.rounds},
              {"seed", config.seed},
              {"bootstrap", config.bootstrap},
              {"matches", r.state.match_log().size()},
              {"skipped", skipped},
              {"defaults_note", "initial rating, K-factor, rounds and referee prompt are configurable defaults"},
              {"ranking", std::move(ranking)}};
}

std::string format_ranking_table(const std::vector<RankingRow>& ranking) {
  std::string out = "Rank  Player                Rating\n";
  out += "----  --------------------  ---------\n";
  for (const auto& row : ranking) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%4zu  %-20s  %9.2f\n", row.rank, row.id.c_str(), row.rating);
    out += buf;
  }
  return out;
}

std::string match_log_jsonl(const std::vector<MatchRecord>& log) {
  std::string out;
  for (const auto& m : log) out.append(to_json(m).dump()).push_back('\n');
  return out;
}

}  // namespace distillrag
