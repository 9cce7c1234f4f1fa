#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "distillrag/json_types.hpp"
#include "distillrag/llm_client.hpp"

namespace distillrag {

inline constexpr double kDefaultInitialRating = 1000.0;
inline constexpr double kDefaultKFactor = 32.0;

/// E_A = 1 / (1 + 10^((R_B - R_A) / 400))
double expected_score(double rating_a, double rating_b) noexcept;

enum class PresentationOrder { ab, ba };
enum class Verdict { win_a, win_b, draw, skipped };

std::string_view to_string(PresentationOrder o) noexcept;
std::string_view to_string(Verdict v) noexcept;

struct MatchRecord {
  std::string sample_id;
  std::string player_a;
  std::string player_b;
  PresentationOrder presentation_order = PresentationOrder::ab;
  Verdict verdict = Verdict::skipped;
  std::optional<double> s_a;
  std::string referee_raw;
  std::string skip_reason;
};

Json to_json(const MatchRecord& m);

class EloState {
 public:
  explicit EloState(double k_factor = kDefaultKFactor, double initial_rating = kDefaultInitialRating);

  void add_player(const std::string& id);
  void add_player(const std::string& id, double rating);
  bool has_player(std::string_view id) const;
  double rating(std::string_view id) const;

  /// R'_A = R_A + K (S_A - E_A); B moves by the opposite amount. Returns the
  /// new (R_A, R_B) and appends `record` (with s_a filled in) to the log.
  std::pair<double, double> update_pair(const std::string& a, const std::string& b, double s_a,
                                        MatchRecord record = {});
  /// Logs a skipped match without touching ratings.
  void record_skip(MatchRecord record);

  const std::map<std::string, double, std::less<>>& ratings() const noexcept { return ratings_; }
  const std::vector<MatchRecord>& match_log() const noexcept { return log_; }
  double k_factor() const noexcept { return k_; }
  double initial_rating() const noexcept { return initial_; }

 private:
  double k_;
  double initial_;
  std::map<std::string, double, std::less<>> ratings_;
  std::vector<MatchRecord> log_;
};

struct JudgeOutcome {
  Verdict verdict = Verdict::skipped;
  std::string raw;       // last referee reply
  std::size_t attempts = 0;
  std::string skip_reason;
};

std::string build_judge_prompt(std::string_view question, std::string_view evidence,
                               std::string_view answer_1, std::string_view answer_2);

/// Accepts exactly "1", "2" or "TIE" (trimmed, case-insensitive).
std::optional<int> parse_referee_reply(std::string_view reply) noexcept;

/// Presents the two answers anonymized in `order`, re-asks up to
/// `max_reasks` times on unparseable replies and maps the verdict back to
/// the A/B players. Transport errors yield a skipped verdict.
JudgeOutcome judge_match(LlmClient& referee, std::string_view question, std::string_view evidence,
                         std::string_view answer_a, std::string_view answer_b,
                         PresentationOrder order, int max_reasks = 2);

struct ArenaSample {
  std::string id;
  std::string question;
  std::string evidence;
};

/// player id -> (sample id -> answer)
using PlayerAnswers = std::map<std::string, std::map<std::string, std::string>>;

std::map<std::string, std::string> parse_answer_jsonl(std::string_view text);

struct TournamentConfig {
  std::size_t rounds = 2;
  std::uint64_t seed = 0;
  double k_factor = kDefaultKFactor;
  double initial_rating = kDefaultInitialRating;
  std::size_t workers = 4;
  /// When > 0, also replays the judged matches over this many reshuffles and
  /// reports the median rating per player.
  std::size_t bootstrap = 0;
};

struct RankingRow {
  std::string id;
  double rating = 0.0;
  std::size_t rank = 0;
  std::optional<double> median_rating;
};

struct TournamentResult {
  EloState state;
  std::vector<RankingRow> ranking;
};

Json to_json(const TournamentResult& r, const TournamentConfig& config);
std::string format_ranking_table(const std::vector<RankingRow>& ranking);
std::string match_log_jsonl(const std::vector<MatchRecord>& log);

/// Deterministic permutation of [0, n) driven by a 64-bit Mersenne Twister
/// with unbiased bounded draws, identical on every platform.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// For every sample and unordered player pair, schedules `rounds` matches
/// with alternating presentation order, judges them, then applies Elo
/// updates sequentially in a seed-determined order.
TournamentResult run_tournament(const PlayerAnswers& players, const std::vector<ArenaSample>& samples,
                                LlmClient& referee, const TournamentConfig& config);

std::vector<RankingRow> rank_players(const EloState& state);

}  // namespace distillrag
