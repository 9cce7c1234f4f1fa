#include "cli.hpp"

#include <csignal>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distillrag/benchmark_eval.hpp"
#include "distillrag/elo_arena.hpp"
#include "distillrag/embedder.hpp"
#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "distillrag/knowledge_index.hpp"
#include "distillrag/llm_client.hpp"
#include "distillrag/pipeline.hpp"
#include "distillrag/service.hpp"
#include "distillrag/text.hpp"
#include "distillrag/toolcall.hpp"

namespace distillrag::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

EmbedderConfig embedder_config(const std::string& path) {
  EmbedderConfig c;
  if (!path.empty()) {
    try {
      c = embedder_config_from_json(Json::parse(io::read_file(path)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, "embedder config " + path + ": " + e.what());
    }
  }
  apply_env_overrides(c);
  c.validate();
  return c;
}

PipelineConfig pipeline_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return pipeline_config_from_json(Json::parse(io::read_file(path)));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, "pipeline config " + path + ": " + e.what());
  }
}

std::vector<std::size_t> parse_nums(const std::string& csv) {
  std::vector<std::size_t> nums;
  for (const auto& part : text::split(csv, ',')) {
    const auto p = std::string(text::trim(part));
    char* end = nullptr;
    const long v = std::strtol(p.c_str(), &end, 10);
    if (p.empty() || *end != '\0' || v < 1) throw UsageError("--nums expects positive integers, got '" + p + "'");
    nums.push_back(static_cast<std::size_t>(v));
  }
  if (nums.empty()) throw UsageError("--nums must not be empty");
  return nums;
}

void write_output(const std::string& path, std::string_view content) { io::write_file_atomic(path, content); }

KnowledgeIndex build_index(const std::string& db, const std::string& cache, const Embedder& embedder) {
  BuildOptions opts;
  if (!cache.empty()) opts.cache_dir = fs::path(cache);
  return KnowledgeIndex::build(load_database(db), embedder, opts);
}

struct IngestArgs {
  std::string db, cache, embedder;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const auto cfg = embedder_config(a.embedder);
  const auto embedder = make_embedder(cfg);
  const auto index = build_index(a.db, a.cache, *embedder);
  const auto stats = index.stats();
  out << Json{{"entities", stats.entities}, {"items", stats.items}, {"from_cache", index.loaded_from_cache()}}.dump()
      << '\n';
  return 0;
}

struct EvalArgs {
  std::string db, dataset, nums = "1,5,10,50", query_mode = "distill", out, distiller, pipeline, embedder, cache;
  std::string fine_rule = "any";
  std::size_t workers = 4;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  EvalOptions opts;
  opts.nums = parse_nums(a.nums);
  opts.query_mode = parse_query_mode(a.query_mode);
  opts.fine_rule = parse_fine_hit_rule(a.fine_rule);
  opts.workers = a.workers;
  if (opts.query_mode == QueryMode::distill && a.distiller.empty()) {
    throw UsageError("--query-mode distill requires --distiller");
  }

  const auto cfg = embedder_config(a.embedder);
  const auto embedder = make_embedder(cfg);
  const auto index = build_index(a.db, a.cache, *embedder);
  const auto samples = load_dataset(a.dataset);
  validate_against_index(samples, index);

  std::shared_ptr<LlmClient> distiller;
  if (!a.distiller.empty()) distiller = make_llm_client(load_llm_config(a.distiller));
  const Pipeline pipeline(pipeline_config(a.pipeline), distiller, nullptr, embedder);

  const auto report = evaluate_retrieval(samples, pipeline, index, opts);
  write_output(a.out, to_json(report).dump(2) + "\n");
  out << format_report_table(report, to_string(opts.query_mode));
  return 0;
}

struct ArenaArgs {
  std::vector<std::string> answers;
  std::string dataset, referee, db, out, match_log, embedder;
  std::size_t rounds = 2;
  std::uint64_t seed = 0;
  double k = kDefaultKFactor;
  double initial = kDefaultInitialRating;
  std::size_t bootstrap = 0;
  std::size_t workers = 4;
};

std::string arena_question(const DialogueSample& s) {
  if (s.history.empty()) return s.question;
  return serialize_history(s.history) + "\nUser: " + s.question;
}

int cmd_arena(const ArenaArgs& a, std::ostream& out) {
  PlayerAnswers players;
  for (const auto& spec : a.answers) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw UsageError("--answers expects id=FILE, got '" + spec + "'");
    }
    const auto id = spec.substr(0, eq);
    if (players.count(id)) throw UsageError("duplicate player id '" + id + "'");
    players[id] = parse_answer_jsonl(io::read_file(spec.substr(eq + 1)));
  }
  if (players.size() < 2) throw UsageError("--answers needs at least two players");

  std::optional<KnowledgeIndex> index;
  if (!a.db.empty()) {
    const auto cfg = embedder_config(a.embedder);
    index = build_index(a.db, "", *make_embedder(cfg));
  }

  std::vector<ArenaSample> samples;
  for (const auto& s : load_dataset(a.dataset)) {
    ArenaSample as{s.id, arena_question(s), ""};
    if (index) {
      std::vector<std::string> lines;
      for (const auto& key : s.k_f) {
        const auto& item = index->get_attribute_item(key.entity, key.attribute);
        lines.push_back(item.item_text);
      }
      as.evidence = text::join(lines, "\n");
    }
    samples.push_back(std::move(as));
  }

  TournamentConfig cfg;
  cfg.rounds = a.rounds;
  cfg.seed = a.seed;
  cfg.k_factor = a.k;
  cfg.initial_rating = a.initial;
  cfg.bootstrap = a.bootstrap;
  cfg.workers = a.workers;

  const auto referee = make_llm_client(load_llm_config(a.referee));
  const auto result = run_tournament(players, samples, *referee, cfg);
  write_output(a.out, to_json(result, cfg).dump(2) + "\n");
  if (!a.match_log.empty()) write_output(a.match_log, match_log_jsonl(result.state.match_log()));
  out << format_ranking_table(result.ranking);
  return 0;
}

struct SynthArgs {
  std::string questions, teacher, out;
  std::size_t workers = 4;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto questions = io::read_nonblank_lines(a.questions);
  const auto teacher = make_llm_client(load_llm_config(a.teacher));
  const auto result = generate_synthetic_pairs(questions, *teacher, SynthOptions{a.workers});
  write_output(a.out, to_jsonl(result.pairs));
  Json summary{{"pairs", result.pairs.size()}, {"dropped", result.dropped}};
  Json failures = Json::array();
  for (const auto& f : result.failures) failures.push_back({{"index", f.index}, {"reason", f.reason}});
  summary["failures"] = std::move(failures);
  out << summary.dump() << '\n';
  return 0;
}

struct ServeArgs {
  std::string config, listen;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  auto cfg = load_service_config(a.config);
  if (!a.listen.empty()) {
    const auto colon = a.listen.rfind(':');
    if (colon == std::string::npos) throw UsageError("--listen expects host:port");
    cfg.host = a.listen.substr(0, colon);
    cfg.port = std::stoi(a.listen.substr(colon + 1));
  }

  // Block the stop signals before any worker thread exists so only the
  // sigwait below ever receives them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Service service(cfg);
  const int port = service.start();
  out << Json{{"listening", cfg.host + ":" + std::to_string(port)}}.dump() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  service.stop();
  return 0;
}

struct SearchArgs {
  std::string db, q, granularity = "fine", mode = "hierarchical", embedder, cache;
  std::size_t num = 5;
  std::size_t fanout = 10;
};

int cmd_search(const SearchArgs& a, std::ostream& out) {
  if (a.num == 0) throw UsageError("--num must be >= 1");
  const auto cfg = embedder_config(a.embedder);
  const auto embedder = make_embedder(cfg);
  const auto index = build_index(a.db, a.cache, *embedder);
  const auto g = parse_granularity(a.granularity);
  const auto result = g == Granularity::coarse
                          ? index.search_coarse(a.q, a.num, *embedder)
                          : index.search_fine(a.q, a.num, *embedder, {parse_fine_mode(a.mode), a.fanout});
  out << to_json(result).dump(2) << '\n';
  return 0;
}

void print_error(std::ostream& err, std::string_view code, std::string_view message, std::string_view step = {}) {
  Json j{{"error_code", code}, {"message", message}};
  if (!step.empty()) j["step"] = step;
  err << j.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distill-retrieve-read medication consultation toolkit", "distillrag"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Build (and cache) the embedding index for a database");
  c_ingest->add_option("--db", ingest.db, "Medicine database JSON")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--cache", ingest.cache, "Embedding cache directory");
  c_ingest->add_option("--embedder", ingest.embedder, "Embedder config JSON")->check(CLI::ExistingFile);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Retrieval hit-rate evaluation over a benchmark dataset");
  c_eval->add_option("--db", eval.db)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--dataset", eval.dataset, "Benchmark JSONL")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--nums", eval.nums, "Comma-separated HR cut-offs")->capture_default_str();
  c_eval->add_option("--query-mode", eval.query_mode)
      ->check(CLI::IsMember({"distill", "history", "last_question"}))
      ->capture_default_str();
  c_eval->add_option("--out", eval.out, "Report JSON path")->required();
  c_eval->add_option("--distiller", eval.distiller, "Distiller LLM config JSON")->check(CLI::ExistingFile);
  c_eval->add_option("--pipeline", eval.pipeline, "Pipeline config JSON")->check(CLI::ExistingFile);
  c_eval->add_option("--embedder", eval.embedder)->check(CLI::ExistingFile);
  c_eval->add_option("--cache", eval.cache);
  c_eval->add_option("--fine-rule", eval.fine_rule)->check(CLI::IsMember({"any", "all"}))->capture_default_str();
  c_eval->add_option("--workers", eval.workers)->check(CLI::PositiveNumber)->capture_default_str();

  ArenaArgs arena;
  auto* c_arena = app.add_subcommand("arena", "Elo tournament between answer sets judged by a referee");
  c_arena->add_option("--answers", arena.answers, "Player answers as id=FILE (repeatable)")->required();
  c_arena->add_option("--dataset", arena.dataset)->required()->check(CLI::ExistingFile);
  c_arena->add_option("--referee", arena.referee, "Referee LLM config JSON")->required()->check(CLI::ExistingFile);
  c_arena->add_option("--db", arena.db, "Database used to attach ground-truth evidence")->check(CLI::ExistingFile);
  c_arena->add_option("--embedder", arena.embedder)->check(CLI::ExistingFile);
  c_arena->add_option("--rounds", arena.rounds)->check(CLI::PositiveNumber)->capture_default_str();
  c_arena->add_option("--seed", arena.seed)->capture_default_str();
  c_arena->add_option("--k", arena.k)->check(CLI::PositiveNumber)->capture_default_str();
  c_arena->add_option("--initial", arena.initial)->capture_default_str();
  c_arena->add_option("--bootstrap", arena.bootstrap, "Reshuffles for median ratings")->capture_default_str();
  c_arena->add_option("--workers", arena.workers)->check(CLI::PositiveNumber)->capture_default_str();
  c_arena->add_option("--out", arena.out)->required();
  c_arena->add_option("--match-log", arena.match_log, "Match log JSONL path");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic question to tool-call pairs");
  c_synth->add_option("--questions", synth.questions, "One question per line")->required()->check(CLI::ExistingFile);
  c_synth->add_option("--teacher", synth.teacher, "Teacher LLM config JSON")->required()->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth.out)->required();
  c_synth->add_option("--workers", synth.workers)->check(CLI::PositiveNumber)->capture_default_str();

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the consultation HTTP service");
  c_serve->add_option("--config", serve.config)->required()->check(CLI::ExistingFile);
  c_serve->add_option("--listen", serve.listen, "host:port override");

  SearchArgs search;
  auto* c_search = app.add_subcommand("search", "Raw retrieval against a database");
  c_search->add_option("--db", search.db)->required()->check(CLI::ExistingFile);
  c_search->add_option("--q", search.q)->required();
  c_search->add_option("--granularity", search.granularity)
      ->check(CLI::IsMember({"coarse", "fine"}))
      ->capture_default_str();
  c_search->add_option("--num", search.num)->capture_default_str();
  c_search->add_option("--mode", search.mode)->check(CLI::IsMember({"flat", "hierarchical"}))->capture_default_str();
  c_search->add_option("--fanout", search.fanout)->check(CLI::PositiveNumber)->capture_default_str();
  c_search->add_option("--embedder", search.embedder)->check(CLI::ExistingFile);
  c_search->add_option("--cache", search.cache);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_arena->parsed()) return cmd_arena(arena, out);
    if (c_synth->parsed()) return cmd_synth(synth, out);
    if (c_serve->parsed()) return cmd_serve(serve, out);
    if (c_search->parsed()) return cmd_search(search, out);
  } catch (const UsageError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const Error& e) {
    print_error(err, error_code_name(e.code()), e.what(), e.step());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "Internal", e.what());
    return 1;
  }
  return 2;
}

}  // namespace distillrag::cli
