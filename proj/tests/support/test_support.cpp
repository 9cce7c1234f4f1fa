#include "test_support.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace testsupport {

namespace fs = std::filesystem;
using namespace distillrag;

fs::path fixtures_dir() { return fs::path(DISTILLRAG_FIXTURES_DIR); }

fs::path fixture(const std::string& name) { return fixtures_dir() / name; }

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "distillrag-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

const std::vector<std::string> kOnsets{"Am", "Bel", "Cor", "Dex", "Eto", "Flu", "Gab", "Hal", "Ibu", "Keto",
                                       "Lor", "Mel", "Nap", "Olan", "Par", "Quin", "Ris", "Sert", "Tam", "Val"};
const std::vector<std::string> kMiddles{"a", "o", "i", "e", "u", "ra", "li", "no", "ve", "ta"};
const std::vector<std::string> kEndings{"cillin", "profen", "formin", "pril", "statin", "zepam", "olol",
                                        "sartan", "mycin", "triptan", "dronate", "tidine", "azole", "vir"};
const std::vector<std::string> kWords{"patients", "tablet", "daily", "renal", "hepatic", "infection", "pain",
                                      "blood", "pressure", "children", "adults", "elderly", "nausea", "rash",
                                      "headache", "dizziness", "meals", "water", "dose", "weeks", "monitor",
                                      "levels", "caution", "pregnancy", "allergy", "kidney", "liver", "heart"};

std::string ascii_lower(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<MedicineRecord> generate_database(const GeneratedDbOptions& o) {
  std::mt19937_64 rng(o.seed);
  auto pick = [&rng](const std::vector<std::string>& v) -> const std::string& {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::set<std::string> used;
  std::vector<MedicineRecord> out;
  while (out.size() < o.entities) {
    std::string name = pick(kOnsets) + pick(kMiddles) + pick(kEndings);
    if (!used.insert(ascii_lower(name)).second) continue;
    MedicineRecord r;
    r.id = "gen-" + std::to_string(out.size());
    r.generic_name = name;
    std::string brand = pick(kOnsets) + pick(kEndings).substr(0, 3) + "ex";
    r.brand_names = {brand};
    for (const auto& attr : o.attributes) {
      std::string text = o.prefix_attribute_name ? attr + ":" : "";
      const int words = std::uniform_int_distribution<int>(6, 14)(rng);
      for (int w = 0; w < words; ++w) {
        if (!text.empty()) text.push_back(' ');
        text += pick(kWords);
      }
      text.push_back('.');
      r.attributes.emplace_back(attr, text);
    }
    out.push_back(std::move(r));
  }
  return out;
}

Json database_to_json(const std::vector<MedicineRecord>& records) {
  Json arr = Json::array();
  for (const auto& r : records) {
    Json attrs = Json::object();
    for (const auto& [k, v] : r.attributes) attrs[k] = v;
    arr.push_back({{"id", r.id}, {"generic_name", r.generic_name}, {"brand_names", r.brand_names}, {"attributes", attrs}});
  }
  return arr;
}

namespace {

struct Scored {
  OracleHit hit;
  std::string k1;
  std::string k2;
};

std::vector<OracleHit> finish(std::vector<Scored> all, std::size_t num) {
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.hit.score != b.hit.score) return a.hit.score > b.hit.score;
    if (a.k1 != b.k1) return a.k1 < b.k1;
    return a.k2 < b.k2;
  });
  std::vector<OracleHit> out;
  for (std::size_t i = 0; i < all.size() && i < num; ++i) out.push_back(all[i].hit);
  return out;
}

}  // namespace

std::vector<OracleHit> oracle_coarse(const std::vector<MedicineRecord>& records, const Embedder& embedder,
                                     const std::string& query, std::size_t num) {
  const auto q = embedder.embed_text(query).values;
  std::vector<Scored> all;
  for (const auto& r : records) {
    std::string text = r.generic_name;
    for (const auto& b : r.brand_names) text += "; " + b;
    all.push_back({{r.generic_name, "", dot(q, embedder.embed_text(text).values)}, ascii_lower(r.generic_name), ""});
  }
  return finish(std::move(all), num);
}

std::vector<OracleHit> oracle_fine_flat(const std::vector<MedicineRecord>& records, const Embedder& embedder,
                                        const std::string& query, std::size_t num) {
  const auto q = embedder.embed_text(query).values;
  std::vector<Scored> all;
  for (const auto& r : records) {
    for (const auto& [attr, text] : r.attributes) {
      const std::string item = r.generic_name + " \xE2\x80\x94 " + text;
      all.push_back({{r.generic_name, attr, dot(q, embedder.embed_text(item).values)}, ascii_lower(r.generic_name),
                     ascii_lower(attr)});
    }
  }
  return finish(std::move(all), num);
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::optional<fs::path>& cwd) {
  const TempDir tmp;
  const auto out_path = tmp / "stdout";
  const auto err_path = tmp / "stderr";

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, 2, err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);

  std::vector<std::string> args = argv;
  if (cwd) {
    // posix_spawn has no portable chdir action, so let env(1) change directory.
    args.insert(args.begin(), {"/usr/bin/env", "-C", cwd->string()});
  }
  std::vector<char*> cargv;
  for (auto& a : args) cargv.push_back(a.data());
  cargv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = posix_spawn(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw std::runtime_error("posix_spawn failed for " + args[0]);
  int status = 0;
  waitpid(pid, &status, 0);

  ProcessResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(out_path);
  r.err = read_text(err_path);
  return r;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace testsupport
