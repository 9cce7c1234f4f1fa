// pybind11 module distillrag._core. Structured values cross the boundary as
// JSON text; the Python package decodes them into plain dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "distillrag/benchmark_eval.hpp"
#include "distillrag/elo_arena.hpp"
#include "distillrag/embedder.hpp"
#include "distillrag/errors.hpp"
#include "distillrag/io.hpp"
#include "distillrag/knowledge_index.hpp"
#include "distillrag/llm_client.hpp"
#include "distillrag/pipeline.hpp"
#include "distillrag/service.hpp"
#include "distillrag/toolcall.hpp"

namespace py = pybind11;
using namespace distillrag;

namespace {

using Path = std::filesystem::path;

std::shared_ptr<const Embedder> embedder_from(const std::string& config_json) {
  auto cfg = embedder_config_from_json(Json::parse(config_json));
  apply_env_overrides(cfg);
  cfg.validate();
  return make_embedder(cfg);
}

/// Index plus the embedder that built it, so queries use the same space.
class PyIndex {
 public:
  PyIndex(const std::string& database_json, const std::string& embedder_json,
          std::optional<Path> cache_dir)
      : embedder_(embedder_from(embedder_json)),
        index_(std::make_shared<KnowledgeIndex>(
            KnowledgeIndex::build(parse_database(database_json), *embedder_, BuildOptions{cache_dir}))) {}

  std::string search(const std::string& query, const std::string& granularity, std::size_t num,
                     const std::string& mode, std::size_t fanout) const {
    const auto g = parse_granularity(granularity);
    const auto result = g == Granularity::coarse
                            ? index_->search_coarse(query, num, *embedder_)
                            : index_->search_fine(query, num, *embedder_, {parse_fine_mode(mode), fanout});
    return to_json(result).dump();
  }

  std::pair<std::size_t, std::size_t> stats() const {
    const auto s = index_->stats();
    return {s.entities, s.items};
  }

  bool loaded_from_cache() const { return index_->loaded_from_cache(); }
  const std::shared_ptr<const Embedder>& embedder() const { return embedder_; }
  const KnowledgeIndex& index() const { return *index_; }

 private:
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const KnowledgeIndex> index_;
};

std::string evaluate(const PyIndex& index, const Path& dataset_path, const std::string& query_mode,
                     std::optional<Path> distiller_config, const std::string& pipeline_json,
                     const std::vector<std::size_t>& nums, const std::string& fine_rule, std::size_t workers) {
  const auto samples = load_dataset(dataset_path);
  validate_against_index(samples, index.index());
  const auto mode = parse_query_mode(query_mode);
  std::shared_ptr<LlmClient> distiller;
  if (distiller_config) {
    auto cfg = load_llm_config(*distiller_config);
    apply_env_overrides(cfg);
    distiller = make_llm_client(cfg);
  } else if (mode == QueryMode::distill) {
    throw Error(ErrorCode::InvalidArgument, "distill mode needs a distiller config");
  }
  const auto pcfg = pipeline_json.empty() ? PipelineConfig{} : pipeline_config_from_json(Json::parse(pipeline_json));
  const Pipeline pipeline(pcfg, distiller, nullptr, index.embedder());
  const auto report = evaluate_retrieval(samples, pipeline, index.index(),
                                         {.nums = nums, .query_mode = mode,
                                          .fine_rule = parse_fine_hit_rule(fine_rule), .workers = workers});
  return to_json(report).dump();
}

py::tuple try_parse(const std::string& text) {
  const auto r = try_parse_tool_call(text);
  if (!r.ok()) return py::make_tuple(py::none(), std::string(to_string(r.error)), false);
  return py::make_tuple(r.call->query, "none", r.call->multiple_calls);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the distillrag package";

  // Errors surface as distillrag.errors.DistillragError(code, message, step).
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto cls = py::module_::import("distillrag.errors").attr("DistillragError");
      const py::object step = e.step().empty() ? py::object(py::none()) : py::str(e.step());
      const auto exc = cls(std::string(error_code_name(e.code())), std::string(e.what()), step);
      PyErr_SetObject(cls.ptr(), exc.ptr());
    }
  });

  m.def("format_tool_call", [](const std::string& q) { return format_tool_call(q); });
  m.def("parse_tool_call", [](const std::string& text) { return parse_tool_call(text).query; },
        "Query of the first tool call in a model reply; raises on malformed output.");
  m.def("try_parse_tool_call", &try_parse, "(query or None, error name, multiple_calls)");
  m.def("build_distill_prompt", [](const std::vector<std::pair<std::string, std::string>>& history,
                                   const std::string& question) {
    DialogueHistory h;
    for (const auto& [q, a] : history) h.push_back({q, a});
    return build_distill_prompt(h, question);
  });

  m.def("expected_score", &expected_score);
  m.def("elo_update", [](double ra, double rb, double s_a, double k) {
    EloState st(k);
    st.add_player("a", ra);
    st.add_player("b", rb);
    return st.update_pair("a", "b", s_a);
  }, py::arg("rating_a"), py::arg("rating_b"), py::arg("s_a"), py::arg("k") = kDefaultKFactor);
  m.def("seeded_permutation", &seeded_permutation);

  m.def("embed", [](const std::string& text, const std::string& embedder_json) {
    return embedder_from(embedder_json)->embed_text(text).values;
  });

  py::class_<PyIndex>(m, "Index")
      .def(py::init<const std::string&, const std::string&, std::optional<Path>>(), py::arg("database_json"),
           py::arg("embedder_json"), py::arg("cache_dir") = std::nullopt,
           py::call_guard<py::gil_scoped_release>())
      .def("search", &PyIndex::search, py::arg("query"), py::arg("granularity") = "fine", py::arg("num") = 5,
           py::arg("mode") = "hierarchical", py::arg("fanout") = 10, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("stats", &PyIndex::stats)
      .def_property_readonly("loaded_from_cache", &PyIndex::loaded_from_cache);

  m.def("evaluate", &evaluate, py::arg("index"), py::arg("dataset_path"), py::arg("query_mode"),
        py::arg("distiller_config") = std::nullopt, py::arg("pipeline_json") = "",
        py::arg("nums") = std::vector<std::size_t>{1, 5, 10, 50}, py::arg("fine_rule") = "any",
        py::arg("workers") = 4, py::call_guard<py::gil_scoped_release>());

  py::class_<Service>(m, "Service")
      .def(py::init([](const Path& config_path) {
             auto cfg = load_service_config(config_path);
             return std::make_unique<Service>(std::move(cfg));
           }),
           py::call_guard<py::gil_scoped_release>())
      .def("create_session", &Service::create_session)
      .def("post_message",
           [](Service& s, const std::string& id, const std::string& q) { return s.post_message(id, q).dump(); },
           py::call_guard<py::gil_scoped_release>())
      .def("get_session",
           [](const Service& s, const std::string& id) -> std::optional<std::string> {
             const auto session = s.get_session(id);
             if (!session) return std::nullopt;
             return to_json(*session).dump();
           })
      .def("search",
           [](const Service& s, const std::string& q, const std::string& granularity, std::size_t num) {
             return s.search_debug(q, parse_granularity(granularity), num).dump();
           },
           py::arg("query"), py::arg("granularity") = "fine", py::arg("num") = 5,
           py::call_guard<py::gil_scoped_release>())
      .def("ingest",
           [](Service& s, const std::string& db) {
             const auto st = s.ingest(db);
             return std::make_pair(st.entities, st.items);
           },
           py::call_guard<py::gil_scoped_release>())
      .def("health", [](const Service& s) { return s.health().dump(); })
      .def("start", &Service::start, py::call_guard<py::gil_scoped_release>())
      .def("stop", &Service::stop, py::call_guard<py::gil_scoped_release>());
}
