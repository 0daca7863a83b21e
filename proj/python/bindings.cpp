#include <fstream>
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tempshift/pipeline.hpp"

namespace py = pybind11;
using namespace tempshift;

namespace {

TupleSet to_tuples(const std::vector<std::tuple<std::string, std::string, std::string>>& rows) {
  TupleSet t;
  for (const auto& [w, u, v] : rows) t.tuples.push_back({w, u, v, 0.0, Method::Freq});
  t.k = t.tuples.size();
  return t;
}

AnchorSet to_anchor_set(const std::vector<std::string>& u, const std::vector<std::string>& v) {
  AnchorSet a;
  for (const auto& t : u) a.t1.push_back({t, 0.0});
  for (const auto& t : v) a.t2.push_back({t, 0.0});
  return a;
}

EmbeddingTable to_table(const std::string& label, const std::map<std::string, Vector>& vectors) {
  std::size_t dim = vectors.empty() ? 0 : vectors.begin()->second.size();
  EmbeddingTable t(label, dim);
  for (const auto& [tok, vec] : vectors) t.set(tok, vec, 1);
  return t;
}

py::dict prompt_dict(const Prompt& p) {
  py::dict d;
  d["text"] = p.text;
  d["w"] = p.w;
  d["u"] = p.u;
  d["v"] = p.v;
  d["template_index"] = p.template_index;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tempshift, m) {
  m.doc() = "Temporal shift tuple mining, template search and masked prompt generation.";

  auto& base = py::register_exception<Error>(m, "TempshiftError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<OracleError>(m, "OracleError", base.ptr());

  m.def("tokenize", &tokenize, py::arg("text"), "Lowercased word tokens.");

  m.def(
      "pmi",
      [](const std::vector<Tokens>& sentences, const std::string& w, const std::string& x) {
        std::vector<std::vector<Tokens>> docs;
        for (const auto& s : sentences) docs.push_back({s});
        return pmi(w, x, count(Snapshot::from_documents("t", docs)));
      },
      py::arg("sentences"), py::arg("w"), py::arg("x"),
      "Sentence-level PMI of w and x, or None when they never co-occur.");

  m.def(
      "diversity",
      [](const std::vector<std::string>& u, const std::vector<std::string>& v) {
        return diversity(to_anchor_set(u, v));
      },
      py::arg("t1_anchors"), py::arg("t2_anchors"));

  m.def(
      "context_score",
      [](const std::string& w, const std::string& u, const std::string& v,
         const std::map<std::string, Vector>& e1, const std::map<std::string, Vector>& e2) {
        return context_score(w, u, v, to_table("T1", e1), to_table("T2", e2));
      },
      py::arg("w"), py::arg("u"), py::arg("v"), py::arg("t1_vectors"), py::arg("t2_vectors"));

  m.def(
      "save_embeddings",
      [](const std::string& label, const std::map<std::string, Vector>& vectors,
         const std::filesystem::path& path) { save_table(to_table(label, vectors), path); },
      py::arg("label"), py::arg("vectors"), py::arg("path"),
      "Writes an embedding exchange file.");

  m.def(
      "load_embeddings",
      [](const std::filesystem::path& path) {
        const auto t = load_table(path);
        std::map<std::string, Vector> out;
        for (const auto& [tok, e] : t.entries()) out[tok] = e.mean;
        return std::make_pair(t.label(), out);
      },
      py::arg("path"), "Reads an embedding exchange file as (label, {token: vector}).");

  py::class_<Template>(m, "Template")
      .def(py::init(&parse_template), py::arg("text"))
      .def_property_readonly("loglik", [](const Template& t) { return t.loglik; })
      .def_property_readonly("is_auto", [](const Template& t) { return t.origin == TemplateOrigin::Auto; })
      .def(
          "fill",
          [](const Template& t, const std::string& w, const std::string& u, const std::string& v,
             const std::string& t1, const std::string& t2) { return fill(t, FillValues{w, u, v, t1, t2}); },
          py::arg("w"), py::arg("u"), py::arg("v"), py::arg("t1"), py::arg("t2"))
      .def("__str__", &Template::to_string)
      .def("__repr__", [](const Template& t) { return "Template(" + py::repr(py::str(t.to_string())).cast<std::string>() + ")"; });

  m.def("builtin_templates", &builtin_manual_templates);

  py::class_<LikelihoodOracle>(m, "LikelihoodOracle")
      .def(
          "logprob",
          [](const LikelihoodOracle& o, const Tokens& prefix, const std::vector<Tokens>& candidates) {
            return o.logprob(prefix, candidates);
          },
          py::arg("prefix"), py::arg("candidates"), py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("name", [](const LikelihoodOracle& o) { return o.info().name; });

  py::class_<NGramLM, LikelihoodOracle>(m, "NGramLM")
      .def(py::init<const std::vector<Tokens>&, std::size_t, double>(), py::arg("sentences"),
           py::arg("order") = 3, py::arg("alpha") = 0.1)
      .def("vocabulary", &NGramLM::vocabulary);

  py::class_<ExternalOracle, LikelihoodOracle>(m, "ExternalOracle")
      .def(py::init([](const std::vector<std::string>& argv, std::int64_t timeout_ms, int max_retries) {
             return std::make_unique<ExternalOracle>(
                 ProcessChannel::spawn(argv),
                 ExternalOracle::Options{std::chrono::milliseconds(timeout_ms), max_retries});
           }),
           py::arg("argv"), py::arg("timeout_ms") = 30000, py::arg("max_retries") = 0,
           "Spawns an oracle process speaking the line protocol on stdin/stdout.");

  m.def(
      "search_templates",
      [](const std::vector<std::tuple<std::string, std::string, std::string>>& tuples,
         const LikelihoodOracle& oracle, const std::vector<std::pair<Tokens, Tokens>>& contexts,
         const std::string& t1, const std::string& t2, std::size_t beam_width, std::size_t max_slot_len,
         std::size_t top_n, std::vector<std::string> vocabulary, std::size_t threads) {
        std::vector<ContextPair> ctx;
        for (const auto& [s1, s2] : contexts) ctx.push_back({s1, s2});
        SearchOptions opt{beam_width, max_slot_len, top_n, std::move(vocabulary), threads};
        return search_templates(to_tuples(tuples), oracle, ctx, t1, t2, opt);
      },
      py::arg("tuples"), py::arg("oracle"), py::arg("contexts"), py::arg("t1"), py::arg("t2"),
      py::arg("beam_width") = 100, py::arg("max_slot_len") = 5, py::arg("top_n") = 3,
      py::arg("vocabulary") = std::vector<std::string>{}, py::arg("threads") = 1,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "generate_prompts",
      [](const std::vector<std::tuple<std::string, std::string, std::string>>& tuples,
         const std::vector<Template>& templates, const std::string& t1, const std::string& t2) {
        py::list out;
        for (const auto& p : generate_prompts(to_tuples(tuples), templates, t1, t2)) out.append(prompt_dict(p));
        return out;
      },
      py::arg("tuples"), py::arg("templates"), py::arg("t1"), py::arg("t2"));

  m.def(
      "make_instances",
      [](const std::vector<std::string>& texts, std::size_t masks_per_prompt, std::uint64_t seed) {
        std::vector<Prompt> ps;
        for (const auto& t : texts) ps.push_back(Prompt{t, "", "", "", 0, "", ""});
        py::list out;
        for (const auto& i : make_instances(ps, MaskOptions{masks_per_prompt, seed, false})) {
          py::dict d;
          d["text"] = i.text;
          d["mask_index"] = i.mask_index;
          d["label"] = i.label;
          out.append(d);
        }
        return out;
      },
      py::arg("texts"), py::arg("masks_per_prompt") = 1, py::arg("seed") = 123);

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& output_dir) {
        auto c = load_config(config_path);
        if (output_dir) c.output_dir = *output_dir;
        return run_pipeline(c).to_json();
      },
      py::arg("config"), py::arg("output_dir") = py::none(), py::call_guard<py::gil_scoped_release>(),
      "Runs every stage from a JSON config file and returns the manifest JSON.");

  m.def(
      "render_report",
      [](const std::filesystem::path& results, const std::filesystem::path& chart,
         const std::optional<std::filesystem::path>& table) {
        render_report(results, chart, table.value_or(std::filesystem::path{}));
      },
      py::arg("results"), py::arg("chart"), py::arg("table") = py::none());
}
