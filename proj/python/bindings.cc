#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qacoop/cli.h"
#include "qacoop/corpus.h"
#include "qacoop/metrics.h"
#include "qacoop/pipeline.h"
#include "qacoop/training.h"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace qacoop;

namespace {

Tokens as_tokens(const py::handle& h) {
  if (py::isinstance<py::str>(h)) return tokenize(h.cast<std::string>());
  return h.cast<Tokens>();
}

std::string score_json(const py::sequence& candidates, const py::sequence& references) {
  if (py::len(candidates) != py::len(references)) {
    throw py::value_error("candidates and references differ in length");
  }
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  for (const py::handle c : candidates) cands.push_back(as_tokens(c));
  for (const py::handle rs : references) {
    std::vector<Tokens> set;
    for (const py::handle r : rs.cast<py::sequence>()) set.push_back(as_tokens(r));
    refs.push_back(std::move(set));
  }
  return to_json(score_corpus(cands, refs)).dump();
}

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

class PyCheckpoint {
 public:
  explicit PyCheckpoint(const fs::path& path) {
    if (!fs::exists(path)) throw py::value_error("checkpoint not found: " + path.string());
    ck_ = read_checkpoint(path.string());
  }

  std::string config_json() const { return to_json(ck_.model->config()).dump(); }
  int epoch() const { return ck_.epoch; }
  double val_perplexity() const { return ck_.val_perplexity; }
  int vocab_size() const { return ck_.vocab.size(); }

  std::string evaluate(const fs::path& data_dir, const std::string& split, bool strong_baseline,
                       bool simulated_human, bool no_dialog, std::optional<int> start_round, bool shuffle_history,
                       int beam_width, int clusters, std::uint64_t seed) const {
    const Dataset d = ingest_dataset(data_dir / "dialogs.json");
    const FeatureStore features = FeatureStore::load(data_dir / "features" / "manifest.json");
    const std::vector<DialogCase> cases = d.split(parse_split(split));
    if (cases.empty()) throw py::value_error("split '" + split + "' is empty");
    EvalOptions eo;
    eo.strong_baseline = strong_baseline;
    eo.simulated_human = simulated_human;
    eo.no_dialog = no_dialog;
    eo.start_round = start_round;
    eo.shuffle_history = shuffle_history;
    eo.beam_width = beam_width;
    eo.clusters = clusters;
    eo.seed = seed;
    EvalOutput r;
    {
      py::gil_scoped_release release;
      r = evaluate_dialogs(*ck_.model, ck_.vocab, cases, features, eo);
    }
    nlohmann::json j;
    j["report"] = to_json(r.report);
    j["transcripts"] = nlohmann::json::array();
    for (const Transcript& t : r.transcripts) j["transcripts"].push_back(to_json(t));
    j["question_selection_ratio"] = r.ratios.question ? nlohmann::json(*r.ratios.question) : nlohmann::json(nullptr);
    j["answer_selection_ratio"] = r.ratios.answer ? nlohmann::json(*r.ratios.answer) : nlohmann::json(nullptr);
    return j.dump();
  }

 private:
  Checkpoint ck_;
};

}  // namespace

PYBIND11_MODULE(_qacoop, m) {
  py::register_exception<CorpusError>(m, "CorpusError", PyExc_ValueError);

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def("join_tokens", &join_tokens, py::arg("tokens"));
  m.def("score_corpus_json", &score_json, py::arg("candidates"), py::arg("references"));
  m.def(
      "toy_dataset_json",
      [](std::uint64_t seed, int n, int vocab) { return serialize_dataset(synthesize_toy_corpus(seed, n, vocab).cases); },
      py::arg("seed") = 7, py::arg("n") = 8, py::arg("vocab") = 64);
  m.def("git_blob_hash", [](const fs::path& p) { return git_blob_hash(p); }, py::arg("path"));
  m.def("run_cli", &cli, py::arg("args"));

  py::class_<PyCheckpoint>(m, "Checkpoint")
      .def(py::init<const fs::path&>(), py::arg("path"))
      .def("config_json", &PyCheckpoint::config_json)
      .def_property_readonly("epoch", &PyCheckpoint::epoch)
      .def_property_readonly("val_perplexity", &PyCheckpoint::val_perplexity)
      .def_property_readonly("vocab_size", &PyCheckpoint::vocab_size)
      .def("evaluate_json", &PyCheckpoint::evaluate, py::arg("data_dir"), py::arg("split") = "test",
           py::arg("strong_baseline") = false, py::arg("simulated_human") = false, py::arg("no_dialog") = false,
           py::arg("start_round") = std::nullopt, py::arg("shuffle_history") = false, py::arg("beam_width") = 3,
           py::arg("clusters") = 10, py::arg("seed") = 1);
}
