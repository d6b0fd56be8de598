// Copyright 2026 The slicealign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "slicealign/error.hpp"
#include "slicealign/eval.hpp"
#include "slicealign/gradcheck.hpp"
#include "slicealign/io.hpp"
#include "slicealign/objectives.hpp"
#include "slicealign/report_miner.hpp"
#include "slicealign/synthetic.hpp"
#include "slicealign/trainer.hpp"
#include "slicealign/version.hpp"

namespace py = pybind11;
using namespace slicealign;

namespace {

using PyRefs = std::map<std::string, std::vector<std::pair<int, int>>>;

ReferenceSets to_reference_sets(const PyRefs& in) {
  ReferenceSets out;
  for (const auto& [id, refs] : in) {
    auto& set = out[id];
    for (const auto& r : refs) set.insert(r);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of slicealign";
  m.attr("__version__") = kVersion;

  // Raised for every library error; `code` holds the error code name.
  py::exception<Error>(m, "SliceAlignError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object type = py::module_::import("slicealign._core").attr("SliceAlignError");
      py::object exc = type(e.what());
      exc.attr("code") = error_code_name(e.code());
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.def("extract_references", [](const std::string& text) {
    py::list out;
    for (const auto& r : extract_references(text)) {
      py::dict d;
      d["series"] = r.series;
      d["image"] = r.image;
      d["begin"] = r.begin;
      d["end"] = r.end;
      d["surface"] = r.surface;
      d["pattern"] = r.pattern;
      d["snippet"] = snippet_for(text, r);
      out.append(d);
    }
    return out;
  }, py::arg("text"));

  m.def("evaluate_mining", [](const PyRefs& predicted, const PyRefs& gold) {
    const MiningScores s = evaluate_mining(to_reference_sets(predicted), to_reference_sets(gold));
    py::dict d;
    d["precision"] = s.precision;
    d["recall"] = s.recall;
    d["f1"] = s.f1;
    d["tp"] = s.true_positives;
    d["fp"] = s.false_positives;
    d["fn"] = s.false_negatives;
    return d;
  }, py::arg("predicted"), py::arg("gold"));

  m.def("alpha_weight", &alpha_weight, py::arg("n_pos"), py::arg("n_neg"));

  m.def("gaussian_soft_target", [](int count, int d_star, double sigma) {
    DepthGrid g;
    g.count = count;
    return gaussian_soft_target(g, d_star, sigma).probs;
  }, py::arg("count"), py::arg("d_star"), py::arg("sigma") = 2.0);

  m.def("siglip_loss", [](const Matrix& image, const Matrix& text, double temperature, double bias) {
    return siglip_loss(image, text, SigLipParams{temperature, bias}).loss;
  }, py::arg("image"), py::arg("text"), py::arg("temperature") = 10.0, py::arg("bias") = -10.0);

  m.def("roc_auc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
    return roc_auc(scores, labels);
  }, py::arg("scores"), py::arg("labels"));

  // Query i's designated match is candidate i.
  m.def("recall_at_k", [](const Matrix& queries, const Matrix& candidates, std::size_t k) {
    RetrievalTask task;
    task.queries = queries;
    task.candidates = candidates;
    for (Eigen::Index i = 0; i < queries.rows(); ++i) task.designated.push_back(static_cast<std::size_t>(i));
    return recall_at_k(task, k);
  }, py::arg("queries"), py::arg("candidates"), py::arg("k"));

  m.def("gradcheck", [](std::uint64_t seed, std::size_t trials) {
    GradSuiteOptions opt;
    opt.seed = seed;
    opt.trials = trials;
    py::list out;
    for (const auto& c : run_gradient_suite(opt)) {
      out.append(py::make_tuple(grad_target_name(c.target), c.trial, c.report.max_rel_error));
    }
    return out;
  }, py::arg("seed") = 0, py::arg("trials") = 5);

  // Generates the synthetic corpus, trains and evaluates, all from a run
  // configuration in JSON. Returns (epoch logs, metrics) as JSON strings.
  m.def("run_pipeline", [](const std::string& config_json) {
    const RunConfig cfg = parse_run_config(config_json);
    std::vector<std::string> epochs;
    std::string metrics;
    {
      py::gil_scoped_release release;
      const Corpus corpus = generate(cfg.synth);
      TrainConfig tc = cfg.train;
      tc.proj_dim = cfg.synth.proj_dim;
      const TrainState state = train(corpus, tc);
      for (const auto& e : state.history) epochs.push_back(epoch_log_json(e));
      metrics = metrics_json(evaluate_checkpoint(state, corpus, cfg.eval));
    }
    return py::make_tuple(epochs, metrics);
  }, py::arg("config_json"));
}
