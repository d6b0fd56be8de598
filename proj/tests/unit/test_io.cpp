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

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "slicealign/error.hpp"
#include "slicealign/io.hpp"
#include "json.hpp"

using namespace slicealign;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

std::string error_text(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Fresh directory per test, removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("slicealign_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write_raw(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << bytes;
}

std::string read_raw(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

SynthConfig small_synth() {
  SynthConfig s;
  s.n_pairs = 60;
  s.raw_dim = 8;
  s.proj_dim = 4;
  s.n_findings = 3;
  s.depth_D = 6;
  s.seed = 2;
  return s;
}

}  // namespace

TEST_CASE("embedding files round-trip bit-exactly") {
  TempDir tmp;
  Matrix m(3, 4);
  // Values exactly representable in 32-bit floats.
  m << 0.5, -1.25, 3.0, 1e-3f, 0, 7.75, -0.125, 2.0f / 3.0f, 1e10f, -2, 4, 0.1f;
  const std::vector<std::string> ids = {"a", "b", "c"};
  write_embeddings(tmp / "x.remb", m, ids);
  const EmbeddingFile back = read_embeddings(tmp / "x.remb");
  CHECK(back.values == m);
  CHECK(back.ids == ids);

  const std::string bytes = read_raw(tmp / "x.remb");
  CHECK(bytes.substr(0, 4) == "REMB");
  // Payload is 4 bytes per value at the end of the file.
  CHECK(bytes.size() > 48);

  write_embeddings(tmp / "noids.remb", m);
  CHECK(read_embeddings(tmp / "noids.remb").ids.empty());
}

TEST_CASE("malformed embedding files are rejected") {
  TempDir tmp;
  const Matrix m = Matrix::Ones(2, 3);
  write_embeddings(tmp / "ok.remb", m);
  const std::string good = read_raw(tmp / "ok.remb");

  write_raw(tmp / "short.remb", good.substr(0, good.size() - 1));
  CHECK(code_of([&] { read_embeddings(tmp / "short.remb"); }) == ErrorCode::kFormat);
  write_raw(tmp / "long.remb", good + "x");
  CHECK(code_of([&] { read_embeddings(tmp / "long.remb"); }) == ErrorCode::kFormat);
  write_raw(tmp / "magic.remb", "XEMB" + good.substr(4));
  CHECK(code_of([&] { read_embeddings(tmp / "magic.remb"); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { read_embeddings(tmp / "missing.remb"); }) == ErrorCode::kIo);

  CHECK(code_of([&] { write_embeddings(tmp / "dup.remb", m, {"a", "a"}); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { write_embeddings(tmp / "n.remb", m, {"a"}); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("checkpoints round-trip at 32-bit precision") {
  TempDir tmp;
  TrainConfig cfg;
  cfg.proj_dim = 4;
  TrainState s = init_state(8, 4, cfg);
  s.step = 17;
  s.siglip.temperature = 12.5;
  s.siglip.bias = -7.25;
  save_checkpoint(tmp / "c.rfkt", s, "abc123");

  CheckpointInfo info;
  const TrainState back = load_checkpoint(tmp / "c.rfkt", &info);
  CHECK(info.raw_dim == 8);
  CHECK(info.proj_dim == 4);
  CHECK(info.step == 17);
  CHECK(info.config_hash == "abc123");
  CHECK(back.siglip.temperature == 12.5);
  CHECK(back.siglip.bias == -7.25);
  const Matrix expected = s.image_head.weight.cast<float>().cast<double>();
  CHECK(back.image_head.weight == expected);
  CHECK(back.text_head.bias == s.text_head.bias.cast<float>().cast<double>());

  const std::string bytes = read_raw(tmp / "c.rfkt");
  CHECK(bytes.substr(0, 4) == "RFKT");
  write_raw(tmp / "trail.rfkt", bytes + std::string(1, '\0'));
  CHECK(code_of([&] { load_checkpoint(tmp / "trail.rfkt"); }) == ErrorCode::kFormat);
  write_raw(tmp / "cut.rfkt", bytes.substr(0, bytes.size() - 8));
  CHECK(code_of([&] { load_checkpoint(tmp / "cut.rfkt"); }) == ErrorCode::kFormat);
}

TEST_CASE("reports round-trip and bad lines name their line number") {
  TempDir tmp;
  Report r;
  r.report_id = "r1";
  r.patient_id = "p1";
  r.sections = {{"impression", "Small nodule."}, {"findings", "Nodule (3/72)."}};
  r.full_text = "Nodule (3/72). Small nodule.";
  r.no_history_text = "Nodule.";
  r.series_geometries = {SeriesGeometry{3, 100, 3.0, 0.0, 300.0}};
  write_reports(tmp / "r.jsonl", {r});
  const auto back = read_reports(tmp / "r.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].report_id == "r1");
  CHECK(back[0].sections == r.sections);  // order preserved
  CHECK(back[0].full_text == r.full_text);
  CHECK_FALSE(back[0].organ_descriptions.has_value());
  CHECK(back[0].no_history_text == r.no_history_text);
  REQUIRE(back[0].series_geometries.size() == 1);
  CHECK(back[0].series_geometries[0].num_slices == 100);

  write_raw(tmp / "bad.jsonl",
            "{\"report_id\": \"a\", \"full_text\": \"x\"}\n\n{\"report_id\": \"b\", \n");
  const std::string msg = error_text([&] { read_reports(tmp / "bad.jsonl"); });
  CHECK(msg.find("bad.jsonl:3") != std::string::npos);
  CHECK(msg.find("malformed JSON") != std::string::npos);
  CHECK(code_of([&] { read_reports(tmp / "bad.jsonl"); }) == ErrorCode::kFormat);

  // full_text is rebuilt from ordered sections when absent.
  write_raw(tmp / "sections.jsonl",
            "{\"report_id\": \"s\", \"sections\": {\"findings\": \"A (1/2).\", \"impression\": \"B.\"}}\n");
  const auto rebuilt = read_reports(tmp / "sections.jsonl");
  REQUIRE(rebuilt.size() == 1);
  CHECK(rebuilt[0].full_text.find("A (1/2).") < rebuilt[0].full_text.find("B."));
}

TEST_CASE("reference sets accept both line shapes") {
  TempDir tmp;
  write_raw(tmp / "g.jsonl",
            "{\"report_id\": \"a\", \"references\": [[4, 38], [3, 72]]}\n"
            "{\"report_id\": \"b\", \"series\": 2, \"image\": 5}\n"
            "{\"report_id\": \"b\", \"series\": 2, \"image\": 6}\n"
            "{\"report_id\": \"c\", \"references\": []}\n");
  const ReferenceSets s = read_reference_sets(tmp / "g.jsonl");
  CHECK(s.at("a") == std::set<std::pair<int, int>>{{3, 72}, {4, 38}});
  CHECK(s.at("b").size() == 2);
  CHECK(s.at("c").empty());
}

TEST_CASE("snippet records") {
  SnippetRecord rec;
  rec.report_id = "r";
  rec.reference.series = 4;
  rec.reference.image = 38;
  rec.reference.begin = 16;
  rec.reference.end = 38;
  rec.reference.surface = "see series 4, image 38";
  rec.text = "Hepatic lesion";
  rec.axial_mm = 112.5;
  rec.depth_index = 10;
  std::ostringstream out;
  write_snippets(out, {rec});
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j["series"] == 4);
  CHECK(j["image"] == 38);
  CHECK(j["text"] == "Hepatic lesion");
  CHECK(j["axial_mm"] == 112.5);
  CHECK(j["depth_index"] == 10);
}

TEST_CASE("prompt banks round-trip and are validated") {
  TempDir tmp;
  PromptBank bank;
  bank.add(PromptEntry{"effusion", {"A.", "B.", "C."}, {"D.", "E.", "F."}});
  write_prompt_bank(tmp / "p.jsonl", bank);
  const PromptBank back = read_prompt_bank(tmp / "p.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back.at("effusion").negatives[2] == "F.");

  write_raw(tmp / "two.jsonl",
            "{\"finding\": \"x\", \"positives\": [\"A.\", \"B.\"], \"negatives\": [\"C.\", \"D.\", \"E.\"]}\n");
  CHECK(code_of([&] { read_prompt_bank(tmp / "two.jsonl"); }) == ErrorCode::kInvalidPromptBank);
}

TEST_CASE("corpus directories round-trip") {
  TempDir tmp;
  const Corpus c = generate(small_synth());
  save_corpus(tmp.path, c);
  const Corpus back = load_corpus(tmp.path);
  CHECK_NOTHROW(back.validate());
  CHECK(back.size() == c.size());
  CHECK(back.images == c.images.cast<float>().cast<double>());
  CHECK(back.depth == c.depth.cast<float>().cast<double>());
  CHECK(back.labels == c.labels);
  CHECK(back.splits == c.splits);
  CHECK(back.depth_index == c.depth_index);
  CHECK(back.snippet_mm == c.snippet_mm);
  CHECK(back.findings == c.findings);
  CHECK(back.grid.count == c.grid.count);
  for (std::size_t q = 0; q < c.num_findings(); ++q) {
    CHECK(back.counts[q].n_pos == c.counts[q].n_pos);
    CHECK(back.counts[q].n_neg == c.counts[q].n_neg);
  }
  REQUIRE(back.reports.size() == c.reports.size());
  CHECK(back.reports[5].full_text == c.reports[5].full_text);

  // Saving the loaded corpus again reproduces the files byte for byte.
  TempDir again;
  save_corpus(again.path, back);
  for (const char* f : {"images.remb", "depth.remb", "volumes.jsonl", "corpus.json"}) {
    CHECK(read_raw(again / f) == read_raw(tmp / f));
  }
}

TEST_CASE("run configuration parsing") {
  const RunConfig d = parse_run_config("{}");
  CHECK(d.train.epochs == 10);
  CHECK(d.train.weights.lambda == 8.0);
  CHECK(d.train.peak_lr == 2e-4);

  const RunConfig c = parse_run_config(
      R"({"synth": {"n_pairs": 100, "proj_dim": 32, "seed": 4},
          "train": {"epochs": 3, "lambda": 2.5, "enable_loc": false},
          "eval": {"relevance": "graded", "B": 50, "recall_k": [1, 10]}})");
  CHECK(c.synth.n_pairs == 100);
  CHECK(c.train.proj_dim == 32);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.weights.lambda == 2.5);
  CHECK_FALSE(c.train.enable_loc);
  CHECK(c.eval.map_rule.kind == RelevanceRule::Kind::kGraded);
  CHECK(c.eval.bootstrap.resamples == 50);
  CHECK(c.eval.recall_k == std::vector<std::size_t>{1, 10});

  const std::string unknown = error_text([] { parse_run_config(R"({"train": {"epoch": 3}})"); });
  CHECK(unknown.find("train.epoch") != std::string::npos);
  CHECK(code_of([] { parse_run_config(R"({"train": {"epoch": 3}})"); }) == ErrorCode::kInvalidConfig);
  CHECK(code_of([] { parse_run_config(R"({"trainer": {}})"); }) == ErrorCode::kInvalidConfig);
  CHECK(code_of([] { parse_run_config(R"({"train": {"epochs": "ten"}})"); }) ==
        ErrorCode::kInvalidConfig);
  CHECK(code_of([] { parse_run_config(R"({"synth": {"pair_signal": 2}})"); }) ==
        ErrorCode::kInvalidConfig);
  CHECK(code_of([] { parse_run_config("{not json"); }) == ErrorCode::kInvalidConfig);
  CHECK(code_of([] { load_run_config("/nonexistent/config.json"); }) == ErrorCode::kIo);
}

TEST_CASE("canonical config JSON re-parses to the same hash") {
  const RunConfig c = parse_run_config(R"({"train": {"epochs": 4}, "eval": {"seed": 9}})");
  const std::string canon = run_config_json(c);
  const RunConfig back = parse_run_config(canon);
  CHECK(run_config_json(back) == canon);
  CHECK(config_hash(back) == config_hash(c));
  const RunConfig other = parse_run_config(R"({"train": {"epochs": 5}, "eval": {"seed": 9}})");
  CHECK(config_hash(other) != config_hash(c));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("metrics and manifest JSON") {
  EvalResult r;
  BootstrapConfig cfg;
  cfg.resamples = 100;
  cfg.seed = 3;
  r.report.add("R@10", Interval{12.5, 10.0, 15.0, 100}, cfg);
  r.retrieval_queries = 50;
  r.retrieval_pool = 500;
  const auto j = nlohmann::json::parse(metrics_json(r));
  CHECK(j["metrics"]["R@10"]["point"] == 12.5);
  CHECK(j["metrics"]["R@10"]["lower"] == 10.0);
  CHECK(j["metrics"]["R@10"]["B"] == 100);
  CHECK(j["metrics"]["R@10"]["level"] == 0.95);
  CHECK(j["metrics"]["R@10"]["seed"] == 3);
  CHECK(j["retrieval"]["pool"] == 500);

  Manifest m;
  m.command = "train";
  m.config_hash = "ff";
  m.train_seed = 7;
  m.outputs = {"checkpoint.rfkt"};
  const auto mj = nlohmann::json::parse(manifest_json(m));
  CHECK(mj["command"] == "train");
  CHECK(mj["seeds"]["train"] == 7);
  CHECK(mj["outputs"][0] == "checkpoint.rfkt");

  EpochLog e{2, 1e-4, 1.0, 0.5, 0.25, 5.25};
  const auto ej = nlohmann::json::parse(epoch_log_json(e));
  CHECK(ej["epoch"] == 2);
  CHECK(ej["loss_total"] == 5.25);
}
