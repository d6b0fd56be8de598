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

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "slicealign/commands.hpp"
#include "slicealign/version.hpp"

using namespace slicealign;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("slicealign_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
}

std::string read_file(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

const char* kExampleReport =
    R"({"report_id": "r1", "patient_id": "p1", "full_text": "Stable. Hepatic lesion, see series 4, image 38. Otherwise clear.", "sections": {"findings": "Stable. Hepatic lesion, see series 4, image 38. Otherwise clear."}, "series_geometries": [{"series": 4, "num_slices": 120, "slice_thickness_mm": 3.0, "first_slice_offset_mm": 0.0, "axial_length_mm": 360.0}]})";

std::string small_config(int proj_dim) {
  return R"({"synth": {"n_pairs": 300, "raw_dim": 16, "proj_dim": )" + std::to_string(proj_dim) +
         R"(, "n_findings": 4, "depth_D": 8, "seed": 3},
  "train": {"epochs": 2, "batch_size": 32, "peak_lr": 0.001},
  "eval": {"B": 50, "retrieval_pool": 100, "merlin_pool": 16, "merlin_trials": 5}})";
}

}  // namespace

TEST_CASE("help, version and usage errors") {
  Run r = cli({"--version"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, kVersion));
  r = cli({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "mine"));
  CHECK(contains(r.out, "gradcheck"));
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"gradcheck", "--no-such-flag"}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
}

TEST_CASE("mine extracts the example reference") {
  TempDir tmp;
  write_file(tmp / "reports.jsonl", std::string(kExampleReport) + "\n");
  const Run r = cli({"mine", tmp / "reports.jsonl", "--out", tmp / "snippets.jsonl"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "mined 1 snippet"));
  CHECK(contains(r.out, "verbose_en: 1"));
  const auto j = nlohmann::json::parse(read_file(tmp / "snippets.jsonl"));
  CHECK(j["report_id"] == "r1");
  CHECK(j["series"] == 4);
  CHECK(j["image"] == 38);
  CHECK(j["text"] == "Hepatic lesion");
  CHECK(j["axial_mm"] == 112.5);
  CHECK(j["depth_index"] == 10);

  // Snippets to stdout, statistics to stderr.
  const Run s = cli({"mine", tmp / "reports.jsonl"});
  CHECK(s.code == kExitOk);
  CHECK(contains(s.out, "\"image\":38"));
  CHECK(contains(s.err, "mined 1 snippet"));
}

TEST_CASE("mine edge cases") {
  TempDir tmp;
  write_file(tmp / "empty.jsonl", "");
  Run r = cli({"mine", tmp / "empty.jsonl", "--out", tmp / "s.jsonl"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "mined 0 snippet"));
  CHECK(read_file(tmp / "s.jsonl").empty());

  write_file(tmp / "bad.jsonl", std::string(kExampleReport) + "\n{\"report_id\": \n");
  r = cli({"mine", tmp / "bad.jsonl", "--out", tmp / "s.jsonl"});
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "bad.jsonl:2"));

  r = cli({"mine", tmp / "missing.jsonl"});
  CHECK(r.code == kExitFailure);

  write_file(tmp / "patterns.txt", "broken = (\\d+\n");
  write_file(tmp / "reports.jsonl", std::string(kExampleReport) + "\n");
  r = cli({"mine", tmp / "reports.jsonl", tmp / "patterns.txt"});
  CHECK(r.code == kExitUsage);

  write_file(tmp / "patterns.txt", "slash = \\b(\\d+)/(\\d+)\\b\n");
  write_file(tmp / "slash.jsonl",
             R"({"report_id": "x", "full_text": "Node at 5/17 grew."})"
             "\n");
  r = cli({"mine", tmp / "slash.jsonl", tmp / "patterns.txt", "--out", tmp / "o.jsonl"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "slash: 1"));
  CHECK(contains(r.out, "without axial position: 1"));
}

TEST_CASE("eval-mining") {
  TempDir tmp;
  std::string gold, missed;
  for (int i = 0; i < 10; ++i) {
    const std::string line = R"({"report_id": "r)" + std::to_string(i) +
                             R"(", "references": [[2, )" + std::to_string(10 + i) + "]]}\n";
    gold += line;
    missed += i == 4 ? R"({"report_id": "r4", "references": []})"
                       "\n"
                     : line;
  }
  write_file(tmp / "gold.jsonl", gold);
  write_file(tmp / "missed.jsonl", missed);

  Run r = cli({"eval-mining", tmp / "gold.jsonl", tmp / "gold.jsonl", "--resamples", "200"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "precision 100.00"));
  CHECK(contains(r.out, "recall 100.00"));
  CHECK(contains(r.out, "f1 100.00"));

  r = cli({"eval-mining", tmp / "missed.jsonl", tmp / "gold.jsonl", "--resamples", "200"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.out, "recall 90.00"));
  CHECK(contains(r.out, "precision 100.00"));

  write_file(tmp / "empty.jsonl", "");
  r = cli({"eval-mining", tmp / "empty.jsonl", tmp / "empty.jsonl"});
  CHECK(r.code == kExitOk);
  CHECK(contains(r.err, "warning"));
  CHECK(contains(r.out, "precision 100.00"));

  write_file(tmp / "extra.jsonl", R"({"report_id": "zz", "references": [[1, 1]]})"
                                  "\n");
  r = cli({"eval-mining", tmp / "extra.jsonl", tmp / "gold.jsonl"});
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "zz"));
}

TEST_CASE("gradcheck") {
  const Run a = cli({"gradcheck", "--trials", "1", "--seed", "4"});
  CHECK(a.code == kExitOk);
  CHECK(contains(a.out, "PASS (seed 4"));
  const Run b = cli({"gradcheck", "--trials", "1", "--seed", "4"});
  CHECK(a.out == b.out);

  const Run f = cli({"gradcheck", "--trials", "1", "--inject-fault", "prompt_loss"});
  CHECK(f.code == kExitFailure);
  CHECK(contains(f.out, "FAIL prompt_loss trial 0"));

  CHECK(cli({"gradcheck", "--trials", "1", "--inject-fault", "nope"}).code == kExitUsage);
}

TEST_CASE("gen-synth, train and eval") {
  TempDir tmp;
  write_file(tmp / "cfg.json", small_config(8));
  Run r = cli({"gen-synth", "--config", tmp / "cfg.json", "--out", tmp / "corpus"});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(tmp / "corpus/images.remb"));
  CHECK(fs::exists(tmp / "corpus/manifest.json"));

  r = cli({"train", "--config", tmp / "cfg.json", "--corpus", tmp / "corpus", "--out", tmp / "run"});
  REQUIRE(r.code == kExitOk);
  CHECK(contains(r.out, "epoch 2"));
  const std::string log = read_file(tmp / "run/train_log.jsonl");
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);
  const auto manifest = nlohmann::json::parse(read_file(tmp / "run/manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seeds"]["synth"] == 3);

  r = cli({"eval", "--config", tmp / "cfg.json", "--corpus", tmp / "corpus", "--checkpoint",
           tmp / "run/checkpoint.rfkt", "--out", tmp / "eval1"});
  REQUIRE(r.code == kExitOk);
  CHECK(contains(r.out, "R@10"));
  r = cli({"eval", "--config", tmp / "cfg.json", "--corpus", tmp / "corpus", "--checkpoint",
           tmp / "run/checkpoint.rfkt", "--out", tmp / "eval2"});
  REQUIRE(r.code == kExitOk);
  CHECK(read_file(tmp / "eval1/metrics.json") == read_file(tmp / "eval2/metrics.json"));
  const auto metrics = nlohmann::json::parse(read_file(tmp / "eval1/metrics.json"));
  CHECK(metrics["metrics"].contains("AUC_macro"));
  CHECK(metrics["metrics"]["R@10"]["B"] == 50);

  // A checkpoint trained at another width is refused with both shapes named.
  write_file(tmp / "cfg4.json", small_config(4));
  r = cli({"eval", "--config", tmp / "cfg4.json", "--corpus", tmp / "corpus", "--checkpoint",
           tmp / "run/checkpoint.rfkt"});
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "16x8"));
  CHECK(contains(r.err, "16x4"));

  write_file(tmp / "typo.json", R"({"train": {"epoch": 3}})");
  r = cli({"train", "--config", tmp / "typo.json", "--corpus", tmp / "corpus", "--out", tmp / "x"});
  CHECK(r.code == kExitUsage);
  CHECK(contains(r.err, "train.epoch"));
}
