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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "slicealign/error.hpp"
#include "slicealign/trainer.hpp"

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

SynthConfig tiny_synth(std::uint64_t seed = 1, double pair_signal = 0.8) {
  SynthConfig s;
  s.n_pairs = 240;
  s.raw_dim = 24;
  s.proj_dim = 12;
  s.n_findings = 5;
  s.depth_D = 8;
  s.pair_signal = pair_signal;
  s.seed = seed;
  return s;
}

TrainConfig tiny_train(std::uint64_t seed = 1) {
  TrainConfig t;
  t.epochs = 2;
  t.proj_dim = 12;
  t.batch_size = 32;
  t.peak_lr = 1e-3;
  t.seed = seed;
  return t;
}

std::vector<std::size_t> first_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_CASE("parameters pack and unpack losslessly") {
  const TrainConfig cfg = tiny_train();
  const TrainState s = init_state(24, 12, cfg);
  const Vector p = pack_parameters(s);
  CHECK(static_cast<std::size_t>(p.size()) == parameter_count(24, 12));
  CHECK(p.size() == 2 * (24 * 12 + 12) + 2);
  TrainState t = init_state(24, 12, tiny_train(99));
  unpack_parameters(t, p);
  CHECK(pack_parameters(t) == p);
  CHECK(t.siglip.temperature == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(t.siglip.bias == -10.0);
}

TEST_CASE("schedule bookkeeping") {
  TrainConfig cfg = tiny_train();
  cfg.batch_size = 64;
  CHECK(steps_per_epoch(cfg, 200) == 3);  // the partial batch is dropped with the global loss
  cfg.enable_global = false;
  CHECK(steps_per_epoch(cfg, 200) == 4);
  cfg.accumulation_steps = 2;
  CHECK(steps_per_epoch(cfg, 200) == 2);

  TrainConfig g = tiny_train();
  g.epochs = 10;
  const ScheduleConfig sc = make_schedule(g, 25);
  CHECK(sc.warmup_steps == 25);
  CHECK(sc.total_steps == 250);
  CHECK(sc.peak_lr == g.peak_lr);
  CHECK(sc.final_lr == 1e-6);

  TrainConfig big = tiny_train();
  big.batch_size = 500;
  CHECK(code_of([&] { steps_per_epoch(big, 200); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("invalid train configurations") {
  TrainConfig cfg = tiny_train();
  cfg.enable_global = cfg.enable_prompt = cfg.enable_loc = false;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::kInvalidConfig);
  cfg = tiny_train();
  cfg.batch_size = 1;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::kInvalidConfig);
  cfg.enable_global = false;
  CHECK_NOTHROW(cfg.validate());
  cfg = tiny_train();
  cfg.final_lr = 1.0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::kInvalidConfig);
}

TEST_CASE("a zero learning rate leaves every parameter unchanged") {
  const Corpus c = generate(tiny_synth());
  TrainConfig cfg = tiny_train();
  cfg.peak_lr = 0.0;
  cfg.final_lr = 0.0;
  const Vector before = pack_parameters(init_state(c.raw_dim(), cfg.proj_dim, cfg));
  const TrainState after = train(c, cfg);
  CHECK(after.step > 0);
  CHECK(pack_parameters(after) == before);
}

TEST_CASE("training is bit-reproducible") {
  const Corpus c = generate(tiny_synth());
  const TrainConfig cfg = tiny_train();
  const TrainState a = train(c, cfg);
  const TrainState b = train(c, cfg);
  CHECK(pack_parameters(a) == pack_parameters(b));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].loss_total == b.history[e].loss_total);
  }
  const TrainState other = train(c, tiny_train(2));
  CHECK(pack_parameters(other) != pack_parameters(a));
}

TEST_CASE("logged losses are finite and combine exactly") {
  const Corpus c = generate(tiny_synth());
  TrainConfig cfg = tiny_train();
  cfg.epochs = 3;
  std::vector<EpochLog> seen;
  const TrainState s = train(c, cfg, [&](const EpochLog& l) { seen.push_back(l); });
  REQUIRE(seen.size() == 3);
  REQUIRE(s.history.size() == 3);
  for (const auto& l : s.history) {
    CHECK(std::isfinite(l.loss_global));
    CHECK(std::isfinite(l.loss_prompt));
    CHECK(std::isfinite(l.loss_loc));
    const double combined = l.loss_global + cfg.weights.lambda * l.loss_prompt +
                            cfg.weights.beta * l.loss_loc;
    CHECK(std::abs(l.loss_total - combined) <= 1e-12 * std::max(1.0, std::abs(combined)));
    CHECK(l.lr > 0.0);
  }
  // Per step as well.
  const Vector p = pack_parameters(s);
  const auto batch = first_indices(32);
  const BatchLoss b = batch_objective(p, c.raw_dim(), cfg.proj_dim, c, batch, cfg, 4, true);
  CHECK(std::abs(b.total - (b.global + 8.0 * b.prompt + b.loc)) <= 1e-12 * std::abs(b.total));
}

TEST_CASE("zero loss weights leave only the global path") {
  const Corpus c = generate(tiny_synth());
  TrainConfig all = tiny_train();
  all.weights = LossWeights{0.0, 0.0};
  TrainConfig global_only = tiny_train();
  global_only.enable_prompt = global_only.enable_loc = false;
  const Vector p = pack_parameters(init_state(c.raw_dim(), 12, all));
  const auto batch = first_indices(32);
  const BatchLoss a = batch_objective(p, c.raw_dim(), 12, c, batch, all, 3, true);
  const BatchLoss g = batch_objective(p, c.raw_dim(), 12, c, batch, global_only, 3, true);
  CHECK(a.total == g.total);
  CHECK((a.grad - g.grad).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("with only the localization loss, text gradients come from snippets alone") {
  const Corpus c = generate(tiny_synth());
  TrainConfig cfg = tiny_train();
  cfg.enable_global = cfg.enable_prompt = false;
  const Vector p = pack_parameters(init_state(c.raw_dim(), 12, cfg));
  const auto batch = first_indices(16);
  const BatchLoss base = batch_objective(p, c.raw_dim(), 12, c, batch, cfg, 0, true);

  const std::size_t text_begin = 24 * 12 + 12;
  const std::size_t text_len = 24 * 12 + 12;
  CHECK(base.grad.segment(static_cast<Eigen::Index>(text_begin), static_cast<Eigen::Index>(text_len))
            .cwiseAbs()
            .maxCoeff() > 0.0);
  // The SigLIP scalars are untouched.
  CHECK(base.grad.tail(2).cwiseAbs().maxCoeff() == 0.0);

  Corpus reports_changed = c;
  reports_changed.texts = Matrix::Ones(c.texts.rows(), c.texts.cols()) / std::sqrt(24.0);
  reports_changed.prompt_embeddings.setConstant(1.0 / std::sqrt(24.0));
  const BatchLoss same = batch_objective(p, c.raw_dim(), 12, reports_changed, batch, cfg, 0, true);
  CHECK((same.grad - base.grad).cwiseAbs().maxCoeff() == 0.0);

  Corpus snippets_changed = c;
  snippets_changed.snippets.row(0) = c.snippets.row(1);
  const BatchLoss diff = batch_objective(p, c.raw_dim(), 12, snippets_changed, batch, cfg, 0, true);
  CHECK((diff.grad - base.grad).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("non-finite inputs abort with the offending batch") {
  Corpus c = generate(tiny_synth());
  c.texts(3, 0) = std::nan("");
  try {
    train(c, tiny_train());
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch [") != std::string::npos);
  }
}

TEST_CASE("the prompt-loss exclusion of all-positive findings is disclosed") {
  Corpus c = generate(tiny_synth());
  for (std::size_t i = 0; i < c.size(); ++i) c.labels[i][0] = Label::kPositive;
  c.counts = plant_counts(c.labels, c.splits);
  TrainConfig cfg = tiny_train();
  cfg.epochs = 1;
  const TrainState s = train(c, cfg);
  bool mentioned = false;
  for (const auto& n : s.notes) mentioned = mentioned || n.find("left out") != std::string::npos;
  CHECK(mentioned);
}

TEST_CASE("evaluate_checkpoint") {
  SynthConfig sc = tiny_synth(4, 0.0);
  sc.n_pairs = 1200;
  const Corpus c = generate(sc);
  TrainConfig cfg = tiny_train();
  EvalProtocols prot;
  prot.bootstrap.resamples = 200;
  prot.merlin_trials = 10;
  prot.merlin_pool = 64;

  const TrainState untrained = init_state(c.raw_dim(), 12, cfg);
  const EvalResult r = evaluate_checkpoint(untrained, c, prot);
  for (const char* name : {"R@1", "R@5", "R@10", "MAP@5", "AUC_macro", "Merlin_R@1", "loc_MAE_mm",
                           "loc_<6mm", "loc_<18mm", "loc_<30mm", "baseline_middle_MAE_mm",
                           "baseline_random_MAE_mm"}) {
    INFO(name);
    CHECK(r.report.find(name) != nullptr);
  }
  // Null model: chance-level retrieval.
  const double r10 = r.report.find("R@10")->ci.point;
  CHECK(r10 >= r.recall10_chance.lower);
  CHECK(r10 <= r.recall10_chance.upper);
  CHECK(r.retrieval_pool == 1000);

  const EvalResult again = evaluate_checkpoint(untrained, c, prot);
  REQUIRE(again.report.entries.size() == r.report.entries.size());
  for (std::size_t i = 0; i < r.report.entries.size(); ++i) {
    CHECK(again.report.entries[i].ci.point == r.report.entries[i].ci.point);
    CHECK(again.report.entries[i].ci.lower == r.report.entries[i].ci.lower);
  }

  EvalProtocols few = prot;
  few.map = few.classification = few.merlin = few.localization = false;
  const EvalResult only = evaluate_checkpoint(untrained, c, few);
  CHECK(only.report.find("AUC_macro") == nullptr);
  CHECK(only.report.find("R@10") != nullptr);

  const TrainState wrong = init_state(c.raw_dim() + 1, 12, cfg);
  CHECK(code_of([&] { evaluate_checkpoint(wrong, c, prot); }) == ErrorCode::kConfigMismatch);
}

TEST_CASE("stronger pair signal learns better retrieval") {
  for (std::uint64_t seed : {1, 2, 3}) {
    double r10[2];
    int k = 0;
    for (double signal : {0.1, 0.9}) {
      SynthConfig sc = tiny_synth(seed, signal);
      sc.n_pairs = 800;
      const Corpus c = generate(sc);
      TrainConfig cfg = tiny_train(seed);
      cfg.epochs = 8;
      cfg.peak_lr = 3e-3;
      cfg.enable_prompt = cfg.enable_loc = false;
      const TrainState s = train(c, cfg);
      EvalProtocols prot;
      prot.map = prot.classification = prot.merlin = prot.localization = false;
      prot.bootstrap.resamples = 10;
      r10[k++] = evaluate_checkpoint(s, c, prot).report.find("R@10")->ci.point;
    }
    INFO("seed ", seed, ": ", r10[0], " vs ", r10[1]);
    CHECK(r10[1] > r10[0]);
  }
}
