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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slicealign/eval.hpp"
#include "slicealign/numeric.hpp"
#include "slicealign/objectives.hpp"
#include "slicealign/synthetic.hpp"

namespace slicealign {

struct TrainConfig {
  int epochs = 10;
  std::size_t proj_dim = 64;
  std::size_t batch_size = 64;
  std::size_t accumulation_steps = 1;
  LossWeights weights;
  double peak_lr = 2e-4;
  double final_lr = 1e-6;
  std::int64_t warmup_steps = 0;  // 0: one epoch
  std::int64_t total_steps = 0;   // 0: epochs * steps per epoch
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  bool enable_global = true;
  bool enable_prompt = true;
  bool enable_loc = true;
  std::size_t max_prompt_findings = 64;
  double loc_tau = 0.1;
  double soft_target_sigma = 2.0;
  double init_temperature = 10.0;
  double init_bias = -10.0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_global = 0.0;
  double loss_prompt = 0.0;
  double loss_loc = 0.0;
  double loss_total = 0.0;
};

// Trainable state. The encoders are frozen, so the heads and the two SigLIP
// scalars are the only parameters.
struct TrainState {
  ProjectionHead image_head;
  ProjectionHead text_head;
  SigLipParams siglip;
  OptimizerState optimizer;
  std::int64_t step = 0;
  std::vector<EpochLog> history;
  std::vector<std::string> notes;
};

// Flat parameter layout: image weight, image bias, text weight, text bias,
// log temperature, SigLIP bias. Weights are row-major.
std::size_t parameter_count(std::size_t raw_dim, std::size_t proj_dim);
Vector pack_parameters(const TrainState& state);
void unpack_parameters(TrainState& state, const Vector& params);

TrainState init_state(std::size_t raw_dim, std::size_t proj_dim, const TrainConfig& cfg);

struct BatchLoss {
  double global = 0.0;
  double prompt = 0.0;
  double loc = 0.0;
  double total = 0.0;
  Vector grad;  // d total / d params, empty when not requested
};

// Combined objective of one batch of corpus indices at the given parameters.
// Prompt variants and finding subsamples are drawn from `draw_seed`.
BatchLoss batch_objective(const Vector& params, std::size_t raw_dim, std::size_t proj_dim,
                          const Corpus& corpus, std::span<const std::size_t> batch,
                          const TrainConfig& cfg, std::uint64_t draw_seed, bool want_grad);

using EpochCallback = std::function<void(const EpochLog&)>;

ScheduleConfig make_schedule(const TrainConfig& cfg, std::int64_t steps_per_epoch);
std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t train_size);

TrainState train(const Corpus& corpus, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalProtocols {
  Split split = Split::kTest;
  std::size_t retrieval_pool = 1000;
  std::vector<std::size_t> recall_k = {1, 5, 10};
  RelevanceRule map_rule;
  std::size_t merlin_pool = 128;
  std::size_t merlin_trials = 100;
  BootstrapConfig bootstrap;
  bool retrieval = true;
  bool map = true;
  bool classification = true;
  bool merlin = true;
  bool localization = true;
};

struct EvalResult {
  MetricsReport report;
  std::size_t retrieval_queries = 0;
  std::size_t retrieval_pool = 0;
  Interval recall10_chance;
  std::vector<double> per_finding_auc;  // NaN where labels are degenerate
};

// Runs the enabled protocols on one split with bootstrap CIs. Reads state only.
EvalResult evaluate_checkpoint(const TrainState& state, const Corpus& corpus,
                               const EvalProtocols& protocols);

}  // namespace slicealign
