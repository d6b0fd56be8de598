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

#include "slicealign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slicealign/error.hpp"
#include "slicealign/prompt_engine.hpp"

namespace slicealign {
namespace {

struct ParamView {
  std::size_t raw;
  std::size_t proj;

  std::size_t weight_size() const { return raw * proj; }
  std::size_t image_weight() const { return 0; }
  std::size_t image_bias() const { return weight_size(); }
  std::size_t text_weight() const { return weight_size() + proj; }
  std::size_t text_bias() const { return 2 * weight_size() + proj; }
  std::size_t log_temperature() const { return 2 * weight_size() + 2 * proj; }
  std::size_t siglip_bias() const { return log_temperature() + 1; }
  std::size_t total() const { return siglip_bias() + 1; }
};

ProjectionHead head_from(const Vector& params, std::size_t weight_at, std::size_t bias_at,
                         const ParamView& v) {
  ProjectionHead h;
  const auto raw = static_cast<Eigen::Index>(v.raw);
  const auto proj = static_cast<Eigen::Index>(v.proj);
  h.weight = Eigen::Map<const Matrix>(params.data() + weight_at, raw, proj);
  h.bias = params.segment(static_cast<Eigen::Index>(bias_at), proj);
  return h;
}

void write_head(Vector& params, std::size_t weight_at, std::size_t bias_at,
                const Matrix& weight, const Vector& bias) {
  Eigen::Map<Matrix>(params.data() + weight_at, weight.rows(), weight.cols()) = weight;
  params.segment(static_cast<Eigen::Index>(bias_at), bias.size()) = bias;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

// Forward through a head and row normalization, keeping what backward needs.
struct Projected {
  Matrix pre;
  Matrix unit;
};

Projected project(const ProjectionHead& head, const Matrix& x) {
  Projected p;
  p.pre = head_forward(head, x);
  p.unit = l2_normalize_rows(p.pre);
  return p;
}

void accumulate_head_grad(Vector& grad, std::size_t weight_at, std::size_t bias_at,
                          const ProjectionHead& head, const Matrix& x, const Projected& p,
                          const Matrix& grad_unit) {
  const Matrix grad_pre = l2_normalize_rows_backward(p.pre, p.unit, grad_unit);
  const HeadGradients g = head_backward(head, x, grad_pre);
  Eigen::Map<Matrix>(grad.data() + weight_at, g.weight.rows(), g.weight.cols()) += g.weight;
  grad.segment(static_cast<Eigen::Index>(bias_at), g.bias.size()) += g.bias;
}

std::string describe_batch(std::span<const std::size_t> batch) {
  std::string ids;
  for (std::size_t k = 0; k < batch.size() && k < 8; ++k) {
    ids += (k ? "," : "") + std::to_string(batch[k]);
  }
  if (batch.size() > 8) ids += ",...";
  return "[" + ids + "]";
}

void check_finite(double value, const char* what, std::span<const std::size_t> batch) {
  if (std::isfinite(value)) return;
  throw Error(ErrorCode::kNonFiniteLoss,
              std::string(what) + " loss is not finite on batch " + describe_batch(batch));
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (proj_dim < 2) fail("proj_dim must be >= 2");
  if (!enable_global && !enable_prompt && !enable_loc) fail("at least one loss must be enabled");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (enable_global && batch_size < 2) fail("the global loss needs batch_size >= 2");
  if (accumulation_steps < 1) fail("accumulation_steps must be >= 1");
  if (weights.lambda < 0.0 || weights.beta < 0.0) fail("loss weights must be non-negative");
  if (!(loc_tau > 0.0)) fail("loc_tau must be > 0");
  if (!(soft_target_sigma > 0.0)) fail("soft_target_sigma must be > 0");
  if (!(init_temperature > 0.0)) fail("init_temperature must be > 0");
  if (max_prompt_findings < 1) fail("max_prompt_findings must be >= 1");
  if (peak_lr < 0.0 || final_lr < 0.0 || final_lr > peak_lr) {
    fail("learning rates need 0 <= final_lr <= peak_lr");
  }
}

std::size_t parameter_count(std::size_t raw_dim, std::size_t proj_dim) {
  return ParamView{raw_dim, proj_dim}.total();
}

Vector pack_parameters(const TrainState& s) {
  const ParamView v{s.image_head.in_dim(), s.image_head.out_dim()};
  Vector p(static_cast<Eigen::Index>(v.total()));
  write_head(p, v.image_weight(), v.image_bias(), s.image_head.weight, s.image_head.bias);
  write_head(p, v.text_weight(), v.text_bias(), s.text_head.weight, s.text_head.bias);
  p[static_cast<Eigen::Index>(v.log_temperature())] = std::log(s.siglip.temperature);
  p[static_cast<Eigen::Index>(v.siglip_bias())] = s.siglip.bias;
  return p;
}

void unpack_parameters(TrainState& s, const Vector& p) {
  const ParamView v{s.image_head.in_dim(), s.image_head.out_dim()};
  if (static_cast<std::size_t>(p.size()) != v.total()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has the wrong size");
  }
  s.image_head = head_from(p, v.image_weight(), v.image_bias(), v);
  s.text_head = head_from(p, v.text_weight(), v.text_bias(), v);
  s.siglip.temperature = std::exp(p[static_cast<Eigen::Index>(v.log_temperature())]);
  s.siglip.bias = p[static_cast<Eigen::Index>(v.siglip_bias())];
}

TrainState init_state(std::size_t raw_dim, std::size_t proj_dim, const TrainConfig& cfg) {
  TrainState s;
  Rng image_rng = make_rng(cfg.seed, "init_image_head");
  Rng text_rng = make_rng(cfg.seed, "init_text_head");
  s.image_head = ProjectionHead::random(raw_dim, proj_dim, image_rng);
  s.text_head = ProjectionHead::random(raw_dim, proj_dim, text_rng);
  s.siglip = SigLipParams{cfg.init_temperature, cfg.init_bias};
  s.optimizer = OptimizerState(parameter_count(raw_dim, proj_dim), cfg.optimizer);
  return s;
}

BatchLoss batch_objective(const Vector& params, std::size_t raw_dim, std::size_t proj_dim,
                          const Corpus& corpus, std::span<const std::size_t> batch,
                          const TrainConfig& cfg, std::uint64_t draw_seed, bool want_grad) {
  const ParamView v{raw_dim, proj_dim};
  if (static_cast<std::size_t>(params.size()) != v.total()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has the wrong size");
  }
  if (corpus.raw_dim() != raw_dim) {
    throw Error(ErrorCode::kConfigMismatch, "corpus raw dim " + std::to_string(corpus.raw_dim()) +
                                                " vs model raw dim " + std::to_string(raw_dim));
  }
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "empty batch");

  const ProjectionHead image_head = head_from(params, v.image_weight(), v.image_bias(), v);
  const ProjectionHead text_head = head_from(params, v.text_weight(), v.text_bias(), v);
  const double temperature = std::exp(params[static_cast<Eigen::Index>(v.log_temperature())]);
  const SigLipParams siglip{temperature, params[static_cast<Eigen::Index>(v.siglip_bias())]};

  BatchLoss out;
  if (want_grad) out.grad = Vector::Zero(params.size());
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto proj = static_cast<Eigen::Index>(proj_dim);

  Matrix image_x;
  Projected image_p;
  Matrix grad_image_unit;
  if (cfg.enable_global || cfg.enable_prompt) {
    image_x = gather_rows(corpus.images, batch);
    image_p = project(image_head, image_x);
    grad_image_unit = Matrix::Zero(b, proj);
  }

  if (cfg.enable_global) {
    const Matrix text_x = gather_rows(corpus.texts, batch);
    const Projected text_p = project(text_head, text_x);
    const SigLipResult r = siglip_loss(image_p.unit, text_p.unit, siglip);
    out.global = r.loss;
    check_finite(out.global, "global", batch);
    if (want_grad) {
      grad_image_unit += r.grad_image;
      accumulate_head_grad(out.grad, v.text_weight(), v.text_bias(), text_head, text_x, text_p,
                           r.grad_text);
      out.grad[static_cast<Eigen::Index>(v.log_temperature())] += temperature * r.grad_temperature;
      out.grad[static_cast<Eigen::Index>(v.siglip_bias())] += r.grad_bias;
    }
  }

  if (cfg.enable_prompt) {
    const Projected prompt_p = project(text_head, corpus.prompt_embeddings);
    Matrix grad_prompt_unit = Matrix::Zero(prompt_p.unit.rows(), proj);
    Matrix grad_volume_unit = Matrix::Zero(b, proj);
    // The prompt loss shares the SigLIP temperature but does not train it.
    const double tau = 1.0 / temperature;

    std::vector<std::size_t> eligible;
    for (std::size_t q = 0; q < corpus.num_findings(); ++q) {
      if (corpus.counts[q].alpha_defined()) eligible.push_back(q);
    }

    double sum = 0.0;
    std::size_t contributing = 0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t i = batch[k];
      std::vector<std::size_t> m;
      for (std::size_t q : eligible) {
        if (corpus.labels[i][q] != Label::kAbsent) m.push_back(q);
      }
      if (m.empty()) continue;
      if (m.size() > cfg.max_prompt_findings) {
        Rng sub_rng = make_rng(draw_seed, "prompt_subsample", k);
        for (std::size_t j = 0; j < cfg.max_prompt_findings; ++j) {
          std::swap(m[j], m[j + uniform_index(sub_rng, m.size() - j)]);
        }
        m.resize(cfg.max_prompt_findings);
      }

      Rng variant_rng = make_rng(draw_seed, "prompt_variant", k);
      PromptLossInputs in;
      in.volume = image_p.unit.row(static_cast<Eigen::Index>(k)).transpose();
      in.tau = tau;
      std::vector<std::pair<Eigen::Index, Eigen::Index>> rows;
      for (std::size_t q : m) {
        const Eigen::Index pos_row =
            corpus.prompt_row(q, Polarity::kPositive, sample_variant_index(variant_rng));
        const Eigen::Index neg_row =
            corpus.prompt_row(q, Polarity::kNegative, sample_variant_index(variant_rng));
        rows.emplace_back(pos_row, neg_row);
        PromptFinding f;
        f.positive = prompt_p.unit.row(pos_row).transpose();
        f.negative = prompt_p.unit.row(neg_row).transpose();
        f.label = corpus.labels[i][q] == Label::kPositive ? 1 : 0;
        f.weight = corpus.counts[q].weight;
        f.n_pos = corpus.counts[q].n_pos;
        f.n_neg = corpus.counts[q].n_neg;
        in.findings.push_back(std::move(f));
      }
      const PromptLossResult r = prompt_loss(in);
      sum += r.loss;
      ++contributing;
      if (want_grad) {
        grad_volume_unit.row(static_cast<Eigen::Index>(k)) += r.grad_volume.transpose();
        for (std::size_t j = 0; j < rows.size(); ++j) {
          grad_prompt_unit.row(rows[j].first) += r.grad_positive[j].transpose();
          grad_prompt_unit.row(rows[j].second) += r.grad_negative[j].transpose();
        }
      }
    }
    if (contributing > 0) {
      const double inv = 1.0 / static_cast<double>(contributing);
      out.prompt = sum * inv;
      check_finite(out.prompt, "prompt", batch);
      if (want_grad) {
        const double scale = cfg.weights.lambda * inv;
        grad_image_unit += scale * grad_volume_unit;
        grad_prompt_unit *= scale;
        accumulate_head_grad(out.grad, v.text_weight(), v.text_bias(), text_head,
                             corpus.prompt_embeddings, prompt_p, grad_prompt_unit);
      }
    }
  }

  if (cfg.enable_loc) {
    const auto depth_rows = static_cast<Eigen::Index>(corpus.grid.count);
    Matrix depth_x(b * depth_rows, static_cast<Eigen::Index>(raw_dim));
    for (std::size_t k = 0; k < batch.size(); ++k) {
      depth_x.middleRows(static_cast<Eigen::Index>(k) * depth_rows, depth_rows) =
          corpus.depth.middleRows(static_cast<Eigen::Index>(batch[k]) * depth_rows, depth_rows);
    }
    const Matrix snippet_x = gather_rows(corpus.snippets, batch);
    const Projected depth_p = project(image_head, depth_x);
    const Projected snippet_p = project(text_head, snippet_x);
    Matrix grad_depth_unit = Matrix::Zero(depth_p.unit.rows(), proj);
    Matrix grad_snippet_unit = Matrix::Zero(b, proj);

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const SoftTarget target =
          gaussian_soft_target(corpus.grid, corpus.depth_index[batch[k]], cfg.soft_target_sigma);
      const LocalizationLossResult r =
          localization_loss(depth_p.unit.middleRows(kk * depth_rows, depth_rows),
                            snippet_p.unit.row(kk).transpose(), target, cfg.loc_tau);
      sum += r.loss;
      if (want_grad) {
        grad_depth_unit.middleRows(kk * depth_rows, depth_rows) =
            cfg.weights.beta * inv_b * r.grad_depth;
        grad_snippet_unit.row(kk) = cfg.weights.beta * inv_b * r.grad_snippet.transpose();
      }
    }
    out.loc = sum * inv_b;
    check_finite(out.loc, "localization", batch);
    if (want_grad) {
      accumulate_head_grad(out.grad, v.image_weight(), v.image_bias(), image_head, depth_x,
                           depth_p, grad_depth_unit);
      accumulate_head_grad(out.grad, v.text_weight(), v.text_bias(), text_head, snippet_x,
                           snippet_p, grad_snippet_unit);
    }
  }

  if (want_grad && (cfg.enable_global || cfg.enable_prompt)) {
    accumulate_head_grad(out.grad, v.image_weight(), v.image_bias(), image_head, image_x, image_p,
                         grad_image_unit);
  }

  out.total = combined_loss(out.global, out.prompt, out.loc, cfg.weights);
  return out;
}

std::int64_t steps_per_epoch(const TrainConfig& cfg, std::size_t train_size) {
  const std::size_t batches = cfg.enable_global
                                  ? train_size / cfg.batch_size
                                  : (train_size + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t steps = batches / cfg.accumulation_steps;
  if (steps == 0) {
    throw Error(ErrorCode::kInvalidConfig,
                "training split of " + std::to_string(train_size) +
                    " volumes yields no optimizer step at batch_size " +
                    std::to_string(cfg.batch_size) + " x accumulation " +
                    std::to_string(cfg.accumulation_steps));
  }
  return static_cast<std::int64_t>(steps);
}

ScheduleConfig make_schedule(const TrainConfig& cfg, std::int64_t per_epoch) {
  ScheduleConfig s;
  s.peak_lr = cfg.peak_lr;
  s.final_lr = cfg.final_lr;
  s.total_steps = cfg.total_steps > 0 ? cfg.total_steps : cfg.epochs * per_epoch;
  // One epoch of warmup by default, shortened when the run is a single epoch.
  s.warmup_steps = cfg.warmup_steps > 0 ? cfg.warmup_steps : std::min(per_epoch, s.total_steps - 1);
  s.validate();
  return s;
}

TrainState train(const Corpus& corpus, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  corpus.validate();
  const std::vector<std::size_t> train_ids = corpus.indices(Split::kTrain);
  const std::int64_t per_epoch = steps_per_epoch(cfg, train_ids.size());
  const ScheduleConfig schedule = make_schedule(cfg, per_epoch);
  const std::size_t raw = corpus.raw_dim();

  TrainState state = init_state(raw, cfg.proj_dim, cfg);
  Vector params = pack_parameters(state);

  if (cfg.enable_prompt) {
    std::size_t excluded = 0;
    for (const auto& c : corpus.counts) excluded += c.alpha_defined() ? 0 : 1;
    if (excluded > 0) {
      state.notes.push_back(std::to_string(excluded) +
                            " finding(s) have no training negatives and are left out of the "
                            "prompt loss");
    }
    if (corpus.num_findings() > cfg.max_prompt_findings) {
      state.notes.push_back("prompt loss subsamples " + std::to_string(cfg.max_prompt_findings) +
                            " of " + std::to_string(corpus.num_findings()) +
                            " findings per volume");
    }
  }

  const std::size_t micro_batches =
      static_cast<std::size_t>(per_epoch) * cfg.accumulation_steps;
  std::vector<std::size_t> order = train_ids;
  Vector grad_sum = Vector::Zero(params.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch));
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[uniform_index(shuffle_rng, k)]);
    }

    double sum_global = 0.0, sum_prompt = 0.0, sum_loc = 0.0;
    double last_lr = 0.0;
    std::size_t done = 0;
    for (std::size_t mb = 0; mb < micro_batches; ++mb) {
      if (state.step >= schedule.total_steps) break;
      ++done;
      const std::size_t begin = mb * cfg.batch_size;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const std::uint64_t draw_seed =
          derive_seed(cfg.seed, "draws", static_cast<std::uint64_t>(epoch) * 1000003ULL + mb);

      BatchLoss loss;
      try {
        loss = batch_objective(params, raw, cfg.proj_dim, corpus, batch, cfg, draw_seed, true);
      } catch (const Error& e) {
        std::string what = e.detail();
        if (e.code() == ErrorCode::kNonFiniteValue || e.code() == ErrorCode::kZeroVector) {
          // Bad inputs surface in the forward pass before any loss exists.
          what += " in batch " + describe_batch(batch);
        } else if (e.code() != ErrorCode::kNonFiniteLoss) {
          throw;
        }
        throw Error(ErrorCode::kNonFiniteLoss, what + " at epoch " + std::to_string(epoch) +
                                                   ", step " + std::to_string(state.step + 1));
      }
      sum_global += loss.global;
      sum_prompt += loss.prompt;
      sum_loc += loss.loc;
      grad_sum += loss.grad;

      if ((mb + 1) % cfg.accumulation_steps == 0) {
        grad_sum /= static_cast<double>(cfg.accumulation_steps);
        last_lr = lr_at(schedule, state.step + 1);
        adamw_step(state.optimizer, std::span<double>(params.data(), params.size()),
                   std::span<const double>(grad_sum.data(), grad_sum.size()), last_lr);
        ++state.step;
        grad_sum.setZero();
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = last_lr;
    if (done == 0) break;
    const double inv = 1.0 / static_cast<double>(done);
    log.loss_global = sum_global * inv;
    log.loss_prompt = sum_prompt * inv;
    log.loss_loc = sum_loc * inv;
    log.loss_total = combined_loss(log.loss_global, log.loss_prompt, log.loss_loc, cfg.weights);
    state.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  unpack_parameters(state, params);
  return state;
}

namespace {

Matrix project_unit(const ProjectionHead& head, const Matrix& x) {
  return l2_normalize_rows(head_forward(head, x));
}

double mean_indicator(std::span<const double> hits) { return 100.0 * mean_of(hits); }

}  // namespace

EvalResult evaluate_checkpoint(const TrainState& state, const Corpus& corpus,
                               const EvalProtocols& protocols) {
  corpus.validate();
  protocols.bootstrap.validate();
  if (state.image_head.in_dim() != corpus.raw_dim()) {
    throw Error(ErrorCode::kConfigMismatch,
                "checkpoint input dim " + std::to_string(state.image_head.in_dim()) +
                    " vs corpus dim " + std::to_string(corpus.raw_dim()));
  }
  const BootstrapConfig& boot = protocols.bootstrap;
  const std::vector<std::size_t> ids = corpus.indices(protocols.split);
  if (ids.empty()) {
    throw Error(ErrorCode::kEmptyTask,
                std::string("split '") + split_name(protocols.split) + "' is empty");
  }
  const Matrix split_images = project_unit(state.image_head, gather_rows(corpus.images, ids));
  const Matrix split_texts = project_unit(state.text_head, gather_rows(corpus.texts, ids));

  EvalResult out;

  if (protocols.retrieval) {
    const std::size_t pool = std::min(protocols.retrieval_pool, corpus.size());
    const std::size_t q = std::min(ids.size(), pool);
    std::vector<std::size_t> pool_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(q));
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus.splits[i] != protocols.split) others.push_back(i);
    }
    Rng fill_rng = make_rng(boot.seed, "retrieval_pool");
    for (std::size_t k = 0; k < pool - q; ++k) {
      std::swap(others[k], others[k + uniform_index(fill_rng, others.size() - k)]);
      pool_ids.push_back(others[k]);
    }
    RetrievalTask task;
    task.queries = split_texts.topRows(static_cast<Eigen::Index>(q));
    task.candidates = project_unit(state.image_head, gather_rows(corpus.images, pool_ids));
    task.designated.resize(q);
    std::iota(task.designated.begin(), task.designated.end(), std::size_t{0});
    out.retrieval_queries = q;
    out.retrieval_pool = pool;

    const std::vector<std::size_t> ranks = designated_ranks(task);
    for (std::size_t k : protocols.recall_k) {
      std::vector<double> hits(q);
      for (std::size_t i = 0; i < q; ++i) hits[i] = ranks[i] < k ? 1.0 : 0.0;
      out.report.add("R@" + std::to_string(k),
                     bootstrap_ci(std::span<const double>(hits), mean_indicator, boot), boot);
    }
    out.recall10_chance = chance_recall_interval(q, 10, pool, boot.level);
    out.report.add("R@10_chance", out.recall10_chance, boot);
  }

  if (protocols.map && ids.size() >= 2) {
    std::vector<LabelSet> labels(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      for (std::size_t f = 0; f < corpus.num_findings(); ++f) {
        if (corpus.labels[ids[k]][f] == Label::kPositive) labels[k].insert(static_cast<int>(f));
      }
    }
    const Matrix sim = split_images * split_images.transpose();
    std::vector<double> ap = average_precision_at_5(sim, labels, protocols.map_rule);
    out.report.add("MAP@5",
                   bootstrap_ci(std::span<const double>(ap), mean_indicator, boot), boot);
  }

  if (protocols.classification) {
    const std::size_t nf = corpus.num_findings();
    const Matrix prompts = project_unit(state.text_head, corpus.prompt_embeddings);
    const double tau = 1.0 / state.siglip.temperature;
    // scores[f][k] for volume k of the split
    std::vector<std::vector<double>> scores(nf, std::vector<double>(ids.size()));
    for (std::size_t f = 0; f < nf; ++f) {
      std::vector<Vector> pos, neg;
      for (std::size_t v = 0; v < kVariantsPerPolarity; ++v) {
        pos.push_back(prompts.row(corpus.prompt_row(f, Polarity::kPositive, v)).transpose());
        neg.push_back(prompts.row(corpus.prompt_row(f, Polarity::kNegative, v)).transpose());
      }
      const Vector p = averaged_prompt_embedding(pos);
      const Vector n = averaged_prompt_embedding(neg);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        scores[f][k] = classify_finding(
            split_images.row(static_cast<Eigen::Index>(k)).transpose(), p, n, tau);
      }
    }

    auto finding_auc = [&](std::size_t f, std::span<const std::size_t> sample) {
      std::vector<double> s;
      std::vector<int> y;
      for (std::size_t k : sample) {
        const Label l = corpus.labels[ids[k]][f];
        if (l == Label::kAbsent) continue;
        s.push_back(scores[f][k]);
        y.push_back(l == Label::kPositive ? 1 : 0);
      }
      return roc_auc(s, y);
    };
    auto macro_auc = [&](std::span<const std::size_t> sample) {
      double sum = 0.0;
      std::size_t defined = 0;
      for (std::size_t f = 0; f < nf; ++f) {
        try {
          sum += finding_auc(f, sample);
          ++defined;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDegenerateLabels) throw;
        }
      }
      if (defined == 0) throw Error(ErrorCode::kDegenerateLabels, "no finding has both classes");
      return sum / static_cast<double>(defined);
    };

    std::vector<std::size_t> positions(ids.size());
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    const std::span<const std::size_t> all(positions);
    out.per_finding_auc.assign(nf, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t f = 0; f < nf; ++f) {
      try {
        out.per_finding_auc[f] = finding_auc(f, all);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerateLabels) throw;
      }
    }
    try {
      out.report.add("AUC_macro", bootstrap_ci(all, macro_auc, boot), boot);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateLabels) throw;
    }
    for (std::size_t f = 0; f < nf; ++f) {
      if (std::isnan(out.per_finding_auc[f])) continue;
      auto metric = [&, f](std::span<const std::size_t> sample) { return finding_auc(f, sample); };
      out.report.add("AUC/" + corpus.findings[f], bootstrap_ci(all, metric, boot), boot);
    }
  }

  if (protocols.merlin && ids.size() >= protocols.merlin_pool) {
    std::vector<double> trials = merlin_pooled_r1_trials(
        split_texts, split_images, protocols.merlin_pool, protocols.merlin_trials, boot.seed);
    auto mean = [](std::span<const double> xs) { return mean_of(xs); };
    out.report.add("Merlin_R@1",
                   bootstrap_ci(std::span<const double>(trials), mean, boot), boot);
  }

  if (protocols.localization) {
    std::vector<LocalizationSample> samples;
    std::vector<double> lengths;
    for (std::size_t i : ids) {
      const Matrix depth = project_unit(state.image_head, corpus.depth_block(i));
      const Matrix snippet =
          project_unit(state.text_head, corpus.snippets.row(static_cast<Eigen::Index>(i)));
      samples.push_back({predict_depth(depth, snippet.row(0).transpose(), corpus.grid),
                         corpus.snippet_mm[i]});
      lengths.push_back(corpus.axial_length_mm[i]);
    }
    const std::span<const LocalizationSample> all(samples);
    auto field = [](double LocalizationMetrics::*member) {
      return [member](std::span<const LocalizationSample> s) {
        return localization_metrics(s).*member;
      };
    };
    out.report.add("loc_MAE_mm", bootstrap_ci(all, field(&LocalizationMetrics::mae_mm), boot),
                   boot);
    out.report.add("loc_<6mm", bootstrap_ci(all, field(&LocalizationMetrics::within_6mm), boot),
                   boot);
    out.report.add("loc_<18mm",
                   bootstrap_ci(all, field(&LocalizationMetrics::within_18mm), boot), boot);
    out.report.add("loc_<30mm",
                   bootstrap_ci(all, field(&LocalizationMetrics::within_30mm), boot), boot);

    const std::pair<const char*, BaselineStrategy> baselines[] = {
        {"baseline_middle_MAE_mm", BaselineStrategy::kMiddle},
        {"baseline_random_MAE_mm", BaselineStrategy::kRandom}};
    for (const auto& [name, strategy] : baselines) {
      Rng rng = make_rng(boot.seed, "baseline", static_cast<std::uint64_t>(strategy));
      const std::vector<double> pred = baseline_predict(strategy, lengths, rng);
      std::vector<LocalizationSample> b;
      for (std::size_t k = 0; k < pred.size(); ++k) b.push_back({pred[k], samples[k].true_mm});
      out.report.add(name,
                     bootstrap_ci(std::span<const LocalizationSample>(b),
                                  field(&LocalizationMetrics::mae_mm), boot),
                     boot);
    }
  }

  return out;
}

}  // namespace slicealign
