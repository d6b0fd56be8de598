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

#include "slicealign/gradcheck.hpp"

#include <sstream>

#include "slicealign/error.hpp"
#include "slicealign/rng.hpp"
#include "slicealign/synthetic.hpp"
#include "slicealign/trainer.hpp"

namespace slicealign {
namespace {

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + uniform_index(rng, hi - lo + 1);
}

double draw_uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Matrix random_unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return l2_normalize_rows(m);
}

Vector random_unit(Rng& rng, std::size_t dim) {
  return random_unit_rows(rng, 1, dim).row(0).transpose();
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflatten(const Vector& v, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data() + offset, rows, cols);
}

// The fault hook scales the first analytic entry, mimicking a dropped term.
void maybe_corrupt(Vector* grad, bool fault) {
  if (fault && grad != nullptr && grad->size() > 0) (*grad)[0] = (*grad)[0] * 1.01 + 1e-3;
}

GradCheckCase siglip_case(Rng& rng, bool fault) {
  const std::size_t n = draw_between(rng, 2, 6);
  const std::size_t e = draw_between(rng, 2, 8);
  const Matrix image = random_unit_rows(rng, n, e);
  const Matrix text = random_unit_rows(rng, n, e);
  const double t = draw_uniform(rng, 0.5, 20.0);
  const double b = draw_uniform(rng, -12.0, 2.0);
  const auto ne = static_cast<Eigen::Index>(n * e);

  Vector params(2 * ne + 2);
  params << flatten(image), flatten(text), t, b;
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(e);
  auto loss = [=](const Vector& p, Vector* grad) {
    const SigLipResult r = siglip_loss(unflatten(p, 0, rows, cols), unflatten(p, ne, rows, cols),
                                       SigLipParams{p[2 * ne], p[2 * ne + 1]});
    if (grad != nullptr) {
      grad->resize(p.size());
      *grad << flatten(r.grad_image), flatten(r.grad_text), r.grad_temperature, r.grad_bias;
      maybe_corrupt(grad, fault);
    }
    return r.loss;
  };
  GradCheckCase c;
  std::ostringstream os;
  os << "N=" << n << " E=" << e << " t=" << t << " b=" << b;
  c.config = os.str();
  c.report = finite_difference_check(loss, params);
  return c;
}

GradCheckCase prompt_case(Rng& rng, bool fault) {
  const std::size_t q = draw_between(rng, 1, 5);
  const std::size_t e = draw_between(rng, 2, 8);
  const double tau = draw_uniform(rng, 0.05, 1.0);
  const bool clamp = uniform01(rng) < 0.5;
  std::vector<PromptFinding> base(q);
  for (auto& f : base) {
    f.label = uniform01(rng) < 0.5 ? 1 : 0;
    f.weight = draw_uniform(rng, 0.5, 5.0);
    f.n_neg = static_cast<std::int64_t>(draw_between(rng, 1, 50));
    // Half the trials put every finding on the clamped side of alpha.
    f.n_pos = clamp ? f.n_neg * static_cast<std::int64_t>(draw_between(rng, 21, 60))
                    : static_cast<std::int64_t>(draw_between(rng, 1, 100));
  }
  Vector params((2 * q + 1) * e);
  params << random_unit(rng, e), flatten(random_unit_rows(rng, 2 * q, e));
  const auto ed = static_cast<Eigen::Index>(e);

  auto loss = [=](const Vector& p, Vector* grad) {
    PromptLossInputs in;
    in.volume = p.head(ed);
    in.tau = tau;
    in.findings = base;
    for (std::size_t k = 0; k < q; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      in.findings[k].positive = p.segment((1 + 2 * kk) * ed, ed);
      in.findings[k].negative = p.segment((2 + 2 * kk) * ed, ed);
    }
    const PromptLossResult r = prompt_loss(in);
    if (grad != nullptr) {
      grad->resize(p.size());
      grad->head(ed) = r.grad_volume;
      for (std::size_t k = 0; k < q; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        grad->segment((1 + 2 * kk) * ed, ed) = r.grad_positive[k];
        grad->segment((2 + 2 * kk) * ed, ed) = r.grad_negative[k];
      }
      maybe_corrupt(grad, fault);
    }
    return r.loss;
  };
  GradCheckCase c;
  std::ostringstream os;
  os << "Q=" << q << " E=" << e << " tau=" << tau << (clamp ? " alpha clamped" : " alpha free");
  c.config = os.str();
  c.report = finite_difference_check(loss, params);
  return c;
}

GradCheckCase localization_case(Rng& rng, bool fault) {
  const int d = static_cast<int>(draw_between(rng, 1, 12));
  const std::size_t e = draw_between(rng, 2, 8);
  const double tau = draw_uniform(rng, 0.05, 1.0);
  const int d_star = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(d)));
  const double sigma = draw_uniform(rng, 0.5, 3.0);
  DepthGrid grid;
  grid.count = d;
  const SoftTarget target = gaussian_soft_target(grid, d_star, sigma);
  const auto rows = static_cast<Eigen::Index>(d);
  const auto cols = static_cast<Eigen::Index>(e);

  Vector params(rows * cols + cols);
  params << flatten(random_unit_rows(rng, static_cast<std::size_t>(d), e)), random_unit(rng, e);
  auto loss = [=](const Vector& p, Vector* grad) {
    const LocalizationLossResult r =
        localization_loss(unflatten(p, 0, rows, cols), p.tail(cols), target, tau);
    if (grad != nullptr) {
      grad->resize(p.size());
      *grad << flatten(r.grad_depth), r.grad_snippet;
      maybe_corrupt(grad, fault);
    }
    return r.loss;
  };
  GradCheckCase c;
  std::ostringstream os;
  os << "D=" << d << " d*=" << d_star << " E=" << e << " tau=" << tau << " sigma=" << sigma;
  c.config = os.str();
  c.report = finite_difference_check(loss, params);
  return c;
}

// Head followed by row normalization, read out by a fixed random linear functional.
GradCheckCase head_case(Rng& rng, bool fault) {
  const std::size_t n = draw_between(rng, 1, 5);
  const std::size_t in = draw_between(rng, 2, 8);
  const std::size_t out = draw_between(rng, 2, 6);
  const Matrix x = random_unit_rows(rng, n, in);
  Matrix readout(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  for (Eigen::Index i = 0; i < readout.size(); ++i) readout.data()[i] = standard_normal(rng);
  const ProjectionHead init = ProjectionHead::random(in, out, rng);
  const auto wi = static_cast<Eigen::Index>(in);
  const auto wo = static_cast<Eigen::Index>(out);

  Vector params(wi * wo + wo);
  Vector bias(wo);
  for (Eigen::Index k = 0; k < wo; ++k) bias[k] = 0.1 * standard_normal(rng);
  params << flatten(init.weight), bias;
  auto loss = [=](const Vector& p, Vector* grad) {
    ProjectionHead head;
    head.weight = unflatten(p, 0, wi, wo);
    head.bias = p.tail(wo);
    const Matrix pre = head_forward(head, x);
    const Matrix unit = l2_normalize_rows(pre);
    const double value = (unit.array() * readout.array()).sum();
    if (grad != nullptr) {
      const HeadGradients g =
          head_backward(head, x, l2_normalize_rows_backward(pre, unit, readout));
      grad->resize(p.size());
      *grad << flatten(g.weight), g.bias;
      maybe_corrupt(grad, fault);
    }
    return value;
  };
  GradCheckCase c;
  std::ostringstream os;
  os << "N=" << n << " in=" << in << " out=" << out;
  c.config = os.str();
  c.report = finite_difference_check(loss, params);
  return c;
}

// The full combined objective on a tiny synthetic corpus.
GradCheckCase trainer_case(Rng& rng, bool fault) {
  SynthConfig sc;
  sc.n_pairs = 40;
  sc.raw_dim = draw_between(rng, 3, 6);
  sc.proj_dim = draw_between(rng, 2, 4);
  sc.n_findings = draw_between(rng, 1, 4);
  sc.depth_D = static_cast<int>(draw_between(rng, 2, 6));
  sc.seed = rng();
  const Corpus corpus = generate(sc);

  TrainConfig tc;
  tc.proj_dim = sc.proj_dim;
  tc.batch_size = draw_between(rng, 2, 5);
  tc.max_prompt_findings = draw_between(rng, 1, 4);
  tc.weights.lambda = draw_uniform(rng, 0.5, 8.0);
  tc.weights.beta = draw_uniform(rng, 0.5, 2.0);
  tc.init_temperature = draw_uniform(rng, 1.0, 10.0);
  tc.init_bias = draw_uniform(rng, -5.0, 1.0);
  tc.seed = rng();
  const TrainState state = init_state(sc.raw_dim, sc.proj_dim, tc);
  const Vector params = pack_parameters(state);

  std::vector<std::size_t> batch = corpus.indices(Split::kTrain);
  batch.resize(std::min(batch.size(), tc.batch_size));
  const std::uint64_t draw_seed = rng();
  // The prompt loss reads tau = 1/t as a constant, so the log-temperature
  // coordinate is held fixed here; the SigLIP case covers its gradient.
  const Eigen::Index lt = params.size() - 2;
  const double log_t = params[lt];
  auto expand = [lt, log_t](const Vector& r) {
    Vector full(r.size() + 1);
    full << r.head(lt), log_t, r.tail(r.size() - lt);
    return full;
  };
  Vector reduced(params.size() - 1);
  reduced << params.head(lt), params.tail(1);
  auto loss = [&, fault](const Vector& p, Vector* grad) {
    BatchLoss r = batch_objective(expand(p), sc.raw_dim, sc.proj_dim, corpus, batch, tc,
                                  draw_seed, grad != nullptr);
    if (grad != nullptr) {
      grad->resize(p.size());
      *grad << r.grad.head(lt), r.grad.tail(1);
      maybe_corrupt(grad, fault);
    }
    return r.total;
  };
  GradCheckCase c;
  std::ostringstream os;
  os << "raw=" << sc.raw_dim << " proj=" << sc.proj_dim << " F=" << sc.n_findings
     << " D=" << sc.depth_D << " B=" << batch.size() << " lambda=" << tc.weights.lambda
     << " beta=" << tc.weights.beta;
  c.config = os.str();
  c.report = finite_difference_check(loss, reduced);
  return c;
}

}  // namespace

const char* grad_target_name(GradTarget t) {
  switch (t) {
    case GradTarget::kSiglip: return "siglip_loss";
    case GradTarget::kPrompt: return "prompt_loss";
    case GradTarget::kLocalization: return "localization_loss";
    case GradTarget::kHead: return "head_backward";
    case GradTarget::kTrainer: return "batch_objective";
  }
  return "unknown";
}

const std::vector<GradTarget>& all_grad_targets() {
  static const std::vector<GradTarget> targets = {GradTarget::kSiglip, GradTarget::kPrompt,
                                                  GradTarget::kLocalization, GradTarget::kHead,
                                                  GradTarget::kTrainer};
  return targets;
}

GradCheckCase run_gradient_case(GradTarget target, std::uint64_t seed, std::size_t trial,
                                bool inject_fault) {
  Rng rng = make_rng(derive_seed(seed, grad_target_name(target)), "gradcheck_trial", trial);
  GradCheckCase c;
  switch (target) {
    case GradTarget::kSiglip: c = siglip_case(rng, inject_fault); break;
    case GradTarget::kPrompt: c = prompt_case(rng, inject_fault); break;
    case GradTarget::kLocalization: c = localization_case(rng, inject_fault); break;
    case GradTarget::kHead: c = head_case(rng, inject_fault); break;
    case GradTarget::kTrainer: c = trainer_case(rng, inject_fault); break;
  }
  c.target = target;
  c.trial = trial;
  return c;
}

std::vector<GradCheckCase> run_gradient_suite(const GradSuiteOptions& options) {
  if (options.trials == 0) throw Error(ErrorCode::kInvalidConfig, "trials must be >= 1");
  std::vector<GradCheckCase> out;
  for (GradTarget target : options.targets) {
    const bool fault = options.inject_fault && options.fault_target == target;
    for (std::size_t t = 0; t < options.trials; ++t) {
      out.push_back(run_gradient_case(target, options.seed, t, fault));
    }
  }
  return out;
}

}  // namespace slicealign
