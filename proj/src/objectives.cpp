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

#include "slicealign/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "slicealign/error.hpp"

namespace slicealign {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

void require_positive_tau(double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTau, "tau must be > 0, got " + std::to_string(tau));
  }
}

}  // namespace

SigLipResult siglip_loss(const Matrix& image, const Matrix& text, const SigLipParams& params) {
  if (image.rows() == 0) throw Error(ErrorCode::kEmptyBatch, "siglip_loss on an empty batch");
  if (image.rows() != text.rows() || image.cols() != text.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "image " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                    " vs text " + std::to_string(text.rows()) + "x" +
                    std::to_string(text.cols()));
  }
  if (!(params.temperature > 0.0)) {
    throw Error(ErrorCode::kNonPositiveTau, "SigLIP temperature must be > 0");
  }
  const Eigen::Index n = image.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix sims = image * text.transpose();

  SigLipResult r;
  Matrix grad_logits(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double sign = (i == j) ? 1.0 : -1.0;
      const double z = sign * (params.temperature * sims(i, j) + params.bias);
      r.loss -= log_sigmoid(z);
      grad_logits(i, j) = -inv_n * sign * sigmoid(-z);
    }
  }
  r.loss *= inv_n;
  r.grad_temperature = (grad_logits.array() * sims.array()).sum();
  r.grad_bias = grad_logits.sum();
  const Matrix grad_sims = params.temperature * grad_logits;
  r.grad_image = grad_sims * text;
  r.grad_text = grad_sims.transpose() * image;
  return r;
}

double alpha_weight(std::int64_t n_pos, std::int64_t n_neg) {
  if (n_neg <= 0 || n_pos < 0) {
    throw Error(ErrorCode::kDegenerateCounts,
                "alpha undefined for n_pos=" + std::to_string(n_pos) +
                    ", n_neg=" + std::to_string(n_neg));
  }
  return std::min(static_cast<double>(n_pos) / static_cast<double>(n_neg), kAlphaClamp);
}

PromptLossResult prompt_loss(const PromptLossInputs& in) {
  if (in.findings.empty()) {
    throw Error(ErrorCode::kEmptyQuestionSet, "prompt_loss needs at least one finding");
  }
  require_positive_tau(in.tau);
  const Eigen::Index dim = in.volume.size();
  const double inv_m = 1.0 / static_cast<double>(in.findings.size());

  PromptLossResult r;
  r.grad_volume = Vector::Zero(dim);
  r.grad_positive.reserve(in.findings.size());
  r.grad_negative.reserve(in.findings.size());
  for (const PromptFinding& f : in.findings) {
    if (f.positive.size() != dim || f.negative.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "prompt embedding dim differs from volume dim");
    }
    const double x = (in.volume.dot(f.positive) - in.volume.dot(f.negative)) / in.tau;
    double term = 0.0;
    double dterm_dx = 0.0;
    if (f.label == 1) {
      const double alpha = alpha_weight(f.n_pos, f.n_neg);
      term = -alpha * log_sigmoid(x);
      dterm_dx = -alpha * sigmoid(-x);
    } else {
      term = -log_sigmoid(-x);
      dterm_dx = sigmoid(x);
    }
    r.loss += f.weight * term;
    const double dx = inv_m * f.weight * dterm_dx / in.tau;
    r.grad_volume += dx * (f.positive - f.negative);
    r.grad_positive.push_back(dx * in.volume);
    r.grad_negative.push_back(-dx * in.volume);
  }
  r.loss *= inv_m;
  return r;
}

void DepthGrid::validate() const {
  if (count < 1) throw Error(ErrorCode::kEmptyGrid, "depth grid needs at least one position");
  if (!(pitch_mm > 0.0)) throw Error(ErrorCode::kInvalidConfig, "pitch_mm must be > 0");
}

SoftTarget gaussian_soft_target(const DepthGrid& grid, int d_star, double sigma) {
  grid.validate();
  if (d_star < 1 || d_star > grid.count) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "d_star " + std::to_string(d_star) + " outside [1, " +
                    std::to_string(grid.count) + "]");
  }
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidConfig, "sigma must be > 0");

  const int support = static_cast<int>(std::ceil(3.0 * sigma));
  SoftTarget target{Vector::Zero(grid.count)};
  const int lo = std::max(1, d_star - support);
  const int hi = std::min(grid.count, d_star + support);
  for (int d = lo; d <= hi; ++d) {
    const double k = d - d_star;
    target.probs[d - 1] = std::exp(-k * k / (2.0 * sigma * sigma));
  }
  target.probs /= target.probs.sum();
  return target;
}

LocalizationLossResult localization_loss(const Matrix& depth, const Vector& snippet,
                                         const SoftTarget& target, double tau) {
  require_positive_tau(tau);
  if (depth.rows() == 0) throw Error(ErrorCode::kEmptyGrid, "no depth positions");
  if (depth.cols() != snippet.size() || depth.rows() != target.probs.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "depth " + std::to_string(depth.rows()) + "x" + std::to_string(depth.cols()) +
                    ", snippet " + std::to_string(snippet.size()) + ", target " +
                    std::to_string(target.probs.size()));
  }
  const Vector logits = depth * snippet / tau;
  const double max_logit = logits.maxCoeff();
  const double log_norm = max_logit + std::log((logits.array() - max_logit).exp().sum());

  LocalizationLossResult r;
  const Vector log_probs = logits.array() - log_norm;
  r.loss = -target.probs.dot(log_probs);

  const double target_mass = target.probs.sum();
  const Vector grad_logits = log_probs.array().exp() * target_mass - target.probs.array();
  r.grad_depth = grad_logits * snippet.transpose() / tau;
  r.grad_snippet = depth.transpose() * grad_logits / tau;
  return r;
}

int predict_depth_index(const Matrix& depth, const Vector& snippet) {
  if (depth.rows() == 0) throw Error(ErrorCode::kEmptyGrid, "no depth positions");
  if (depth.cols() != snippet.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "depth feature dim differs from snippet dim");
  }
  int best = 0;
  double best_score = depth.row(0).dot(snippet);
  for (Eigen::Index d = 1; d < depth.rows(); ++d) {
    const double s = depth.row(d).dot(snippet);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(d);
    }
  }
  return best + 1;
}

double predict_depth(const Matrix& depth, const Vector& snippet, const DepthGrid& grid) {
  if (grid.count < 1 || depth.rows() == 0) throw Error(ErrorCode::kEmptyGrid, "empty grid");
  if (depth.rows() != grid.count) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(depth.rows()) + " depth rows for a grid of " +
                    std::to_string(grid.count));
  }
  return grid.center_mm(predict_depth_index(depth, snippet));
}

GradCheckReport finite_difference_check(const LossFunction& loss, const Vector& params,
                                         double h) {
  Vector analytic(params.size());
  const double base = loss(params, &analytic);
  if (!std::isfinite(base)) throw Error(ErrorCode::kNonFiniteLoss, "loss at params is not finite");
  if (analytic.size() != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "analytic gradient has the wrong size");
  }

  Vector numeric(params.size());
  Vector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    // Divide by the step actually taken after rounding, not by 2h.
    const double hi = saved + h;
    const double lo = saved - h;
    probe[i] = hi;
    const double up = loss(probe, nullptr);
    probe[i] = lo;
    const double down = loss(probe, nullptr);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::kNonFiniteLoss,
                  "loss not finite when perturbing coordinate " + std::to_string(i));
    }
    numeric[i] = (up - down) / (hi - lo);
  }

  GradCheckReport report;
  const double floor = std::max(1e-10, 1e-4 * numeric.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(std::abs(numeric[i]), floor);
    if (err > report.max_rel_error || i == 0) {
      report.max_rel_error = err;
      report.worst_index = static_cast<std::size_t>(i);
      report.analytic = analytic[i];
      report.numeric = numeric[i];
    }
  }
  return report;
}

}  // namespace slicealign
