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

#include "slicealign/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "slicealign/error.hpp"

namespace slicealign {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kNonFiniteValue, std::string(what) + " contains NaN or Inf");
  }
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw Error(ErrorCode::kNonFiniteValue, std::string(what) + " contains NaN or Inf");
  }
}

Vector l2_normalize(const Vector& v) {
  const double norm = v.norm();
  if (!std::isfinite(norm)) throw Error(ErrorCode::kNonFiniteValue, "cannot normalize a non-finite vector");
  if (!(norm > kNormEpsilon)) {
    throw Error(ErrorCode::kZeroVector, "cannot normalize a vector with norm " +
                                            std::to_string(norm));
  }
  return v / norm;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!std::isfinite(norm)) {
      throw Error(ErrorCode::kNonFiniteValue, "row " + std::to_string(i) + " is not finite");
    }
    if (!(norm > kNormEpsilon)) {
      throw Error(ErrorCode::kZeroVector, "row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

Matrix l2_normalize_rows_backward(const Matrix& inputs, const Matrix& outputs,
                                  const Matrix& grad_outputs) {
  if (inputs.rows() != outputs.rows() || inputs.cols() != outputs.cols() ||
      grad_outputs.rows() != outputs.rows() || grad_outputs.cols() != outputs.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "normalize backward shapes differ");
  }
  Matrix grad(inputs.rows(), inputs.cols());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const double norm = inputs.row(i).norm();
    const double radial = outputs.row(i).dot(grad_outputs.row(i));
    grad.row(i) = (grad_outputs.row(i) - radial * outputs.row(i)) / norm;
  }
  return grad;
}

double cosine_sim(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  return std::clamp(u.dot(v), -1.0, 1.0);
}

ProjectionHead ProjectionHead::random(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  ProjectionHead head;
  head.weight.resize(static_cast<Eigen::Index>(in_dim), static_cast<Eigen::Index>(out_dim));
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) {
    head.weight.data()[i] = scale * standard_normal(rng);
  }
  head.bias = Vector::Zero(static_cast<Eigen::Index>(out_dim));
  return head;
}

ProjectionHead ProjectionHead::identity(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return ProjectionHead{Matrix::Identity(n, n), Vector::Zero(n)};
}

Matrix head_forward(const ProjectionHead& head, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != head.in_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input dim " + std::to_string(x.cols()) + " but head expects " +
                    std::to_string(head.in_dim()));
  }
  Matrix out = x * head.weight;
  out.rowwise() += head.bias.transpose();
  return out;
}

HeadGradients head_backward(const ProjectionHead& head, const Matrix& x,
                            const Matrix& upstream) {
  if (static_cast<std::size_t>(x.cols()) != head.in_dim() ||
      static_cast<std::size_t>(upstream.cols()) != head.out_dim() ||
      x.rows() != upstream.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "head_backward shapes are inconsistent");
  }
  HeadGradients g;
  g.weight = x.transpose() * upstream;
  g.bias = upstream.colwise().sum().transpose();
  g.input = upstream * head.weight.transpose();
  return g;
}

OptimizerState::OptimizerState(std::size_t num_params, AdamWConfig config)
    : config_(config), first_moment_(num_params, 0.0), second_moment_(num_params, 0.0) {}

void adamw_step(OptimizerState& state, std::span<double> params,
                std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || params.size() != state.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "params " + std::to_string(params.size()) + ", grads " +
                    std::to_string(grads.size()) + ", state " +
                    std::to_string(state.size()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error(ErrorCode::kNonFiniteGradient,
                  "gradient entry " + std::to_string(i) + " is not finite");
    }
  }
  const AdamWConfig& c = state.config_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment_[i];
    double& v = state.second_moment_[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= lr * (c.weight_decay * params[i] + m_hat / (std::sqrt(v_hat) + c.eps));
  }
}

void ScheduleConfig::validate() const {
  if (!(warmup_steps > 0 && warmup_steps < total_steps)) {
    throw Error(ErrorCode::kInvalidConfig,
                "schedule needs 0 < warmup_steps < total_steps, got " +
                    std::to_string(warmup_steps) + " and " + std::to_string(total_steps));
  }
  if (!(final_lr <= peak_lr) || final_lr < 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "schedule needs 0 <= final_lr <= peak_lr");
  }
}

double lr_at(const ScheduleConfig& schedule, std::int64_t step) {
  if (step < 0 || step > schedule.total_steps) {
    throw Error(ErrorCode::kStepOutOfRange,
                "step " + std::to_string(step) + " outside [0, " +
                    std::to_string(schedule.total_steps) + "]");
  }
  if (step <= schedule.warmup_steps) {
    return schedule.peak_lr * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);
  }
  const double progress = static_cast<double>(step - schedule.warmup_steps) /
                          static_cast<double>(schedule.total_steps - schedule.warmup_steps);
  return schedule.final_lr + 0.5 * (schedule.peak_lr - schedule.final_lr) *
                                 (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace slicealign
