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

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slicealign/rng.hpp"

namespace slicealign {

// N x E, one embedding per row. Training math is 64-bit throughout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using EmbeddingMatrix = Matrix;

inline constexpr double kNormEpsilon = 1e-12;

// Throws kNonFiniteValue naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);
void require_finite(const Vector& v, const char* what);

Vector l2_normalize(const Vector& v);
Matrix l2_normalize_rows(const Matrix& m);

// Backward pass of row-wise normalization y = x / |x|.
Matrix l2_normalize_rows_backward(const Matrix& inputs, const Matrix& outputs,
                                  const Matrix& grad_outputs);

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_sim(const Vector& u, const Vector& v);

// Single affine layer: row i of the output is weight^T x_i + bias.
struct ProjectionHead {
  Matrix weight;  // in_dim x out_dim
  Vector bias;    // out_dim

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.cols()); }

  // Gaussian weights with std 1/sqrt(in_dim), zero bias.
  static ProjectionHead random(std::size_t in_dim, std::size_t out_dim, Rng& rng);
  static ProjectionHead identity(std::size_t dim);
};

Matrix head_forward(const ProjectionHead& head, const Matrix& x);

struct HeadGradients {
  Matrix weight;
  Vector bias;
  Matrix input;
};

HeadGradients head_backward(const ProjectionHead& head, const Matrix& x,
                            const Matrix& upstream);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(std::size_t num_params, AdamWConfig config);

  const AdamWConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  std::size_t size() const { return first_moment_.size(); }
  const std::vector<double>& first_moment() const { return first_moment_; }
  const std::vector<double>& second_moment() const { return second_moment_; }

 private:
  friend void adamw_step(OptimizerState&, std::span<double>, std::span<const double>,
                         double);

  AdamWConfig config_;
  std::vector<double> first_moment_;
  std::vector<double> second_moment_;
  std::int64_t step_ = 0;
};

// Decoupled weight decay: p <- p - lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
void adamw_step(OptimizerState& state, std::span<double> params,
                std::span<const double> grads, double lr);

struct ScheduleConfig {
  double peak_lr = 2e-4;
  double final_lr = 1e-6;
  std::int64_t warmup_steps = 1;
  std::int64_t total_steps = 2;

  void validate() const;
};

// Linear warmup from 0 to peak_lr, then cosine decay to final_lr.
double lr_at(const ScheduleConfig& schedule, std::int64_t step);

}  // namespace slicealign
