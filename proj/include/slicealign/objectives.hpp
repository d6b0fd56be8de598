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
#include <vector>

#include "slicealign/numeric.hpp"

namespace slicealign {

// Learnable scalars of the pairwise sigmoid loss.
struct SigLipParams {
  double temperature = 10.0;
  double bias = -10.0;
};

struct SigLipResult {
  double loss = 0.0;
  Matrix grad_image;
  Matrix grad_text;
  double grad_temperature = 0.0;
  double grad_bias = 0.0;
};

// loss = -(1/N) sum_{i,j} log sigmoid(s_ij * (t * <img_i, txt_j> + b)),
// s_ij = +1 on the diagonal and -1 elsewhere.
SigLipResult siglip_loss(const Matrix& image, const Matrix& text, const SigLipParams& params);

inline constexpr double kAlphaClamp = 20.0;

// min(n_pos / n_neg, 20). Throws kDegenerateCounts when n_neg == 0.
double alpha_weight(std::int64_t n_pos, std::int64_t n_neg);

struct PromptFinding {
  Vector positive;  // p+ (unit)
  Vector negative;  // p- (unit)
  int label = 0;    // y in {0, 1}
  double weight = 1.0;
  std::int64_t n_pos = 1;
  std::int64_t n_neg = 1;
};

struct PromptLossInputs {
  Vector volume;  // z (unit)
  std::vector<PromptFinding> findings;
  double tau = 0.1;
};

struct PromptLossResult {
  double loss = 0.0;
  Vector grad_volume;
  std::vector<Vector> grad_positive;
  std::vector<Vector> grad_negative;
};

// Class-weighted BCE on x_q = (<z,p+> - <z,p->) / tau, averaged over findings.
PromptLossResult prompt_loss(const PromptLossInputs& inputs);

// Axial discretization. Positions are 1-based; position d covers
// [origin + (d-1) * pitch, origin + d * pitch).
struct DepthGrid {
  int count = 1;
  double pitch_mm = 12.0;
  double origin_mm = 0.0;

  double center_mm(int d) const { return origin_mm + (d - 0.5) * pitch_mm; }
  double extent_mm() const { return count * pitch_mm; }
  void validate() const;
};

struct SoftTarget {
  Vector probs;
};

// One-hot at d_star smoothed by a Gaussian truncated at |k| <= ceil(3 sigma)
// and L1-normalized over the in-bounds positions.
SoftTarget gaussian_soft_target(const DepthGrid& grid, int d_star, double sigma = 2.0);

struct LocalizationLossResult {
  double loss = 0.0;
  Matrix grad_depth;
  Vector grad_snippet;
};

// Cross-entropy between softmax(<z_d, t> / tau) and the soft target.
LocalizationLossResult localization_loss(const Matrix& depth_features, const Vector& snippet,
                                         const SoftTarget& target, double tau = 0.1);

// 1-based argmax of <z_d, snippet>, ties to the smaller index.
int predict_depth_index(const Matrix& depth_features, const Vector& snippet);

// Center mm of the argmax position.
double predict_depth(const Matrix& depth_features, const Vector& snippet, const DepthGrid& grid);

struct LossWeights {
  double lambda = 8.0;
  double beta = 1.0;
};

inline double combined_loss(double global, double prompt, double loc, const LossWeights& w) {
  return global + w.lambda * prompt + w.beta * loc;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Returns the loss at params and, when grad is non-null, writes the analytic
// gradient into it.
using LossFunction = std::function<double(const Vector& params, Vector* grad)>;

// Central differences per coordinate against the analytic gradient. The
// per-coordinate error is |a - n| / max(|n|, floor) where floor is 1e-4 of the
// largest numeric gradient entry (and at least 1e-10), so coordinates that are
// negligible at the gradient's own scale do not dominate.
GradCheckReport finite_difference_check(const LossFunction& loss, const Vector& params,
                                         double h = 1e-5);

}  // namespace slicealign
