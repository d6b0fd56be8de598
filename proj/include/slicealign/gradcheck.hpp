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
#include <string>
#include <vector>

#include "slicealign/objectives.hpp"

namespace slicealign {

// Targets covered by the analytic-gradient self test.
enum class GradTarget { kSiglip, kPrompt, kLocalization, kHead, kTrainer };

const char* grad_target_name(GradTarget t);
const std::vector<GradTarget>& all_grad_targets();

struct GradCheckCase {
  GradTarget target = GradTarget::kSiglip;
  std::size_t trial = 0;
  std::string config;  // human-readable description of the random configuration
  GradCheckReport report;
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 100;
  double tolerance = 1e-4;
  std::vector<GradTarget> targets = all_grad_targets();
  // Test hook: perturbs one analytic gradient entry of this target by 1%.
  bool inject_fault = false;
  GradTarget fault_target = GradTarget::kSiglip;
};

// One finite-difference check per (target, trial); trial t of a target uses
// its own stream derived from (seed, target, t).
std::vector<GradCheckCase> run_gradient_suite(const GradSuiteOptions& options);

GradCheckCase run_gradient_case(GradTarget target, std::uint64_t seed, std::size_t trial,
                                bool inject_fault = false);

}  // namespace slicealign
