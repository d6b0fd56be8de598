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

#include "slicealign/error.hpp"

namespace slicealign {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyQuestionSet: return "EmptyQuestionSet";
    case ErrorCode::kNonPositiveTau: return "NonPositiveTau";
    case ErrorCode::kDegenerateCounts: return "DegenerateCounts";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kEmptyGrid: return "EmptyGrid";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNoSentenceFound: return "NoSentenceFound";
    case ErrorCode::kImageOutOfRange: return "ImageOutOfRange";
    case ErrorCode::kSeriesMismatch: return "SeriesMismatch";
    case ErrorCode::kOutOfVolume: return "OutOfVolume";
    case ErrorCode::kInvalidPattern: return "InvalidPattern";
    case ErrorCode::kMissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::kUnknownFinding: return "UnknownFinding";
    case ErrorCode::kUnmappedClass: return "UnmappedClass";
    case ErrorCode::kInvalidPromptBank: return "InvalidPromptBank";
    case ErrorCode::kEmptyTask: return "EmptyTask";
    case ErrorCode::kEmptyPool: return "EmptyPool";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kPoolTooSmall: return "PoolTooSmall";
    case ErrorCode::kEmptyResults: return "EmptyResults";
    case ErrorCode::kEmptySamples: return "EmptySamples";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kConfigMismatch: return "ConfigMismatch";
    case ErrorCode::kFormat: return "Format";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace slicealign
