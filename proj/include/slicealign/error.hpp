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

#include <stdexcept>
#include <string>

namespace slicealign {

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kNonFiniteGradient,
  kNonFiniteValue,
  kStepOutOfRange,
  kEmptyBatch,
  kEmptyQuestionSet,
  kNonPositiveTau,
  kDegenerateCounts,
  kIndexOutOfRange,
  kEmptyGrid,
  kNonFiniteLoss,
  kNoSentenceFound,
  kImageOutOfRange,
  kSeriesMismatch,
  kOutOfVolume,
  kInvalidPattern,
  kMissingPlaceholder,
  kUnknownFinding,
  kUnmappedClass,
  kInvalidPromptBank,
  kEmptyTask,
  kEmptyPool,
  kDegenerateLabels,
  kPoolTooSmall,
  kEmptyResults,
  kEmptySamples,
  kInvalidConfig,
  kConfigMismatch,
  kFormat,
  kIo,
};

const char* error_code_name(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI and the Python layer can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace slicealign
