// Copyright 2026 The medsafe Authors
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

#include <string>

#include "medsafe/errors.hpp"

namespace medsafe {

inline constexpr int kMinAma = 0;
inline constexpr int kMaxAma = 9;
inline constexpr int kMinSra = 1;
inline constexpr int kMaxSra = 5;

/// Stopping-rule thresholds and iteration budget for the refinement loop.
///
/// Plain value so policies can be loaded from configuration. Call
/// `validate()` before use; every engine entry point does so.
struct ThresholdPolicy {
  int tau_ama = 2;
  int tau_sra = 2;
  int mandatory_refinement_ama = 6;
  int max_iterations = 5;

  void validate() const {
    if (tau_ama < kMinAma || tau_ama > kMaxAma) {
      throw RangeError("tau_ama must be in [0, 9], got " + std::to_string(tau_ama));
    }
    if (tau_sra < kMinSra || tau_sra > kMaxSra) {
      throw RangeError("tau_sra must be in [1, 5], got " + std::to_string(tau_sra));
    }
    if (mandatory_refinement_ama <= tau_ama || mandatory_refinement_ama > kMaxAma) {
      throw RangeError("mandatory_refinement_ama must be in (tau_ama, 9], got " +
                       std::to_string(mandatory_refinement_ama));
    }
    if (max_iterations < 1) {
      throw RangeError("max_iterations must be >= 1, got " + std::to_string(max_iterations));
    }
  }

  friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

}  // namespace medsafe
