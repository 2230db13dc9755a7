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

#include <optional>
#include <string>
#include <string_view>

#include "medsafe/domain.hpp"
#include "medsafe/errors.hpp"

namespace medsafe {

/// Decoding parameters forwarded verbatim to remote models.
struct SamplingConfig {
  double temperature = 0.7;
  double top_p = 0.9;
  int max_tokens = 512;

  void validate() const {
    if (!(temperature >= 0.0)) throw RangeError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw RangeError("top_p must be in (0, 1]");
    if (max_tokens < 1) throw RangeError("max_tokens must be >= 1");
  }

  friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

enum class EvaluatorRole { Ethics, Risk };

inline std::string_view to_string(EvaluatorRole r) noexcept {
  return r == EvaluatorRole::Ethics ? "ethics" : "risk";
}

/// What an evaluator returns. A role-faithful evaluator fills exactly the
/// field for its role; backends that score both dimensions may fill both.
struct Assessment {
  std::optional<EthicsAssessment> ethics;
  std::optional<RiskAssessment> risk;
};

/// Produces and revises candidate responses. Implementations must be safe
/// to call from several workers at once.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual ResponseDraft generate(const Query& query) = 0;
  /// Must return a draft whose iteration is `previous.iteration() + 1`.
  virtual ResponseDraft refine(const ResponseDraft& previous, const FeedbackPlan& plan,
                               const Query& query) = 0;
};

/// Judges a response along one dimension. Must be thread-safe.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  [[nodiscard]] virtual EvaluatorRole role() const noexcept = 0;
  virtual Assessment assess(const ResponseDraft& response, const Query& query) = 0;
};

/// Offline generator that emits placeholder text; used with the scripted
/// and simulated evaluators where response content is never inspected.
class PlaceholderGenerator final : public Generator {
 public:
  ResponseDraft generate(const Query& query) override {
    return ResponseDraft(query.id(), 1, "draft 1 for " + query.id());
  }
  ResponseDraft refine(const ResponseDraft& previous, const FeedbackPlan& plan,
                       const Query& query) override {
    const int next = previous.iteration() + 1;
    return ResponseDraft(query.id(), next,
                         "draft " + std::to_string(next) + " for " + query.id() + " (" +
                             std::to_string(plan.directives().size()) + " directives applied)");
  }
};

}  // namespace medsafe
