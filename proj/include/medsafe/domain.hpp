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

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "medsafe/errors.hpp"
#include "medsafe/policy.hpp"

namespace medsafe {

/// One of the nine AMA Principles of Medical Ethics, indexed I..IX.
class AmaPrinciple {
 public:
  static constexpr int kCount = 9;

  static AmaPrinciple from_index(int index) {
    if (index < 1 || index > kCount) {
      throw RangeError("AMA principle index must be in [1, 9], got " + std::to_string(index));
    }
    return AmaPrinciple(index);
  }

  /// Accepts arabic ("4") or roman ("IV", case-insensitive) forms.
  static std::optional<AmaPrinciple> parse(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    if (std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      if (text.size() > 2) return std::nullopt;
      int value = 0;
      for (char c : text) value = value * 10 + (c - '0');
      if (value < 1 || value > kCount) return std::nullopt;
      return AmaPrinciple(value);
    }
    std::string upper(text);
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (int i = 1; i <= kCount; ++i) {
      if (upper == kRoman[i - 1]) return AmaPrinciple(i);
    }
    return std::nullopt;
  }

  static std::array<AmaPrinciple, kCount> all() {
    return {AmaPrinciple(1), AmaPrinciple(2), AmaPrinciple(3), AmaPrinciple(4), AmaPrinciple(5),
            AmaPrinciple(6), AmaPrinciple(7), AmaPrinciple(8), AmaPrinciple(9)};
  }

  [[nodiscard]] int index() const noexcept { return index_; }
  [[nodiscard]] std::string_view label() const noexcept { return kLabels[index_ - 1]; }
  [[nodiscard]] std::string_view roman() const noexcept { return kRoman[index_ - 1]; }
  /// Short column label used in report tables ("Competence", "Privacy", ...).
  [[nodiscard]] std::string_view short_label() const noexcept { return kShort[index_ - 1]; }

  friend auto operator<=>(const AmaPrinciple&, const AmaPrinciple&) = default;

 private:
  explicit constexpr AmaPrinciple(int index) : index_(index) {}

  static constexpr std::array<std::string_view, kCount> kLabels = {
      "Competence and Compassion",
      "Professionalism and Honesty",
      "Legal and Social Responsibility",
      "Patient Rights and Confidentiality",
      "Continued Study and Education",
      "Physician Autonomy",
      "Community and Public Health",
      "Patient Welfare",
      "Healthcare Access Equity",
  };
  static constexpr std::array<std::string_view, kCount> kRoman = {"I",  "II",  "III",  "IV", "V",
                                                                  "VI", "VII", "VIII", "IX"};
  static constexpr std::array<std::string_view, kCount> kShort = {
      "Competence", "Professionalism", "Legal",          "Privacy",      "Education",
      "Autonomy",   "Public Health",   "Patient Welfare", "Access Equity"};

  int index_;
};

enum class RiskCategory { Emergency, Diagnostic, Therapeutic, Preventive, Unlabeled };

inline constexpr std::array<RiskCategory, 4> kLabeledRiskCategories = {
    RiskCategory::Emergency, RiskCategory::Diagnostic, RiskCategory::Therapeutic,
    RiskCategory::Preventive};

inline std::string_view to_string(RiskCategory c) noexcept {
  switch (c) {
    case RiskCategory::Emergency: return "Emergency";
    case RiskCategory::Diagnostic: return "Diagnostic";
    case RiskCategory::Therapeutic: return "Therapeutic";
    case RiskCategory::Preventive: return "Preventive";
    case RiskCategory::Unlabeled: return "Unlabeled";
  }
  return "Unlabeled";
}

inline std::optional<RiskCategory> parse_risk_category(std::string_view text) {
  std::string lower(text);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "emergency") return RiskCategory::Emergency;
  if (lower == "diagnostic") return RiskCategory::Diagnostic;
  if (lower == "therapeutic") return RiskCategory::Therapeutic;
  if (lower == "preventive") return RiskCategory::Preventive;
  if (lower == "unlabeled" || lower.empty()) return RiskCategory::Unlabeled;
  return std::nullopt;
}

/// One benchmark prompt.
class Query {
 public:
  Query(std::string id, std::string text, AmaPrinciple principle,
        RiskCategory risk_category = RiskCategory::Unlabeled)
      : id_(std::move(id)), text_(std::move(text)), principle_(principle), risk_(risk_category) {
    if (id_.empty()) throw RangeError("query id must be nonempty");
    if (text_.empty()) throw RangeError("query '" + id_ + "' has empty text");
  }

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const std::string& text() const noexcept { return text_; }
  [[nodiscard]] AmaPrinciple principle() const noexcept { return principle_; }
  [[nodiscard]] RiskCategory risk_category() const noexcept { return risk_; }

  friend bool operator==(const Query&, const Query&) = default;

 private:
  std::string id_;
  std::string text_;
  AmaPrinciple principle_;
  RiskCategory risk_;
};

/// A candidate response at a given loop iteration (1-based).
class ResponseDraft {
 public:
  ResponseDraft(std::string query_id, int iteration, std::string text)
      : query_id_(std::move(query_id)), iteration_(iteration), text_(std::move(text)) {
    if (iteration_ < 1) {
      throw RangeError("response iteration must be >= 1, got " + std::to_string(iteration_));
    }
  }

  [[nodiscard]] const std::string& query_id() const noexcept { return query_id_; }
  [[nodiscard]] int iteration() const noexcept { return iteration_; }
  [[nodiscard]] const std::string& text() const noexcept { return text_; }

  friend bool operator==(const ResponseDraft&, const ResponseDraft&) = default;

 private:
  std::string query_id_;
  int iteration_;
  std::string text_;
};

namespace detail {

inline void check_ama(int ama) {
  if (ama < kMinAma || ama > kMaxAma) {
    throw RangeError("AMA score must be in [0, 9], got " + std::to_string(ama));
  }
}

inline void check_sra(int sra) {
  if (sra < kMinSra || sra > kMaxSra) {
    throw RangeError("SRA level must be in [1, 5], got " + std::to_string(sra));
  }
}

/// Order-preserving exact-match deduplication.
inline std::vector<std::string> dedup(std::vector<std::string> items) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& s : items) {
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Ethics evaluator verdict. The principle set may be empty when the
/// evaluator reports only a score.
class EthicsAssessment {
 public:
  explicit EthicsAssessment(int ama_score, std::vector<AmaPrinciple> violated = {},
                            std::vector<std::string> reasons = {})
      : ama_(ama_score), violated_(std::move(violated)), reasons_(std::move(reasons)) {
    detail::check_ama(ama_);
    std::sort(violated_.begin(), violated_.end());
    violated_.erase(std::unique(violated_.begin(), violated_.end()), violated_.end());
    if (static_cast<int>(violated_.size()) > ama_) {
      throw RangeError("ethics assessment lists " + std::to_string(violated_.size()) +
                       " violated principles but scores " + std::to_string(ama_));
    }
  }

  [[nodiscard]] int ama_score() const noexcept { return ama_; }
  [[nodiscard]] const std::vector<AmaPrinciple>& violated_principles() const noexcept {
    return violated_;
  }
  [[nodiscard]] const std::vector<std::string>& reasons() const noexcept { return reasons_; }

  friend bool operator==(const EthicsAssessment&, const EthicsAssessment&) = default;

 private:
  int ama_;
  std::vector<AmaPrinciple> violated_;
  std::vector<std::string> reasons_;
};

class RiskAssessment {
 public:
  explicit RiskAssessment(int sra_level, std::vector<std::string> reasons = {})
      : sra_(sra_level), reasons_(std::move(reasons)) {
    detail::check_sra(sra_);
  }

  [[nodiscard]] int sra_level() const noexcept { return sra_; }
  [[nodiscard]] const std::vector<std::string>& reasons() const noexcept { return reasons_; }

  friend bool operator==(const RiskAssessment&, const RiskAssessment&) = default;

 private:
  int sra_;
  std::vector<std::string> reasons_;
};

/// Merged per-iteration verdict inspected by the stopping rule.
class ConsensusRecord {
 public:
  ConsensusRecord(int ama_score, int sra_level, std::vector<std::string> reasons = {},
                  std::vector<AmaPrinciple> violated = {})
      : ama_(ama_score), sra_(sra_level), reasons_(detail::dedup(std::move(reasons))),
        violated_(std::move(violated)) {
    detail::check_ama(ama_);
    detail::check_sra(sra_);
    std::sort(violated_.begin(), violated_.end());
    violated_.erase(std::unique(violated_.begin(), violated_.end()), violated_.end());
  }

  [[nodiscard]] int ama_score() const noexcept { return ama_; }
  [[nodiscard]] int sra_level() const noexcept { return sra_; }
  [[nodiscard]] const std::vector<std::string>& reasons() const noexcept { return reasons_; }
  /// Principles reported by the ethics evaluator, if any.
  [[nodiscard]] const std::vector<AmaPrinciple>& violated_principles() const noexcept {
    return violated_;
  }

  friend bool operator==(const ConsensusRecord&, const ConsensusRecord&) = default;

 private:
  int ama_;
  int sra_;
  std::vector<std::string> reasons_;
  std::vector<AmaPrinciple> violated_;
};

inline ConsensusRecord make_consensus(int ama, int sra, std::vector<std::string> reasons = {}) {
  return ConsensusRecord(ama, sra, std::move(reasons));
}

inline bool passes_thresholds(const ConsensusRecord& c, const ThresholdPolicy& policy) noexcept {
  return c.ama_score() <= policy.tau_ama && c.sra_level() <= policy.tau_sra;
}

/// Revision directives derived from a failing consensus.
class FeedbackPlan {
 public:
  FeedbackPlan(std::vector<std::string> directives, ConsensusRecord source)
      : directives_(std::move(directives)), source_(std::move(source)) {}

  [[nodiscard]] const std::vector<std::string>& directives() const noexcept { return directives_; }
  [[nodiscard]] const ConsensusRecord& source_consensus() const noexcept { return source_; }

  friend bool operator==(const FeedbackPlan&, const FeedbackPlan&) = default;

 private:
  std::vector<std::string> directives_;
  ConsensusRecord source_;
};

enum class Decision { Stop, Refine };

inline std::string_view to_string(Decision d) noexcept {
  return d == Decision::Stop ? "Stop" : "Refine";
}

/// One turn of the refinement loop. The decision is derived from the
/// consensus and the policy at construction and cannot disagree with them.
class IterationTrace {
 public:
  IterationTrace(ResponseDraft response, EthicsAssessment ethics, RiskAssessment risk,
                 ConsensusRecord consensus, const ThresholdPolicy& policy,
                 std::optional<FeedbackPlan> feedback = std::nullopt)
      : response_(std::move(response)), ethics_(std::move(ethics)), risk_(std::move(risk)),
        consensus_(std::move(consensus)), feedback_(std::move(feedback)) {
    if (response_.iteration() > policy.max_iterations) {
      throw RangeError("trace iteration " + std::to_string(response_.iteration()) +
                       " exceeds iteration budget " + std::to_string(policy.max_iterations));
    }
    decision_ = passes_thresholds(consensus_, policy) ? Decision::Stop : Decision::Refine;
    mandatory_refinement_ = consensus_.ama_score() >= policy.mandatory_refinement_ama;
    if (feedback_ && decision_ == Decision::Stop) {
      throw PreconditionError("a passing iteration cannot carry a feedback plan");
    }
    if (decision_ == Decision::Refine && response_.iteration() < policy.max_iterations &&
        !feedback_) {
      throw PreconditionError("a refining iteration below the budget needs a feedback plan");
    }
  }

  [[nodiscard]] int iteration() const noexcept { return response_.iteration(); }
  [[nodiscard]] const ResponseDraft& response() const noexcept { return response_; }
  [[nodiscard]] const EthicsAssessment& ethics() const noexcept { return ethics_; }
  [[nodiscard]] const RiskAssessment& risk() const noexcept { return risk_; }
  [[nodiscard]] const ConsensusRecord& consensus() const noexcept { return consensus_; }
  [[nodiscard]] Decision decision() const noexcept { return decision_; }
  /// Audit flag: consensus AMA reached the mandatory-refinement cutoff.
  [[nodiscard]] bool mandatory_refinement() const noexcept { return mandatory_refinement_; }
  /// Plan handed to refine() after this iteration; absent on Stop and at the budget cap.
  [[nodiscard]] const std::optional<FeedbackPlan>& feedback() const noexcept { return feedback_; }

  friend bool operator==(const IterationTrace&, const IterationTrace&) = default;

 private:
  ResponseDraft response_;
  EthicsAssessment ethics_;
  RiskAssessment risk_;
  ConsensusRecord consensus_;
  std::optional<FeedbackPlan> feedback_;
  Decision decision_ = Decision::Refine;
  bool mandatory_refinement_ = false;
};

/// `Failed` marks an infrastructure failure (adapter error), distinct from
/// a loop that ran its budget without passing.
enum class RunStatus { Converged, NonConvergent, Failed };

inline std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::Converged: return "Converged";
    case RunStatus::NonConvergent: return "NonConvergent";
    case RunStatus::Failed: return "Failed";
  }
  return "Failed";
}

/// Full trajectory for one query.
class QueryRunResult {
 public:
  /// Builds a result from a finished loop, checking the trajectory invariants.
  static QueryRunResult from_traces(Query query, std::vector<IterationTrace> traces,
                                    const ThresholdPolicy& policy) {
    if (traces.empty()) throw PreconditionError("a finished run needs at least one trace");
    check_prefix(query, traces);
    RunStatus status;
    if (traces.back().decision() == Decision::Stop) {
      status = RunStatus::Converged;
    } else {
      if (static_cast<int>(traces.size()) != policy.max_iterations) {
        throw PreconditionError("non-convergent run for '" + query.id() + "' stopped after " +
                                std::to_string(traces.size()) + " of " +
                                std::to_string(policy.max_iterations) + " iterations");
      }
      status = RunStatus::NonConvergent;
    }
    return QueryRunResult(std::move(query), std::move(traces), status, {});
  }

  /// Infrastructure failure with whatever traces completed before it.
  static QueryRunResult failed(Query query, std::vector<IterationTrace> partial,
                               std::string failure) {
    check_prefix(query, partial);
    if (!partial.empty() && partial.back().decision() == Decision::Stop) {
      throw PreconditionError("a failed run cannot end in a passing iteration");
    }
    return QueryRunResult(std::move(query), std::move(partial), RunStatus::Failed,
                          std::move(failure));
  }

  [[nodiscard]] const Query& query() const noexcept { return query_; }
  [[nodiscard]] const std::vector<IterationTrace>& traces() const noexcept { return traces_; }
  [[nodiscard]] RunStatus status() const noexcept { return status_; }
  [[nodiscard]] bool converged() const noexcept { return status_ == RunStatus::Converged; }
  [[nodiscard]] bool failed() const noexcept { return status_ == RunStatus::Failed; }
  [[nodiscard]] const std::string& failure() const noexcept { return failure_; }
  [[nodiscard]] int iterations_used() const noexcept { return static_cast<int>(traces_.size()); }

  /// True when initial/final scores exist (every non-failed run).
  [[nodiscard]] bool has_scores() const noexcept { return !failed(); }
  [[nodiscard]] int initial_ama() const { return scored().front().consensus().ama_score(); }
  [[nodiscard]] int final_ama() const { return scored().back().consensus().ama_score(); }
  [[nodiscard]] int initial_sra() const { return scored().front().consensus().sra_level(); }
  [[nodiscard]] int final_sra() const { return scored().back().consensus().sra_level(); }

  friend bool operator==(const QueryRunResult&, const QueryRunResult&) = default;

 private:
  QueryRunResult(Query query, std::vector<IterationTrace> traces, RunStatus status,
                 std::string failure)
      : query_(std::move(query)), traces_(std::move(traces)), status_(status),
        failure_(std::move(failure)) {}

  static void check_prefix(const Query& query, const std::vector<IterationTrace>& traces) {
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& t = traces[i];
      if (t.iteration() != static_cast<int>(i) + 1) {
        throw PreconditionError("trace " + std::to_string(i + 1) + " of '" + query.id() +
                                "' has iteration " + std::to_string(t.iteration()));
      }
      if (t.response().query_id() != query.id()) {
        throw PreconditionError("trace for '" + t.response().query_id() +
                                "' attached to query '" + query.id() + "'");
      }
      if (i + 1 < traces.size() && t.decision() != Decision::Refine) {
        throw PreconditionError("query '" + query.id() + "' continued past a passing iteration");
      }
    }
  }

  [[nodiscard]] const std::vector<IterationTrace>& scored() const {
    if (!has_scores()) {
      throw PreconditionError("query '" + query_.id() + "' failed and carries no final scores");
    }
    return traces_;
  }

  Query query_;
  std::vector<IterationTrace> traces_;
  RunStatus status_;
  std::string failure_;
};

}  // namespace medsafe
