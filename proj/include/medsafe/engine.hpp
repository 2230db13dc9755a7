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
#include <atomic>
#include <cstddef>
#include <exception>
#include <future>
#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "medsafe/agents.hpp"
#include "medsafe/domain.hpp"
#include "medsafe/errors.hpp"
#include "medsafe/policy.hpp"

namespace medsafe {

/// An adapter failed mid-loop. Carries the traces completed before the
/// failure so the audit trail survives.
class AgentFailure : public Error {
 public:
  AgentFailure(const std::string& query_id, const std::string& cause,
               std::vector<IterationTrace> partial)
      : Error("agent failure on query '" + query_id + "': " + cause),
        cause_(cause),
        partial_(std::move(partial)) {}

  [[nodiscard]] const std::string& cause() const noexcept { return cause_; }
  [[nodiscard]] const std::vector<IterationTrace>& partial_traces() const noexcept {
    return partial_;
  }

 private:
  std::string cause_;
  std::vector<IterationTrace> partial_;
};

/// Receives loop events as they happen. Called concurrently from workers;
/// implementations serialize internally.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_trace(const Query& /*query*/, const IterationTrace& /*trace*/) {}
  /// `index` is the query's position in the dataset.
  virtual void on_result(std::size_t /*index*/, const QueryRunResult& /*result*/) {}
};

/// One generator plus one evaluator per role.
class LoopConfig {
 public:
  LoopConfig(ThresholdPolicy policy, std::shared_ptr<Generator> generator,
             std::shared_ptr<Evaluator> ethics_evaluator,
             std::shared_ptr<Evaluator> risk_evaluator, bool parallel_assess = true)
      : policy_(policy),
        generator_(std::move(generator)),
        ethics_(std::move(ethics_evaluator)),
        risk_(std::move(risk_evaluator)),
        parallel_assess_(parallel_assess) {
    policy_.validate();
    if (!generator_ || !ethics_ || !risk_) throw ConfigError("loop needs a generator and two evaluators");
    if (ethics_->role() != EvaluatorRole::Ethics || risk_->role() != EvaluatorRole::Risk) {
      throw ConfigError("evaluators must be one ethics-role and one risk-role evaluator, got " +
                        std::string(to_string(ethics_->role())) + " and " +
                        std::string(to_string(risk_->role())));
    }
  }

  [[nodiscard]] const ThresholdPolicy& policy() const noexcept { return policy_; }
  [[nodiscard]] Generator& generator() const noexcept { return *generator_; }
  [[nodiscard]] Evaluator& ethics_evaluator() const noexcept { return *ethics_; }
  [[nodiscard]] Evaluator& risk_evaluator() const noexcept { return *risk_; }
  [[nodiscard]] bool parallel_assess() const noexcept { return parallel_assess_; }

 private:
  ThresholdPolicy policy_;
  std::shared_ptr<Generator> generator_;
  std::shared_ptr<Evaluator> ethics_;
  std::shared_ptr<Evaluator> risk_;
  bool parallel_assess_;
};

/// Role-partitioned merge: AMA from the ethics verdict, SRA from the risk
/// verdict, reasons concatenated ethics-first and deduplicated.
inline ConsensusRecord merge_consensus(const EthicsAssessment& ethics, const RiskAssessment& risk) {
  std::vector<std::string> reasons = ethics.reasons();
  reasons.insert(reasons.end(), risk.reasons().begin(), risk.reasons().end());
  return ConsensusRecord(ethics.ama_score(), risk.sra_level(), std::move(reasons),
                         ethics.violated_principles());
}

/// Merge of two raw evaluator outputs. Where both outputs score the same
/// dimension the larger (more conservative) value wins.
inline ConsensusRecord merge_consensus(const Assessment& from_ethics, const Assessment& from_risk) {
  if (!from_ethics.ethics) throw MalformedResponseError("ethics evaluator returned no AMA score");
  if (!from_risk.risk) throw MalformedResponseError("risk evaluator returned no SRA level");
  int ama = from_ethics.ethics->ama_score();
  int sra = from_risk.risk->sra_level();
  std::vector<AmaPrinciple> violated = from_ethics.ethics->violated_principles();
  std::vector<std::string> reasons = from_ethics.ethics->reasons();
  auto append = [&reasons](const std::vector<std::string>& more) {
    reasons.insert(reasons.end(), more.begin(), more.end());
  };
  if (from_risk.ethics) {
    ama = std::max(ama, from_risk.ethics->ama_score());
    append(from_risk.ethics->reasons());
    violated.insert(violated.end(), from_risk.ethics->violated_principles().begin(),
                    from_risk.ethics->violated_principles().end());
  }
  if (from_ethics.risk) {
    sra = std::max(sra, from_ethics.risk->sra_level());
    append(from_ethics.risk->reasons());
  }
  append(from_risk.risk->reasons());
  return ConsensusRecord(ama, sra, std::move(reasons), std::move(violated));
}

/// Deterministic revision directives for a failing consensus: one per
/// reason, then a risk directive, then an ethics directive.
inline FeedbackPlan build_feedback_plan(const ConsensusRecord& consensus,
                                        const ThresholdPolicy& policy) {
  if (passes_thresholds(consensus, policy)) {
    throw PreconditionError("consensus already passes the thresholds; nothing to revise");
  }
  std::vector<std::string> directives;
  for (const auto& reason : consensus.reasons()) {
    directives.push_back("Address: " + reason);
  }
  if (consensus.sra_level() > policy.tau_sra) {
    directives.push_back(
        "Remove unsafe actionable instructions, avoid diagnosis and treatment claims, and refer "
        "the user to a qualified clinician (risk level " +
        std::to_string(consensus.sra_level()) + ", must be at most " +
        std::to_string(policy.tau_sra) + ").");
  }
  if (consensus.ama_score() > policy.tau_ama) {
    std::string target;
    if (consensus.violated_principles().empty()) {
      target = "the AMA Principles of Medical Ethics";
    } else {
      for (const auto& p : consensus.violated_principles()) {
        if (!target.empty()) target += "; ";
        target += std::string(p.roman()) + " " + std::string(p.label());
      }
    }
    directives.push_back("Rewrite for consistency with " + target +
                         ", including privacy expectations (violation score " +
                         std::to_string(consensus.ama_score()) + ", must be at most " +
                         std::to_string(policy.tau_ama) + ").");
  }
  return FeedbackPlan(std::move(directives), consensus);
}

namespace detail {

inline void check_draft(const ResponseDraft& draft, const Query& query, int expected_iteration) {
  if (draft.query_id() != query.id() || draft.iteration() != expected_iteration) {
    throw MalformedResponseError("generator returned draft (" + draft.query_id() + ", " +
                                 std::to_string(draft.iteration()) + "), expected (" + query.id() +
                                 ", " + std::to_string(expected_iteration) + ")");
  }
}

inline std::pair<Assessment, Assessment> assess_both(const LoopConfig& config,
                                                     const ResponseDraft& draft,
                                                     const Query& query) {
  if (!config.parallel_assess()) {
    auto e = config.ethics_evaluator().assess(draft, query);
    auto r = config.risk_evaluator().assess(draft, query);
    return {std::move(e), std::move(r)};
  }
  auto risk = std::async(std::launch::async,
                         [&] { return config.risk_evaluator().assess(draft, query); });
  Assessment ethics;
  try {
    ethics = config.ethics_evaluator().assess(draft, query);
  } catch (...) {
    risk.wait();
    throw;
  }
  return {std::move(ethics), risk.get()};
}

}  // namespace detail

/// Runs the generate / assess / merge / check / feedback / refine loop for
/// one query. Adapter errors surface as AgentFailure with the partial trace.
inline QueryRunResult run_query(const Query& query, const LoopConfig& config,
                                RunObserver* observer = nullptr) {
  const auto& policy = config.policy();
  std::vector<IterationTrace> traces;
  try {
    auto draft = config.generator().generate(query);
    detail::check_draft(draft, query, 1);
    for (int i = 1; i <= policy.max_iterations; ++i) {
      auto [ethics_out, risk_out] = detail::assess_both(config, draft, query);
      auto consensus = merge_consensus(ethics_out, risk_out);
      const bool pass = passes_thresholds(consensus, policy);
      std::optional<FeedbackPlan> plan;
      if (!pass && i < policy.max_iterations) plan = build_feedback_plan(consensus, policy);
      traces.emplace_back(draft, *ethics_out.ethics, *risk_out.risk, std::move(consensus), policy,
                          plan);
      if (observer != nullptr) observer->on_trace(query, traces.back());
      if (pass || i == policy.max_iterations) break;
      draft = config.generator().refine(draft, *plan, query);
      detail::check_draft(draft, query, i + 1);
    }
  } catch (const std::exception& e) {
    throw AgentFailure(query.id(), e.what(), std::move(traces));
  }
  return QueryRunResult::from_traces(query, std::move(traces), policy);
}

struct RunOptions {
  std::size_t worker_limit = 1;
  RunObserver* observer = nullptr;
  /// When requested, queries not yet started are skipped; in-flight ones finish.
  std::stop_token stop;
};

/// Runs every query with up to `worker_limit` in flight. Output order equals
/// input order. Agent failures become `RunStatus::Failed` results. Queries
/// skipped because of a stop request are omitted.
inline std::vector<QueryRunResult> run_dataset(std::span<const Query> queries,
                                               const LoopConfig& config,
                                               const RunOptions& options = {}) {
  const std::size_t n = queries.size();
  std::vector<std::optional<QueryRunResult>> slots(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      if (options.stop.stop_requested()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      const Query& q = queries[i];
      try {
        slots[i] = run_query(q, config, options.observer);
      } catch (const AgentFailure& f) {
        slots[i] = QueryRunResult::failed(q, f.partial_traces(), f.cause());
      }
      if (options.observer != nullptr) options.observer->on_result(i, *slots[i]);
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(options.worker_limit, 1), n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<QueryRunResult> out;
  out.reserve(n);
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

}  // namespace medsafe
