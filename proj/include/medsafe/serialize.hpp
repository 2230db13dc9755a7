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
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/domain.hpp"
#include "medsafe/errors.hpp"
#include "medsafe/policy.hpp"

// Canonical JSON form of the domain types, used by the run store. Readers
// re-run every constructor check, so a record that decodes is valid.

namespace medsafe {

namespace detail {

inline std::vector<int> principle_indices(const std::vector<AmaPrinciple>& ps) {
  std::vector<int> out;
  out.reserve(ps.size());
  for (auto p : ps) out.push_back(p.index());
  return out;
}

inline std::vector<AmaPrinciple> principles_from(const nlohmann::json& j) {
  std::vector<AmaPrinciple> out;
  for (const auto& v : j) out.push_back(AmaPrinciple::from_index(v.get<int>()));
  return out;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const Query& q) {
  nlohmann::ordered_json j;
  j["id"] = q.id();
  j["text"] = q.text();
  j["principle"] = q.principle().index();
  j["risk_category"] = std::string(to_string(q.risk_category()));
  return j;
}

inline Query query_from_json(const nlohmann::json& j) {
  auto risk = parse_risk_category(j.at("risk_category").get<std::string>());
  if (!risk) throw ParseError(0, "unknown risk_category " + j.at("risk_category").dump());
  return Query(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
               AmaPrinciple::from_index(j.at("principle").get<int>()), *risk);
}

inline nlohmann::ordered_json to_json(const IterationTrace& t) {
  nlohmann::ordered_json j;
  j["iteration"] = t.iteration();
  j["response"] = t.response().text();
  j["ama_score"] = t.ethics().ama_score();
  j["violated_principles"] = detail::principle_indices(t.ethics().violated_principles());
  j["ethics_reasons"] = t.ethics().reasons();
  j["sra_level"] = t.risk().sra_level();
  j["risk_reasons"] = t.risk().reasons();
  j["consensus_ama"] = t.consensus().ama_score();
  j["consensus_sra"] = t.consensus().sra_level();
  j["consensus_reasons"] = t.consensus().reasons();
  j["consensus_principles"] = detail::principle_indices(t.consensus().violated_principles());
  j["decision"] = std::string(to_string(t.decision()));
  j["mandatory_refinement"] = t.mandatory_refinement();
  if (t.feedback()) {
    j["feedback"] = t.feedback()->directives();
  } else {
    j["feedback"] = nullptr;
  }
  return j;
}

/// Rebuilds a trace and checks that the stored decision and flag agree with
/// the recomputation under `policy`.
inline IterationTrace trace_from_json(const nlohmann::json& j, const std::string& query_id,
                                      const ThresholdPolicy& policy) {
  ResponseDraft draft(query_id, j.at("iteration").get<int>(), j.at("response").get<std::string>());
  EthicsAssessment ethics(j.at("ama_score").get<int>(),
                          detail::principles_from(j.at("violated_principles")),
                          j.at("ethics_reasons").get<std::vector<std::string>>());
  RiskAssessment risk(j.at("sra_level").get<int>(),
                      j.at("risk_reasons").get<std::vector<std::string>>());
  ConsensusRecord consensus(j.at("consensus_ama").get<int>(), j.at("consensus_sra").get<int>(),
                            j.at("consensus_reasons").get<std::vector<std::string>>(),
                            detail::principles_from(j.at("consensus_principles")));
  std::optional<FeedbackPlan> plan;
  if (const auto& f = j.at("feedback"); !f.is_null()) {
    plan = FeedbackPlan(f.get<std::vector<std::string>>(), consensus);
  }
  IterationTrace t(std::move(draft), std::move(ethics), std::move(risk), std::move(consensus),
                   policy, std::move(plan));
  if (std::string(to_string(t.decision())) != j.at("decision").get<std::string>() ||
      t.mandatory_refinement() != j.at("mandatory_refinement").get<bool>()) {
    throw ParseError(0, "stored decision for '" + query_id + "' iteration " +
                            std::to_string(t.iteration()) + " disagrees with the policy");
  }
  return t;
}

inline nlohmann::ordered_json to_json(const QueryRunResult& r) {
  nlohmann::ordered_json j;
  j["query"] = to_json(r.query());
  j["status"] = std::string(to_string(r.status()));
  j["iterations_used"] = r.iterations_used();
  if (r.has_scores()) {
    j["initial_ama"] = r.initial_ama();
    j["final_ama"] = r.final_ama();
    j["initial_sra"] = r.initial_sra();
    j["final_sra"] = r.final_sra();
  }
  if (r.failed()) j["failure"] = r.failure();
  auto traces = nlohmann::ordered_json::array();
  for (const auto& t : r.traces()) traces.push_back(to_json(t));
  j["traces"] = std::move(traces);
  return j;
}

/// Rebuilds a result from its traces; the summary fields in the record are
/// cross-checked, never trusted.
inline QueryRunResult result_from_json(const nlohmann::json& j, const ThresholdPolicy& policy) {
  Query q = query_from_json(j.at("query"));
  std::vector<IterationTrace> traces;
  for (const auto& t : j.at("traces")) traces.push_back(trace_from_json(t, q.id(), policy));
  const auto status = j.at("status").get<std::string>();
  QueryRunResult r = status == "Failed"
                         ? QueryRunResult::failed(std::move(q), std::move(traces),
                                                  j.at("failure").get<std::string>())
                         : QueryRunResult::from_traces(std::move(q), std::move(traces), policy);
  if (std::string(to_string(r.status())) != status ||
      r.iterations_used() != j.at("iterations_used").get<int>()) {
    throw ParseError(0, "stored summary for '" + r.query().id() + "' disagrees with its traces");
  }
  return r;
}

inline nlohmann::ordered_json to_json(const ThresholdPolicy& p) {
  nlohmann::ordered_json j;
  j["tau_ama"] = p.tau_ama;
  j["tau_sra"] = p.tau_sra;
  j["mandatory_refinement_ama"] = p.mandatory_refinement_ama;
  j["max_iterations"] = p.max_iterations;
  return j;
}

/// Missing keys keep their defaults.
inline ThresholdPolicy policy_from_json(const nlohmann::json& j) {
  ThresholdPolicy p;
  p.tau_ama = j.value("tau_ama", p.tau_ama);
  p.tau_sra = j.value("tau_sra", p.tau_sra);
  p.mandatory_refinement_ama = j.value("mandatory_refinement_ama", p.mandatory_refinement_ama);
  p.max_iterations = j.value("max_iterations", p.max_iterations);
  p.validate();
  return p;
}

}  // namespace medsafe
