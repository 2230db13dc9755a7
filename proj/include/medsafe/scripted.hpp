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

#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/agents.hpp"
#include "medsafe/domain.hpp"
#include "medsafe/errors.hpp"

namespace medsafe {

struct ScoreStep {
  int ama;
  int sra;
  friend bool operator==(const ScoreStep&, const ScoreStep&) = default;
};

/// Scores the loop will observe for one query, one step per iteration.
class ScriptedTrajectory {
 public:
  ScriptedTrajectory(std::string query_id, std::vector<ScoreStep> steps, int max_iterations = 5)
      : query_id_(std::move(query_id)), steps_(std::move(steps)) {
    if (steps_.empty() || static_cast<int>(steps_.size()) > max_iterations) {
      throw RangeError("trajectory for '" + query_id_ + "' must have 1.." +
                       std::to_string(max_iterations) + " steps, got " +
                       std::to_string(steps_.size()));
    }
    for (const auto& s : steps_) {
      detail::check_ama(s.ama);
      detail::check_sra(s.sra);
    }
  }

  [[nodiscard]] const std::string& query_id() const noexcept { return query_id_; }
  [[nodiscard]] const std::vector<ScoreStep>& steps() const noexcept { return steps_; }

 private:
  std::string query_id_;
  std::vector<ScoreStep> steps_;
};

/// Immutable lookup of trajectories by query id.
class TrajectoryTable {
 public:
  TrajectoryTable() = default;
  explicit TrajectoryTable(std::vector<ScriptedTrajectory> trajectories) {
    for (auto& t : trajectories) {
      auto id = t.query_id();
      if (!by_id_.emplace(id, std::move(t)).second) {
        throw DuplicateIdError(0, id);
      }
    }
  }

  [[nodiscard]] const ScriptedTrajectory* find(const std::string& query_id) const {
    auto it = by_id_.find(query_id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  [[nodiscard]] std::size_t size() const noexcept { return by_id_.size(); }

  [[nodiscard]] ScoreStep step(const std::string& query_id, int iteration) const {
    const auto* t = find(query_id);
    if (t == nullptr) throw MissingTrajectoryError("no trajectory for query '" + query_id + "'");
    if (iteration < 1 || iteration > static_cast<int>(t->steps().size())) {
      throw MissingTrajectoryError("trajectory for '" + query_id + "' has no step " +
                                   std::to_string(iteration));
    }
    return t->steps()[static_cast<std::size_t>(iteration - 1)];
  }

  /// Line-delimited records {"query_id", "iteration", "ama", "sra"}; iterations
  /// for a query must be 1..n without gaps, in any line order.
  static TrajectoryTable parse(std::istream& in, int max_iterations = 5) {
    std::map<std::string, std::map<int, ScoreStep>> raw;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        auto id = j.at("query_id").get<std::string>();
        int it = j.at("iteration").get<int>();
        ScoreStep s{j.at("ama").get<int>(), j.at("sra").get<int>()};
        detail::check_ama(s.ama);
        detail::check_sra(s.sra);
        if (!raw[id].emplace(it, s).second) {
          throw ParseError(line_no, "duplicate step " + std::to_string(it) + " for '" + id + "'");
        }
      } catch (const ParseError&) {
        throw;
      } catch (const std::exception& e) {
        throw ParseError(line_no, e.what());
      }
    }
    std::vector<ScriptedTrajectory> out;
    out.reserve(raw.size());
    for (auto& [id, steps] : raw) {
      std::vector<ScoreStep> ordered;
      int expect = 1;
      for (auto& [it, s] : steps) {
        if (it != expect) {
          throw ParseError(0, "trajectory for '" + id + "' is missing step " +
                                  std::to_string(expect));
        }
        ordered.push_back(s);
        ++expect;
      }
      out.emplace_back(id, std::move(ordered), max_iterations);
    }
    return TrajectoryTable(std::move(out));
  }

  static TrajectoryTable load(const std::string& path, int max_iterations = 5) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open trajectory file '" + path + "'");
    return parse(in, max_iterations);
  }

  /// Writes one line per (query, iteration) in a stable order.
  void write(std::ostream& out) const {
    for (const auto& [id, t] : by_id_) {
      for (std::size_t i = 0; i < t.steps().size(); ++i) {
        nlohmann::json j = {{"query_id", id},
                            {"iteration", i + 1},
                            {"ama", t.steps()[i].ama},
                            {"sra", t.steps()[i].sra}};
        out << j.dump() << '\n';
      }
    }
  }

 private:
  std::map<std::string, ScriptedTrajectory> by_id_;
};

inline Assessment scripted_assess(const TrajectoryTable& table, const ResponseDraft& response,
                                  const Query& query, EvaluatorRole role) {
  const auto step = table.step(query.id(), response.iteration());
  Assessment a;
  if (role == EvaluatorRole::Ethics) {
    a.ethics = EthicsAssessment(step.ama, {},
                                step.ama > 0 ? std::vector<std::string>{"scripted ethics finding"}
                                             : std::vector<std::string>{});
  } else {
    a.risk = RiskAssessment(step.sra, step.sra > 2
                                          ? std::vector<std::string>{"scripted risk finding"}
                                          : std::vector<std::string>{});
  }
  return a;
}

/// Deterministic replay of scripted scores.
class ScriptedEvaluator final : public Evaluator {
 public:
  ScriptedEvaluator(EvaluatorRole role, std::shared_ptr<const TrajectoryTable> table)
      : role_(role), table_(std::move(table)) {}

  [[nodiscard]] EvaluatorRole role() const noexcept override { return role_; }

  Assessment assess(const ResponseDraft& response, const Query& query) override {
    return scripted_assess(*table_, response, query, role_);
  }

 private:
  EvaluatorRole role_;
  std::shared_ptr<const TrajectoryTable> table_;
};

}  // namespace medsafe
