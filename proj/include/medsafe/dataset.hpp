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

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/domain.hpp"
#include "medsafe/errors.hpp"

namespace medsafe {

/// Ordered, validated list of benchmark queries.
class Dataset {
 public:
  Dataset() = default;

  /// `extras[i]` holds unrecognized keys of query i (may be empty).
  explicit Dataset(std::vector<Query> queries, std::vector<nlohmann::json> extras = {})
      : queries_(std::move(queries)), extras_(std::move(extras)) {
    extras_.resize(queries_.size(), nlohmann::json::object());
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < queries_.size(); ++i) {
      const auto& q = queries_[i];
      if (!ids.insert(q.id()).second) throw DuplicateIdError(i + 1, q.id());
      ++principle_counts_[q.principle().index()];
      ++risk_counts_[q.risk_category()];
    }
  }

  [[nodiscard]] const std::vector<Query>& queries() const noexcept { return queries_; }
  [[nodiscard]] std::size_t size() const noexcept { return queries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return queries_.empty(); }
  /// Keyed by principle index 1..9; principles with no queries are absent.
  [[nodiscard]] const std::map<int, std::size_t>& per_principle_counts() const noexcept {
    return principle_counts_;
  }
  [[nodiscard]] const std::map<RiskCategory, std::size_t>& per_risk_counts() const noexcept {
    return risk_counts_;
  }
  [[nodiscard]] std::size_t unlabeled_count() const {
    auto it = risk_counts_.find(RiskCategory::Unlabeled);
    return it == risk_counts_.end() ? 0 : it->second;
  }
  [[nodiscard]] const nlohmann::json& extras(std::size_t i) const { return extras_.at(i); }

  /// Throws BalanceError unless all nine principles have the same nonzero count.
  void check_balance() const {
    std::size_t expected = 0;
    for (const auto& [p, c] : principle_counts_) expected = std::max(expected, c);
    std::map<int, std::size_t> all;
    for (auto p : AmaPrinciple::all()) {
      auto it = principle_counts_.find(p.index());
      all[p.index()] = it == principle_counts_.end() ? 0 : it->second;
    }
    if (expected == 0) throw BalanceError("dataset is empty; expected nine balanced principles", all);
    for (const auto& [idx, c] : all) {
      if (c != expected) {
        const auto p = AmaPrinciple::from_index(idx);
        throw BalanceError("principle " + std::string(p.roman()) + " (" + std::string(p.label()) +
                               ") has " + std::to_string(c) + " queries, expected " +
                               std::to_string(expected),
                           all);
      }
    }
  }

  /// One JSON record per line; the inverse of `parse_dataset`.
  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < queries_.size(); ++i) {
      const auto& q = queries_[i];
      nlohmann::ordered_json j;
      j["id"] = q.id();
      j["text"] = q.text();
      j["principle"] = q.principle().index();
      j["risk_category"] = std::string(to_string(q.risk_category()));
      for (const auto& [k, v] : extras_[i].items()) j[k] = v;
      out << j.dump() << '\n';
    }
  }

 private:
  std::vector<Query> queries_;
  std::vector<nlohmann::json> extras_;
  std::map<int, std::size_t> principle_counts_;
  std::map<RiskCategory, std::size_t> risk_counts_;
};

inline Dataset parse_dataset(std::istream& in, bool strict_balance = false) {
  std::vector<Query> queries;
  std::vector<nlohmann::json> extras;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid record: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record is not an object");
    auto str_field = [&](const char* key) {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string()) {
        throw ParseError(line_no, std::string("missing or non-string field '") + key + "'");
      }
      return it->get<std::string>();
    };
    std::string id = str_field("id");
    std::string text = str_field("text");
    if (id.empty()) throw ParseError(line_no, "empty id");
    if (text.empty()) throw ParseError(line_no, "empty text for '" + id + "'");

    auto pit = j.find("principle");
    if (pit == j.end()) throw ParseError(line_no, "missing field 'principle'");
    std::optional<AmaPrinciple> principle;
    if (pit->is_number_integer()) {
      const auto v = pit->get<long long>();
      if (v >= 1 && v <= AmaPrinciple::kCount) principle = AmaPrinciple::from_index(static_cast<int>(v));
    } else if (pit->is_string()) {
      principle = AmaPrinciple::parse(pit->get<std::string>());
    }
    if (!principle) throw ParseError(line_no, "principle " + pit->dump() + " is not in I..IX");

    RiskCategory risk = RiskCategory::Unlabeled;
    if (auto rit = j.find("risk_category"); rit != j.end() && !rit->is_null()) {
      if (!rit->is_string()) throw ParseError(line_no, "risk_category must be a string");
      auto parsed = parse_risk_category(rit->get<std::string>());
      if (!parsed) throw ParseError(line_no, "unknown risk_category " + rit->dump());
      risk = *parsed;
    }
    if (!ids.insert(id).second) throw DuplicateIdError(line_no, id);

    nlohmann::json extra = nlohmann::json::object();
    for (const auto& [k, v] : j.items()) {
      if (k != "id" && k != "text" && k != "principle" && k != "risk_category") extra[k] = v;
    }
    queries.emplace_back(std::move(id), std::move(text), *principle, risk);
    extras.push_back(std::move(extra));
  }
  Dataset ds(std::move(queries), std::move(extras));
  if (strict_balance) ds.check_balance();
  return ds;
}

inline Dataset load_dataset(const std::string& path, bool strict_balance = false) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open dataset file '" + path + "': file not found or unreadable");
  return parse_dataset(in, strict_balance);
}

inline std::map<AmaPrinciple, std::vector<Query>> partition_by_principle(const Dataset& ds) {
  std::map<AmaPrinciple, std::vector<Query>> out;
  for (const auto& q : ds.queries()) out[q.principle()].push_back(q);
  return out;
}

inline std::map<RiskCategory, std::vector<Query>> partition_by_risk_category(const Dataset& ds) {
  std::map<RiskCategory, std::vector<Query>> out;
  for (const auto& q : ds.queries()) out[q.risk_category()].push_back(q);
  return out;
}

/// `n` synthetic queries cycling through the nine principles, then through
/// the four labeled risk categories once per full principle cycle.
inline Dataset synthetic_dataset(std::size_t n) {
  std::vector<Query> queries;
  queries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto principle = AmaPrinciple::from_index(static_cast<int>(i % 9) + 1);
    const auto risk = kLabeledRiskCategories[(i / 9) % kLabeledRiskCategories.size()];
    char id[32];
    std::snprintf(id, sizeof id, "sim-%05zu", i + 1);
    queries.emplace_back(id,
                         "synthetic " + std::string(to_string(risk)) + " prompt for principle " +
                             std::string(principle.roman()),
                         principle, risk);
  }
  return Dataset(std::move(queries));
}

}  // namespace medsafe
