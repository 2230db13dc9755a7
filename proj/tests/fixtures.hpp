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

// Shared fixtures for the unit, property and acceptance suites: scripted
// trajectory sets with known aggregate outcomes, random trajectory
// generators, counting stubs, and a naive metrics oracle written without
// reference to the library's metrics code.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "medsafe/medsafe.hpp"

namespace medsafe::testing {

inline Query make_query(std::size_t i, const std::string& prefix = "q") {
  return Query(fmt::format("{}-{:05}", prefix, i), fmt::format("question {}", i),
               AmaPrinciple::from_index(static_cast<int>(i % 9) + 1),
               kLabeledRiskCategories[(i / 9) % kLabeledRiskCategories.size()]);
}

/// A dataset plus the scripted score table every evaluator replays.
struct ScriptedFixture {
  std::vector<Query> queries;
  std::shared_ptr<TrajectoryTable> table;

  [[nodiscard]] Dataset dataset() const { return Dataset(queries); }
};

inline ScriptedFixture make_fixture(const std::vector<std::vector<ScoreStep>>& scripts,
                                    const std::string& prefix = "q") {
  ScriptedFixture f;
  std::vector<ScriptedTrajectory> trajectories;
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    f.queries.push_back(make_query(i, prefix));
    trajectories.emplace_back(f.queries.back().id(), scripts[i]);
  }
  f.table = std::make_shared<TrajectoryTable>(std::move(trajectories));
  return f;
}

/// `converged_at[k-1]` queries converge at iteration k; `non_convergent`
/// queries never pass. Failing steps alternate between the two failure modes.
inline ScriptedFixture histogram_fixture(const std::array<std::size_t, 5>& converged_at,
                                         std::size_t non_convergent,
                                         const std::string& prefix = "q") {
  std::vector<std::vector<ScoreStep>> scripts;
  const std::array<ScoreStep, 4> failing = {{{6, 4}, {4, 3}, {3, 2}, {2, 3}}};
  for (int k = 1; k <= 5; ++k) {
    for (std::size_t n = 0; n < converged_at[k - 1]; ++n) {
      std::vector<ScoreStep> s;
      for (int j = 1; j < k; ++j) s.push_back(failing[(j - 1) % failing.size()]);
      s.push_back({1, 1});
      scripts.push_back(std::move(s));
    }
  }
  for (std::size_t n = 0; n < non_convergent; ++n) {
    scripts.push_back({{7, 5}, {6, 4}, {5, 4}, {4, 3}, {3, 3}});
  }
  return make_fixture(scripts, prefix);
}

/// 900 queries whose initial and final SRA columns are exactly
/// (108, 162, 315, 252, 63) and (603, 252, 45, 0, 0).
inline ScriptedFixture sra_distribution_fixture() {
  std::vector<std::vector<ScoreStep>> scripts;
  auto add = [&scripts](std::size_t n, std::vector<ScoreStep> s) {
    for (std::size_t i = 0; i < n; ++i) scripts.push_back(s);
  };
  add(108, {{0, 1}});
  add(162, {{0, 2}});
  // Starting at level 3: 45 stay there, 270 reach level 1.
  add(45, {{1, 3}, {1, 3}, {1, 3}, {1, 3}, {1, 3}});
  add(270, {{5, 3}, {1, 1}});
  // Level 4: 225 to level 1, 27 to level 2.
  add(225, {{5, 4}, {1, 1}});
  add(27, {{5, 4}, {1, 2}});
  // Level 5: all 63 to level 2.
  add(63, {{8, 5}, {4, 3}, {1, 2}});
  return make_fixture(scripts, "s");
}

inline std::shared_ptr<LoopConfig> scripted_config(const ScriptedFixture& f,
                                                   ThresholdPolicy policy = {},
                                                   bool parallel = true) {
  return std::make_shared<LoopConfig>(
      policy, std::make_shared<PlaceholderGenerator>(),
      std::make_shared<ScriptedEvaluator>(EvaluatorRole::Ethics, f.table),
      std::make_shared<ScriptedEvaluator>(EvaluatorRole::Risk, f.table), parallel);
}

inline std::vector<QueryRunResult> run_fixture(const ScriptedFixture& f, std::size_t workers = 1) {
  auto config = scripted_config(f);
  RunOptions opts;
  opts.worker_limit = workers;
  return run_dataset(f.queries, *config, opts);
}

inline std::shared_ptr<LoopConfig> simulated_config(const SimulatorParams& p,
                                                    ThresholdPolicy policy = {}) {
  return std::make_shared<LoopConfig>(policy, std::make_shared<PlaceholderGenerator>(),
                                      std::make_shared<SimulatedEvaluator>(EvaluatorRole::Ethics, p),
                                      std::make_shared<SimulatedEvaluator>(EvaluatorRole::Risk, p));
}

/// Random script of 1..6 steps; scores anywhere in range. A script shorter
/// than the budget whose steps all fail makes the query fail mid-loop.
inline std::vector<ScoreStep> random_script(std::mt19937_64& rng, int max_iterations = 5) {
  std::uniform_int_distribution<int> len(1, max_iterations);
  std::uniform_int_distribution<int> ama(kMinAma, kMaxAma);
  std::uniform_int_distribution<int> sra(kMinSra, kMaxSra);
  std::bernoulli_distribution low(0.35);
  std::vector<ScoreStep> s(static_cast<std::size_t>(len(rng)));
  for (auto& step : s) {
    // Bias toward the pass region so every outcome shows up often.
    step.ama = low(rng) ? ama(rng) % 3 : ama(rng);
    step.sra = low(rng) ? 1 + sra(rng) % 2 : sra(rng);
  }
  return s;
}

/// Expected outcome of replaying `script` through the loop.
struct ExpectedOutcome {
  RunStatus status;
  int traces;
};

inline ExpectedOutcome expected_outcome(const std::vector<ScoreStep>& script,
                                        const ThresholdPolicy& p = {}) {
  const int budget = p.max_iterations;
  for (int i = 0; i < budget; ++i) {
    if (i >= static_cast<int>(script.size())) return {RunStatus::Failed, i};
    const auto& s = script[static_cast<std::size_t>(i)];
    if (s.ama <= p.tau_ama && s.sra <= p.tau_sra) return {RunStatus::Converged, i + 1};
  }
  return {RunStatus::NonConvergent, budget};
}

/// Generator stub that counts calls.
class CountingGenerator final : public Generator {
 public:
  ResponseDraft generate(const Query& q) override {
    ++generates;
    return ResponseDraft(q.id(), 1, "draft 1");
  }
  ResponseDraft refine(const ResponseDraft& prev, const FeedbackPlan& plan, const Query& q) override {
    ++refines;
    if (plan.directives().empty()) ++empty_plans;
    return ResponseDraft(q.id(), prev.iteration() + 1, "draft " + std::to_string(prev.iteration() + 1));
  }
  std::atomic<int> generates{0};
  std::atomic<int> refines{0};
  std::atomic<int> empty_plans{0};
};

/// Evaluator wrapper recording every draft it sees.
class RecordingEvaluator final : public Evaluator {
 public:
  explicit RecordingEvaluator(std::shared_ptr<Evaluator> inner) : inner_(std::move(inner)) {}
  [[nodiscard]] EvaluatorRole role() const noexcept override { return inner_->role(); }
  Assessment assess(const ResponseDraft& r, const Query& q) override {
    {
      std::lock_guard lock(mu_);
      seen.emplace_back(r.query_id(), r.iteration(), r.text());
    }
    return inner_->assess(r, q);
  }
  std::vector<std::tuple<std::string, int, std::string>> seen;

 private:
  std::mutex mu_;
  std::shared_ptr<Evaluator> inner_;
};

// ---------------------------------------------------------------------------
// Naive oracle. Works from raw trace fields only and keeps exact integer
// sums, dividing once at the end.

struct NaiveRatio {
  long long num = 0;
  long long den = 0;
  [[nodiscard]] std::optional<double> value() const {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

struct NaiveMoments {
  long long n = 0;
  long long sum = 0;
  long long sum_sq = 0;
  [[nodiscard]] double mean() const { return static_cast<double>(sum) / static_cast<double>(n); }
  /// Population variance as an exact fraction (n·Σx² − (Σx)²) / n².
  [[nodiscard]] double variance() const {
    return static_cast<double>(n * sum_sq - sum * sum) / static_cast<double>(n * n);
  }
};

struct NaiveReport {
  NaiveRatio convergence;
  NaiveMoments iterations;
  std::map<int, long long> converged_at;
  long long non_convergent = 0;
  long long failed = 0;
  NaiveRatio before;  // Σ initial AMA / scored
  NaiveRatio after;   // Σ final AMA / scored
  std::map<int, std::pair<NaiveRatio, NaiveRatio>> per_category;  // keyed by enum value
  NaiveRatio downgrade;
  std::map<int, NaiveRatio> sra_initial;
  std::map<int, NaiveRatio> sra_final;
  std::map<int, NaiveMoments> per_principle;
  long long unlabeled = 0;
};

inline NaiveReport naive_report(const std::vector<QueryRunResult>& results, bool include_nc = false) {
  NaiveReport o;
  o.convergence.den = static_cast<long long>(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& tr = results[i].traces();
    const bool failed = results[i].status() == RunStatus::Failed;
    const bool conv = !failed && !tr.empty() && tr.back().decision() == Decision::Stop;
    const long long used = static_cast<long long>(tr.size());
    if (failed) {
      ++o.failed;
      continue;
    }
    if (conv) {
      ++o.convergence.num;
      ++o.converged_at[static_cast<int>(used)];
    } else {
      ++o.non_convergent;
    }
    if (conv || include_nc) {
      ++o.iterations.n;
      o.iterations.sum += used;
      o.iterations.sum_sq += used * used;
    }
    const int a0 = tr.front().ethics().ama_score();
    const int a1 = tr.back().ethics().ama_score();
    const int s0 = tr.front().risk().sra_level();
    const int s1 = tr.back().risk().sra_level();
    o.before.num += a0;
    o.after.num += a1;
    ++o.before.den;
    ++o.after.den;
    const auto cat = results[i].query().risk_category();
    if (cat == RiskCategory::Unlabeled) {
      ++o.unlabeled;
    } else {
      auto& g = o.per_category[static_cast<int>(cat)];
      g.first.num += a0;
      g.second.num += a1;
      ++g.first.den;
      ++g.second.den;
    }
    if (s0 >= 3) {
      ++o.downgrade.den;
      if (s1 <= 2) ++o.downgrade.num;
    }
  }
  for (int level = 1; level <= 5; ++level) {
    NaiveRatio in{0, 0};
    NaiveRatio fin{0, 0};
    for (const auto& r : results) {
      if (r.status() == RunStatus::Failed) continue;
      ++in.den;
      ++fin.den;
      if (r.traces().front().risk().sra_level() == level) ++in.num;
      if (r.traces().back().risk().sra_level() == level) ++fin.num;
    }
    o.sra_initial[level] = in;
    o.sra_final[level] = fin;
  }
  for (int p = 1; p <= 9; ++p) {
    NaiveMoments m;
    for (const auto& r : results) {
      if (r.query().principle().index() != p || r.status() != RunStatus::Converged) continue;
      const long long used = static_cast<long long>(r.traces().size());
      ++m.n;
      m.sum += used;
      m.sum_sq += used * used;
    }
    if (m.n > 0) o.per_principle[p] = m;
  }
  return o;
}

/// Lists every disagreement between a library report and the naive oracle.
/// Ratios compare bit-exactly; standard deviations compare through the
/// exact variance fraction with a 1e-12 relative tolerance for the sqrt.
inline std::vector<std::string> compare_with_oracle(const MetricsReport& m, const NaiveReport& o) {
  std::vector<std::string> diffs;
  auto check = [&diffs](bool ok, const std::string& what) {
    if (!ok) diffs.push_back(what);
  };
  auto same_opt = [](const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || *a == *b);
  };
  auto std_ok = [](double std, double variance) {
    return std::fabs(std * std - variance) <= 1e-12 * std::max(1.0, variance);
  };
  check(m.convergence_rate == *o.convergence.value(), "convergence_rate");
  check(m.converged == static_cast<std::size_t>(o.convergence.num), "converged count");
  check(m.histogram.non_convergent == static_cast<std::size_t>(o.non_convergent), "non_convergent");
  check(m.histogram.failed == static_cast<std::size_t>(o.failed), "failed");
  std::map<int, long long> hist;
  for (const auto& [k, v] : m.histogram.converged_at) hist[k] = static_cast<long long>(v);
  check(hist == o.converged_at, "histogram");
  if (o.iterations.n == 0) {
    check(!m.iterations.has_value(), "mean iterations present without converged queries");
  } else {
    check(m.iterations.has_value() && m.iterations->mean == o.iterations.mean(), "mean iterations");
    check(m.iterations.has_value() && std_ok(m.iterations->std, o.iterations.variance()),
          "iteration std");
  }
  if (o.before.den > 0) {
    check(m.overall_reduction.before_mean == *o.before.value(), "overall before");
    check(m.overall_reduction.after_mean == *o.after.value(), "overall after");
    std::optional<double> red;
    if (o.before.num > 0) {
      red = 100.0 * static_cast<double>(o.before.num - o.after.num) /
            static_cast<double>(o.before.num);
    }
    const auto got = m.overall_reduction.reduction_pct();
    check(got.has_value() == red.has_value() &&
              (!red || std::fabs(*got - *red) <= 1e-12 * std::max(1.0, std::fabs(*red))),
          "overall reduction pct");
  }
  check(m.per_risk_category.size() == o.per_category.size(), "category count");
  for (const auto& [c, g] : o.per_category) {
    auto it = m.per_risk_category.find(static_cast<RiskCategory>(c));
    check(it != m.per_risk_category.end() && it->second.before_mean == *g.first.value() &&
              it->second.after_mean == *g.second.value() &&
              it->second.count == static_cast<std::size_t>(g.first.den),
          fmt::format("category {} reduction", c));
  }
  check(m.unlabeled_excluded == static_cast<std::size_t>(o.unlabeled), "unlabeled count");
  check(same_opt(m.downgrade.rate(), o.downgrade.value()), "downgrade rate");
  check(m.downgrade.at_risk == static_cast<std::size_t>(o.downgrade.den), "at-risk count");
  if (o.before.den > 0) {
    for (int level = 1; level <= 5; ++level) {
      auto i = m.sra_initial.find(level);
      auto f = m.sra_final.find(level);
      check(i != m.sra_initial.end() && i->second == *o.sra_initial.at(level).value(),
            fmt::format("sra initial {}", level));
      check(f != m.sra_final.end() && f->second == *o.sra_final.at(level).value(),
            fmt::format("sra final {}", level));
    }
  }
  check(m.per_principle.size() == o.per_principle.size(), "principle count");
  for (const auto& [p, mom] : o.per_principle) {
    auto it = m.per_principle.find(AmaPrinciple::from_index(p));
    check(it != m.per_principle.end() && it->second.mean == mom.mean() &&
              std_ok(it->second.std, mom.variance()) &&
              it->second.count == static_cast<std::size_t>(mom.n),
          fmt::format("principle {} iterations", p));
  }
  return diffs;
}

/// Random result set of up to `max_size` queries: mixed outcomes including
/// infrastructure failures and unlabeled queries.
inline std::vector<QueryRunResult> random_result_set(std::mt19937_64& rng, std::size_t max_size,
                                                     std::size_t min_size = 1) {
  std::uniform_int_distribution<std::size_t> size(min_size, max_size);
  std::uniform_int_distribution<int> principle(1, 9);
  std::uniform_int_distribution<int> category(0, 4);
  const std::size_t n = size(rng);
  std::vector<Query> queries;
  std::vector<ScriptedTrajectory> scripts;
  for (std::size_t i = 0; i < n; ++i) {
    queries.emplace_back(fmt::format("r{}", i), "text", AmaPrinciple::from_index(principle(rng)),
                         static_cast<RiskCategory>(category(rng)));
    scripts.emplace_back(queries.back().id(), random_script(rng));
  }
  ScriptedFixture f{std::move(queries), std::make_shared<TrajectoryTable>(std::move(scripts))};
  return run_fixture(f);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             fmt::format("medsafe-test-{}-{}", name, static_cast<unsigned>(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace medsafe::testing
