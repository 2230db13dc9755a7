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

#include <chrono>
#include <thread>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace medsafe {
namespace {

using testing::CountingGenerator;
using testing::make_fixture;
using testing::RecordingEvaluator;

QueryRunResult run_script(const std::vector<ScoreStep>& script) {
  auto f = make_fixture({script});
  return run_query(f.queries[0], *testing::scripted_config(f));
}

TEST(RunQuery, ConvergesImmediately) {
  auto r = run_script({{2, 2}});
  EXPECT_EQ(r.status(), RunStatus::Converged);
  EXPECT_EQ(r.iterations_used(), 1);
  EXPECT_FALSE(r.traces()[0].feedback().has_value());
}

TEST(RunQuery, ConvergesAtThirdIteration) {
  auto r = run_script({{5, 4}, {3, 3}, {2, 2}});
  EXPECT_EQ(r.status(), RunStatus::Converged);
  EXPECT_EQ(r.iterations_used(), 3);
  EXPECT_EQ(r.initial_ama(), 5);
  EXPECT_EQ(r.final_sra(), 2);
  // The plan produced at round k is persisted on trace k.
  ASSERT_TRUE(r.traces()[0].feedback().has_value());
  EXPECT_EQ(r.traces()[0].feedback()->source_consensus(), r.traces()[0].consensus());
  ASSERT_TRUE(r.traces()[1].feedback().has_value());
  EXPECT_FALSE(r.traces()[2].feedback().has_value());
}

TEST(RunQuery, NonConvergentAfterBudget) {
  auto r = run_script({{7, 5}, {6, 4}, {5, 4}, {4, 3}, {3, 3}});
  EXPECT_EQ(r.status(), RunStatus::NonConvergent);
  EXPECT_EQ(r.iterations_used(), 5);
  EXPECT_TRUE(r.traces()[0].mandatory_refinement());
  EXPECT_FALSE(r.traces()[4].feedback().has_value());
}

TEST(RunQuery, RespectsConfiguredBudget) {
  ThresholdPolicy p;
  p.max_iterations = 2;
  std::vector<ScriptedTrajectory> t;
  t.emplace_back("q-00000", std::vector<ScoreStep>{{5, 4}, {4, 4}}, 2);
  testing::ScriptedFixture f{{testing::make_query(0)}, std::make_shared<TrajectoryTable>(std::move(t))};
  auto r = run_query(f.queries[0], *testing::scripted_config(f, p));
  EXPECT_EQ(r.status(), RunStatus::NonConvergent);
  EXPECT_EQ(r.iterations_used(), 2);
}

TEST(RunQuery, AdapterErrorBecomesAgentFailureWithPartialTrace) {
  auto f = make_fixture({{{5, 4}, {4, 3}}});
  auto config = testing::scripted_config(f);
  try {
    (void)run_query(f.queries[0], *config);
    FAIL() << "expected AgentFailure";
  } catch (const AgentFailure& e) {
    EXPECT_EQ(e.partial_traces().size(), 2U);
    EXPECT_NE(std::string(e.what()).find("q-00000"), std::string::npos);
  }
}

TEST(MergeConsensus, EmptyMerge) {
  auto c = merge_consensus(EthicsAssessment(0, {}, {}), RiskAssessment(1, {}));
  EXPECT_EQ(c.ama_score(), 0);
  EXPECT_EQ(c.sra_level(), 1);
  EXPECT_TRUE(c.reasons().empty());
}

TEST(MergeConsensus, DeduplicatesEthicsFirst) {
  auto c = merge_consensus(EthicsAssessment(4, {}, {"diagnosis claim"}),
                           RiskAssessment(4, {"diagnosis claim", "dosage"}));
  EXPECT_EQ(c.ama_score(), 4);
  EXPECT_EQ(c.sra_level(), 4);
  EXPECT_EQ(c.reasons(), (std::vector<std::string>{"diagnosis claim", "dosage"}));
}

TEST(MergeConsensus, ConjunctionOfThresholds) {
  auto c = merge_consensus(EthicsAssessment(2, {}, {"r1"}), RiskAssessment(3, {"r2"}));
  EXPECT_FALSE(passes_thresholds(c, ThresholdPolicy{}));
}

TEST(MergeConsensus, OverlappingOutputsTakeConservativeMaximum) {
  Assessment e;
  e.ethics = EthicsAssessment(1, {}, {"e"});
  e.risk = RiskAssessment(4, {"e-risk"});
  Assessment r;
  r.risk = RiskAssessment(2, {"r"});
  r.ethics = EthicsAssessment(3, {AmaPrinciple::from_index(5)}, {"r-ethics"});
  auto c = merge_consensus(e, r);
  EXPECT_EQ(c.ama_score(), 3);
  EXPECT_EQ(c.sra_level(), 4);
  EXPECT_EQ(c.reasons(), (std::vector<std::string>{"e", "r-ethics", "e-risk", "r"}));
  EXPECT_EQ(c.violated_principles(), std::vector<AmaPrinciple>{AmaPrinciple::from_index(5)});
  Assessment missing;
  EXPECT_THROW(merge_consensus(missing, r), MalformedResponseError);
}

TEST(FeedbackPlan, ComposesDirectivesInOrder) {
  const ThresholdPolicy p;
  auto plan = build_feedback_plan(make_consensus(7, 5, {"step-by-step dosing"}), p);
  ASSERT_GE(plan.directives().size(), 3U);
  EXPECT_NE(plan.directives()[0].find("step-by-step dosing"), std::string::npos);
  EXPECT_NE(plan.directives()[1].find("refer"), std::string::npos);
  EXPECT_NE(plan.directives()[2].find("AMA Principles"), std::string::npos);
}

TEST(FeedbackPlan, EthicsOnlyBranch) {
  auto plan = build_feedback_plan(make_consensus(3, 1, {}), ThresholdPolicy{});
  ASSERT_EQ(plan.directives().size(), 1U);
  EXPECT_NE(plan.directives()[0].find("must be at most 2"), std::string::npos);
}

TEST(FeedbackPlan, NamesViolatedPrinciples) {
  ConsensusRecord c(4, 1, {}, {AmaPrinciple::from_index(4)});
  auto plan = build_feedback_plan(c, ThresholdPolicy{});
  EXPECT_NE(plan.directives().back().find("Patient Rights and Confidentiality"), std::string::npos);
}

TEST(FeedbackPlan, RejectsPassingConsensus) {
  EXPECT_THROW(build_feedback_plan(make_consensus(1, 1, {}), ThresholdPolicy{}), PreconditionError);
}

TEST(LoopConfig, RejectsWrongRoles) {
  auto f = make_fixture({{{1, 1}}});
  auto e = std::make_shared<ScriptedEvaluator>(EvaluatorRole::Ethics, f.table);
  auto r = std::make_shared<ScriptedEvaluator>(EvaluatorRole::Risk, f.table);
  auto g = std::make_shared<PlaceholderGenerator>();
  EXPECT_THROW(LoopConfig(ThresholdPolicy{}, g, e, e), ConfigError);
  EXPECT_THROW(LoopConfig(ThresholdPolicy{}, g, r, e), ConfigError);
  EXPECT_THROW(LoopConfig(ThresholdPolicy{}, nullptr, e, r), ConfigError);
  EXPECT_NO_THROW(LoopConfig(ThresholdPolicy{}, g, e, r));
}

TEST(RunDataset, WorkerCountDoesNotChangeResults) {
  auto f = make_fixture({{{5, 4}, {2, 2}}, {{1, 1}}, {{7, 5}, {6, 4}, {5, 4}, {4, 3}, {3, 3}}});
  auto one = testing::run_fixture(f, 1);
  auto three = testing::run_fixture(f, 3);
  ASSERT_EQ(one.size(), 3U);
  EXPECT_EQ(one, three);
  std::string a;
  std::string b;
  for (const auto& r : one) a += to_json(r).dump() + "\n";
  for (const auto& r : three) b += to_json(r).dump() + "\n";
  EXPECT_EQ(a, b);
}

TEST(RunDataset, EmptyDataset) {
  auto f = make_fixture({{{1, 1}}});
  EXPECT_TRUE(run_dataset({}, *testing::scripted_config(f)).empty());
}

/// Completes queries in reverse order to prove output order is input order.
class SlowFirstEvaluator final : public Evaluator {
 public:
  SlowFirstEvaluator(EvaluatorRole role, int ama, int sra) : role_(role), ama_(ama), sra_(sra) {}
  [[nodiscard]] EvaluatorRole role() const noexcept override { return role_; }
  Assessment assess(const ResponseDraft& r, const Query& q) override {
    const int pos = std::stoi(q.id().substr(2));
    std::this_thread::sleep_for(std::chrono::milliseconds(5 * (8 - pos)));
    Assessment a;
    if (role_ == EvaluatorRole::Ethics) {
      a.ethics = EthicsAssessment(ama_, {}, {r.text()});
    } else {
      a.risk = RiskAssessment(sra_, {});
    }
    return a;
  }

 private:
  EvaluatorRole role_;
  int ama_;
  int sra_;
};

TEST(RunDataset, OutputOrderEqualsInputOrder) {
  LoopConfig config(ThresholdPolicy{}, std::make_shared<PlaceholderGenerator>(),
                    std::make_shared<SlowFirstEvaluator>(EvaluatorRole::Ethics, 0, 1),
                    std::make_shared<SlowFirstEvaluator>(EvaluatorRole::Risk, 0, 1));
  std::vector<Query> qs;
  for (std::size_t i = 0; i < 8; ++i) qs.push_back(testing::make_query(i));
  RunOptions opts;
  opts.worker_limit = 8;
  auto results = run_dataset(qs, config, opts);
  ASSERT_EQ(results.size(), 8U);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(results[i].query().id(), qs[i].id());
}

TEST(RunDataset, FailuresAreRecordedNotDropped) {
  auto f = make_fixture({{{1, 1}}, {{5, 4}}, {{2, 2}}});
  auto results = testing::run_fixture(f, 2);
  ASSERT_EQ(results.size(), 3U);
  EXPECT_EQ(results[0].status(), RunStatus::Converged);
  EXPECT_EQ(results[1].status(), RunStatus::Failed);
  EXPECT_EQ(results[1].traces().size(), 1U);
  EXPECT_NE(results[1].failure().find("no step 2"), std::string::npos);
  EXPECT_EQ(results[2].status(), RunStatus::Converged);
}

TEST(RunDataset, StopRequestSkipsUnstartedQueries) {
  auto f = testing::histogram_fixture({10, 0, 0, 0, 0}, 0);
  auto config = testing::scripted_config(f);
  std::stop_source stop;
  struct StopAfterOne : RunObserver {
    std::stop_source* s;
    void on_result(std::size_t, const QueryRunResult&) override { s->request_stop(); }
  } observer;
  observer.s = &stop;
  RunOptions opts;
  opts.observer = &observer;
  opts.stop = stop.get_token();
  auto results = run_dataset(f.queries, *config, opts);
  EXPECT_EQ(results.size(), 1U);
}

TEST(RunDataset, ObserverSeesEveryTraceAndResult) {
  auto f = testing::histogram_fixture({3, 2, 1, 0, 0}, 1);
  struct Counter : RunObserver {
    std::atomic<int> traces{0};
    std::atomic<int> results{0};
    void on_trace(const Query&, const IterationTrace&) override { ++traces; }
    void on_result(std::size_t, const QueryRunResult&) override { ++results; }
  } counter;
  RunOptions opts;
  opts.worker_limit = 3;
  opts.observer = &counter;
  (void)run_dataset(f.queries, *testing::scripted_config(f), opts);
  EXPECT_EQ(counter.results.load(), 7);
  EXPECT_EQ(counter.traces.load(), 3 * 1 + 2 * 2 + 1 * 3 + 5);
}

TEST(EngineProperty, EvaluatorsSeeTheSameDraftAndCallCountsMatch) {
  std::mt19937_64 rng(21);
  for (int n = 0; n < 200; ++n) {
    auto script = testing::random_script(rng);
    auto f = make_fixture({script});
    auto gen = std::make_shared<CountingGenerator>();
    auto ethics = std::make_shared<RecordingEvaluator>(
        std::make_shared<ScriptedEvaluator>(EvaluatorRole::Ethics, f.table));
    auto risk = std::make_shared<RecordingEvaluator>(
        std::make_shared<ScriptedEvaluator>(EvaluatorRole::Risk, f.table));
    LoopConfig config(ThresholdPolicy{}, gen, ethics, risk);
    auto results = run_dataset(f.queries, config);
    ASSERT_EQ(results.size(), 1U);
    const auto& r = results[0];
    EXPECT_EQ(ethics->seen, risk->seen);
    EXPECT_EQ(gen->generates.load(), 1);
    EXPECT_EQ(gen->empty_plans.load(), 0);
    if (!r.failed()) {
      EXPECT_EQ(gen->refines.load(), r.iterations_used() - 1);
    } else {
      EXPECT_EQ(gen->refines.load(), static_cast<int>(r.traces().size()));
    }
  }
}

}  // namespace
}  // namespace medsafe
