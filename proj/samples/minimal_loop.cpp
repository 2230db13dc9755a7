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

// Runs the refinement loop over a handful of synthetic queries using the
// simulated evaluators and prints each query's score trajectory.

#include <iostream>
#include <memory>

#include <fmt/format.h>

#include "medsafe/medsafe.hpp"

int main() {
  using namespace medsafe;
  const auto params = SimulatorParams::r1_profile(7);
  LoopConfig config(ThresholdPolicy{}, std::make_shared<PlaceholderGenerator>(),
                    std::make_shared<SimulatedEvaluator>(EvaluatorRole::Ethics, params),
                    std::make_shared<SimulatedEvaluator>(EvaluatorRole::Risk, params));

  const auto dataset = synthetic_dataset(12);
  const auto results = run_dataset(dataset.queries(), config, RunOptions{});
  for (const auto& r : results) {
    std::string path;
    for (const auto& t : r.traces()) {
      path += fmt::format(" ({},{})", t.consensus().ama_score(), t.consensus().sra_level());
    }
    std::cout << fmt::format("{:<10} {:<12} {:<14}{}\n", r.query().id(),
                             to_string(r.query().risk_category()), to_string(r.status()), path);
  }
  const auto report = compute_report(results, ReportOptions{"simulated", false, false});
  std::cout << fmt::format("convergence {:.1f}%\n", 100.0 * report.convergence_rate);
}
