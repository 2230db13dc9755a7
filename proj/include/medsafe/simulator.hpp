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
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medsafe/agents.hpp"
#include "medsafe/domain.hpp"
#include "medsafe/errors.hpp"
#include "medsafe/scripted.hpp"

namespace medsafe {

/// Finite distribution over integer outcomes (scores or score deltas).
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  explicit DiscreteDistribution(std::vector<std::pair<int, double>> masses)
      : masses_(std::move(masses)) {
    std::sort(masses_.begin(), masses_.end());
    double total = 0.0;
    for (std::size_t i = 0; i < masses_.size(); ++i) {
      if (i > 0 && masses_[i].first == masses_[i - 1].first) {
        throw RangeError("distribution lists outcome " + std::to_string(masses_[i].first) +
                         " twice");
      }
      if (!(masses_[i].second >= 0.0)) throw RangeError("distribution mass must be >= 0");
      total += masses_[i].second;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw RangeError("distribution masses sum to " + std::to_string(total) + ", not 1");
    }
  }

  /// Masses for outcomes first, first+1, ...; normalized to sum to one.
  static DiscreteDistribution from_weights(int first, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw RangeError("distribution weights must have positive sum");
    std::vector<std::pair<int, double>> m;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      m.emplace_back(first + static_cast<int>(i), weights[i] / total);
    }
    return DiscreteDistribution(std::move(m));
  }

  static DiscreteDistribution point(int outcome) { return DiscreteDistribution({{outcome, 1.0}}); }

  /// Binomial(n, mean/n) over 0..n; used to center initial AMA scores.
  static DiscreteDistribution binomial_with_mean(int n, double mean) {
    const double p = std::clamp(mean / n, 0.0, 1.0);
    std::vector<double> w;
    for (int k = 0; k <= n; ++k) {
      double c = 1.0;
      for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
      w.push_back(c * std::pow(p, k) * std::pow(1.0 - p, n - k));
    }
    return from_weights(0, w);
  }

  /// Inverse-CDF lookup for u in [0, 1).
  [[nodiscard]] int sample(double u) const {
    double acc = 0.0;
    for (const auto& [value, mass] : masses_) {
      acc += mass;
      if (u < acc) return value;
    }
    // u beyond the accumulated total (rounding): last outcome with mass.
    for (auto it = masses_.rbegin(); it != masses_.rend(); ++it) {
      if (it->second > 0.0) return it->first;
    }
    return masses_.back().first;
  }

  [[nodiscard]] double mean() const {
    double m = 0.0;
    for (const auto& [v, p] : masses_) m += v * p;
    return m;
  }

  [[nodiscard]] const std::vector<std::pair<int, double>>& masses() const noexcept {
    return masses_;
  }

  friend bool operator==(const DiscreteDistribution&, const DiscreteDistribution&) = default;

 private:
  std::vector<std::pair<int, double>> masses_;
};

struct CategorySimParams {
  DiscreteDistribution initial_ama;  // over 0..9
  DiscreteDistribution initial_sra;  // over 1..5
  DiscreteDistribution ama_delta;    // per-iteration change, mostly <= 0
  DiscreteDistribution sra_delta;

  friend bool operator==(const CategorySimParams&, const CategorySimParams&) = default;
};

/// Seeded stochastic stand-in for real agents.
struct SimulatorParams {
  std::map<RiskCategory, CategorySimParams> categories;
  std::uint64_t rng_seed = 0;
  /// Probability that a query's SRA draw reuses its AMA uniform, so ethics
  /// and risk scores move together. Marginals are unchanged.
  double coupling = 0.0;

  void validate() const {
    if (categories.empty()) throw RangeError("simulator needs at least one category");
    if (!(coupling >= 0.0 && coupling <= 1.0)) throw RangeError("coupling must be in [0, 1]");
    for (const auto& [cat, p] : categories) {
      for (const auto& [v, m] : p.initial_ama.masses()) {
        if (m > 0.0 && (v < kMinAma || v > kMaxAma)) {
          throw RangeError("initial AMA distribution for " + std::string(to_string(cat)) +
                           " has support outside [0, 9]");
        }
      }
      for (const auto& [v, m] : p.initial_sra.masses()) {
        if (m > 0.0 && (v < kMinSra || v > kMaxSra)) {
          throw RangeError("initial SRA distribution for " + std::string(to_string(cat)) +
                           " has support outside [1, 5]");
        }
      }
      if (p.ama_delta.masses().empty() || p.sra_delta.masses().empty()) {
        throw RangeError("delta distributions must be nonempty");
      }
    }
  }

  /// Parameters for a category; Unlabeled or missing categories use
  /// Diagnostic, else the first configured category.
  [[nodiscard]] const CategorySimParams& for_category(RiskCategory c) const {
    if (auto it = categories.find(c); it != categories.end()) return it->second;
    if (auto it = categories.find(RiskCategory::Diagnostic); it != categories.end()) {
      return it->second;
    }
    return categories.begin()->second;
  }

  /// Reasoning-oriented generator profile (faster convergence).
  static SimulatorParams r1_profile(std::uint64_t seed = 0) {
    return make_profile(seed, 0.8, {4.8, 3.2, 2.9, 1.8}, {12, 18, 35, 28, 7},
                        {{-5, 0.08}, {-4, 0.16}, {-3, 0.24}, {-2, 0.22}, {-1, 0.12}, {0, 0.12}, {1, 0.06}},
                        {{-3, 0.14}, {-2, 0.32}, {-1, 0.26}, {0, 0.20}, {1, 0.08}});
  }

  /// Domain-trained generator profile (slower convergence).
  static SimulatorParams mp_profile(std::uint64_t seed = 0) {
    return make_profile(seed, 0.55, {5.1, 3.4, 3.1, 1.6}, {10, 20, 38, 25, 7},
                        {{-5, 0.06}, {-4, 0.13}, {-3, 0.22}, {-2, 0.23}, {-1, 0.15}, {0, 0.14}, {1, 0.07}},
                        {{-3, 0.11}, {-2, 0.29}, {-1, 0.27}, {0, 0.23}, {1, 0.10}});
  }

  /// Every query scores (ama, sra) at every iteration.
  static SimulatorParams constant(int ama, int sra, std::uint64_t seed = 0) {
    CategorySimParams p{DiscreteDistribution::point(ama), DiscreteDistribution::point(sra),
                        DiscreteDistribution::point(0), DiscreteDistribution::point(0)};
    SimulatorParams out;
    out.rng_seed = seed;
    for (auto c : kLabeledRiskCategories) out.categories.emplace(c, p);
    return out;
  }

 private:
  static SimulatorParams make_profile(std::uint64_t seed, double coupling, const std::vector<double>& ama_means,
                                      const std::vector<double>& sra_weights,
                                      std::vector<std::pair<int, double>> ama_delta,
                                      std::vector<std::pair<int, double>> sra_delta) {
    SimulatorParams out;
    out.rng_seed = seed;
    out.coupling = coupling;
    for (std::size_t i = 0; i < kLabeledRiskCategories.size(); ++i) {
      out.categories.emplace(
          kLabeledRiskCategories[i],
          CategorySimParams{DiscreteDistribution::binomial_with_mean(kMaxAma, ama_means[i]),
                            DiscreteDistribution::from_weights(kMinSra, sra_weights),
                            DiscreteDistribution(ama_delta), DiscreteDistribution(sra_delta)});
    }
    return out;
  }
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent engine for one (seed, query, iteration) triple.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view query_id, int iteration) {
  const std::uint64_t h = fnv1a64(query_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(iteration)};
  return std::mt19937_64(seq);
}

inline double unit_draw(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Scores the simulator assigns to `query` at `iteration`. Iteration 1 draws
/// from the initial distributions; later iterations add a sampled delta to
/// the previous scores and clamp. Depends only on (seed, query id, iteration).
inline ScoreStep simulate_scores(const SimulatorParams& params, const Query& query, int iteration) {
  if (iteration < 1) throw RangeError("iteration must be >= 1");
  const auto& p = params.for_category(query.risk_category());
  const auto draws = [&](int k) {
    auto eng = detail::substream(params.rng_seed, query.id(), k);
    const double u_ama = detail::unit_draw(eng);
    const double u_sra = detail::unit_draw(eng);
    const bool coupled = detail::unit_draw(eng) < params.coupling;
    return std::pair{u_ama, coupled ? u_ama : u_sra};
  };
  const auto [a0, r0] = draws(1);
  ScoreStep s{std::clamp(p.initial_ama.sample(a0), kMinAma, kMaxAma),
              std::clamp(p.initial_sra.sample(r0), kMinSra, kMaxSra)};
  for (int k = 2; k <= iteration; ++k) {
    const auto [a, r] = draws(k);
    s.ama = std::clamp(s.ama + p.ama_delta.sample(a), kMinAma, kMaxAma);
    s.sra = std::clamp(s.sra + p.sra_delta.sample(r), kMinSra, kMaxSra);
  }
  return s;
}

inline Assessment simulate_assess(const SimulatorParams& params, const Query& query,
                                  int iteration, EvaluatorRole role) {
  const auto s = simulate_scores(params, query, iteration);
  Assessment a;
  if (role == EvaluatorRole::Ethics) {
    std::vector<AmaPrinciple> violated;
    std::vector<std::string> reasons;
    if (s.ama > 0) {
      violated.push_back(query.principle());
      reasons.push_back("simulated violation of principle " + std::string(query.principle().roman()));
    }
    a.ethics = EthicsAssessment(s.ama, std::move(violated), std::move(reasons));
  } else {
    std::vector<std::string> reasons;
    if (s.sra > 2) reasons.push_back("simulated " + std::string(to_string(query.risk_category())) +
                                     " risk at level " + std::to_string(s.sra));
    a.risk = RiskAssessment(s.sra, std::move(reasons));
  }
  return a;
}

class SimulatedEvaluator final : public Evaluator {
 public:
  SimulatedEvaluator(EvaluatorRole role, SimulatorParams params)
      : role_(role), params_(std::move(params)) {
    params_.validate();
  }

  [[nodiscard]] EvaluatorRole role() const noexcept override { return role_; }

  Assessment assess(const ResponseDraft& response, const Query& query) override {
    return simulate_assess(params_, query, response.iteration(), role_);
  }

 private:
  EvaluatorRole role_;
  SimulatorParams params_;
};

}  // namespace medsafe
