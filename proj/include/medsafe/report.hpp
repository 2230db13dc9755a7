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

#include <charconv>
#include <map>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include <fmt/format.h>

#include "medsafe/metrics.hpp"
#include "medsafe/rubric.hpp"

namespace medsafe {

enum class ReportFormat { Markdown, Csv };

namespace detail {

/// Shortest representation that parses back to the same double.
inline std::string exact(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return fmt::format("{:.17g}", v);
  return std::string(buf, end);
}

inline std::string exact(const std::optional<double>& v) { return v ? exact(*v) : ""; }

inline std::string pct(double fraction, int decimals) {
  return fmt::format("{:.{}f}%", 100.0 * fraction, decimals);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

inline std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

inline std::string md_rule(std::size_t n) {
  std::string out = "|";
  for (std::size_t i = 0; i < n; ++i) out += "---|";
  return out + "\n";
}

inline std::string interpretation(int iteration, int last) {
  if (iteration == 1) return "Converged immediately";
  if (iteration == last) return "Converged at the iteration limit";
  if (iteration == 2) return "Converged after one revision";
  if (iteration == 3) return "Converged after standard refinement";
  return "Required multiple corrections";
}

inline int histogram_rows(const std::vector<const MetricsReport*>& runs, int budget) {
  int last = budget;
  for (const auto* r : runs) {
    if (!r->histogram.converged_at.empty()) last = std::max(last, r->histogram.converged_at.rbegin()->first);
  }
  return last;
}

inline std::size_t count_at(const MetricsReport& r, int it) {
  auto f = r.histogram.converged_at.find(it);
  return f == r.histogram.converged_at.end() ? 0 : f->second;
}

inline std::string count_pct(std::size_t count, std::size_t total) {
  return fmt::format("{} ({:.0f}%)", count, total == 0 ? 0.0 : 100.0 * count / total);
}

inline void require_runs(const std::vector<const MetricsReport*>& runs) {
  if (runs.empty()) throw ReportError("no metrics to report");
  for (const auto* r : runs) {
    if (r == nullptr || r->total == 0) throw ReportError("cannot report on a run with zero queries");
  }
}

}  // namespace detail

/// Markdown with five tables, an infrastructure-failures appendix and
/// interpretation notes. Two or more runs render side by side with the
/// velocity column in the violation-reduction table.
inline std::string emit_markdown(const std::vector<const MetricsReport*>& runs, int budget = 5) {
  using detail::md_row;
  using detail::md_rule;
  detail::require_runs(runs);
  const bool compare = runs.size() >= 2;
  std::string out;

  std::string title = runs[0]->label;
  for (std::size_t i = 1; i < runs.size(); ++i) title += " vs " + runs[i]->label;
  out += "# Safety refinement report: " + title + "\n\n";
  for (const auto* r : runs) {
    if (r->incomplete) {
      out += "> **INCOMPLETE RUN** (" + r->label + "): metrics cover the " +
             std::to_string(r->total) + " queries completed so far.\n\n";
    }
  }

  std::vector<std::string> header = {"Metric"};
  for (const auto* r : runs) header.push_back(r->label);

  // Table 1
  out += "## Table 1. Overall performance\n\n" + md_row(header) + md_rule(header.size());
  auto row1 = [&](const std::string& name, auto cell) {
    std::vector<std::string> cells = {name};
    for (const auto* r : runs) cells.push_back(cell(*r));
    out += md_row(cells);
  };
  row1("Convergence Rate", [](const MetricsReport& r) { return detail::pct(r.convergence_rate, 2); });
  row1("Mean Iterations", [](const MetricsReport& r) {
    return r.iterations ? fmt::format("{:.2f}", r.iterations->mean) : std::string("n/a");
  });
  row1("Std Dev", [](const MetricsReport& r) {
    return r.iterations ? fmt::format("{:.2f}", r.iterations->std) : std::string("n/a");
  });
  row1("Violation Reduction", [](const MetricsReport& r) {
    auto p = r.overall_reduction.reduction_pct();
    return p ? fmt::format("{:.2f}%", *p) : std::string("n/a");
  });
  row1("Risk Downgrade", [](const MetricsReport& r) {
    auto rate = r.downgrade.rate();
    return rate ? detail::pct(*rate, 2) : std::string("n/a");
  });
  out += "\n";

  // Table 2
  std::vector<std::string> h2 = {"Iterations"};
  for (const auto* r : runs) h2.push_back(r->label);
  h2.push_back("Interpretation");
  out += "## Table 2. Iteration requirements\n\n" + md_row(h2) + md_rule(h2.size());
  const int last = detail::histogram_rows(runs, budget);
  for (int it = 1; it <= last; ++it) {
    std::vector<std::string> cells = {std::to_string(it)};
    for (const auto* r : runs) cells.push_back(detail::count_pct(detail::count_at(*r, it), r->total));
    cells.push_back(detail::interpretation(it, last));
    out += md_row(cells);
  }
  {
    std::vector<std::string> conv = {"Converged"};
    std::vector<std::string> fail = {"Failed"};
    for (const auto* r : runs) {
      conv.push_back(detail::count_pct(r->converged, r->total));
      fail.push_back(detail::count_pct(r->histogram.non_convergent, r->total));
    }
    conv.push_back("Met thresholds");
    fail.push_back("Did not meet thresholds");
    out += md_row(conv) + md_row(fail);
  }
  out += "\n";

  // Table 3
  std::vector<std::string> h3 = {"Principle"};
  for (const auto* r : runs) h3.push_back(r->label);
  out += "## Table 3. Iterations by AMA principle\n\n" + md_row(h3) + md_rule(h3.size());
  for (auto p : AmaPrinciple::all()) {
    std::vector<std::string> cells = {std::string(p.roman()) + ". " + std::string(p.short_label())};
    for (const auto* r : runs) {
      auto it = r->per_principle.find(p);
      cells.push_back(it == r->per_principle.end()
                          ? std::string("n/a")
                          : fmt::format("{:.1f}±{:.1f}", it->second.mean, it->second.std));
    }
    out += md_row(cells);
  }
  {
    std::vector<std::string> cells = {"**Overall**"};
    for (const auto* r : runs) {
      cells.push_back(r->iterations
                          ? fmt::format("**{:.2f}±{:.2f}**", r->iterations->mean, r->iterations->std)
                          : std::string("n/a"));
    }
    out += md_row(cells);
  }
  out += "\n";

  // Table 4
  std::vector<std::string> h4 = {"Category"};
  for (const auto* r : runs) h4.push_back(r->label + " before and after");
  for (const auto* r : runs) h4.push_back(r->label + " reduction");
  std::map<RiskCategory, double> vel;
  if (compare) {
    std::vector<GeneratorSummary> gens;
    for (const auto* r : runs) gens.push_back(r->generator_summary());
    vel = velocity(gens);
    h4.push_back("Velocity");
  }
  out += "## Table 4. Violation reduction by risk category\n\n" + md_row(h4) + md_rule(h4.size());
  for (auto c : kLabeledRiskCategories) {
    std::vector<std::string> cells = {std::string(to_string(c))};
    for (const auto* r : runs) {
      auto it = r->per_risk_category.find(c);
      cells.push_back(it == r->per_risk_category.end()
                          ? std::string("n/a")
                          : fmt::format("{:.1f} to {:.1f}", it->second.before_mean,
                                        it->second.after_mean));
    }
    for (const auto* r : runs) {
      auto it = r->per_risk_category.find(c);
      std::optional<double> p;
      if (it != r->per_risk_category.end()) p = it->second.reduction_pct();
      cells.push_back(p ? fmt::format("{:.1f}%", *p) : std::string("n/a"));
    }
    if (compare) {
      auto it = vel.find(c);
      cells.push_back(it == vel.end() ? std::string("n/a") : fmt::format("{:.2f}", it->second));
    }
    out += md_row(cells);
  }
  for (const auto* r : runs) {
    if (r->unlabeled_excluded > 0) {
      out += "\n" + std::to_string(r->unlabeled_excluded) + " unlabeled queries of " + r->label +
             " are excluded from this table.\n";
    }
  }
  out += "\n";

  // Table 5
  std::vector<std::string> h5 = {"Level"};
  for (const auto* r : runs) {
    h5.push_back(r->label + " initial");
    h5.push_back(r->label + " final");
  }
  out += "## Table 5. SRA-5 risk distribution\n\n" + md_row(h5) + md_rule(h5.size());
  for (const auto& d : kSraLevels) {
    std::vector<std::string> cells = {std::to_string(d.level) + " (" + std::string(d.name) + ")"};
    for (const auto* r : runs) {
      for (const auto* dist : {&r->sra_initial, &r->sra_final}) {
        auto it = dist->find(d.level);
        cells.push_back(it == dist->end() ? std::string("n/a") : detail::pct(it->second, 0));
      }
    }
    out += md_row(cells);
  }
  out += "\n";

  out += "## Appendix. Infrastructure failures\n\n";
  for (const auto* r : runs) {
    out += r->label + ": " + std::to_string(r->failures.size()) + " queries failed for infrastructure reasons";
    out += r->failures.empty() ? ".\n" : ":\n";
    for (const auto& [id, why] : r->failures) out += "- `" + id + "`: " + why + "\n";
  }
  out += "\n";

  out += "## Notes\n\n";
  for (const auto* r : runs) {
    out += "- " + r->label + ": mean iterations " +
           (r->mean_includes_failures ? "counts non-convergent queries at the iteration budget"
                                      : "is taken over converged queries only") +
           "; standard deviations are population values.\n";
    out += "- " + r->label + ": risk downgrade rate = " + std::to_string(r->downgrade.downgraded) +
           " downgraded / " + std::to_string(r->downgrade.at_risk) +
           " at-risk queries (initial level 3 or higher)";
    const std::size_t scored = r->total - r->histogram.failed;
    if (scored > 0) {
      out += "; over all " + std::to_string(scored) + " scored queries it would be " +
             detail::pct(static_cast<double>(r->downgrade.downgraded) / static_cast<double>(scored), 2);
    }
    out += ".\n";
  }
  out += "- Overall violation reduction pools every scored query, i.e. category means weighted by "
         "category size.\n";
  if (compare) {
    out += "- Velocity is a derived interpretation: per category, (before mean - after mean) / "
           "mean iterations, averaged over the compared runs.\n";
  }
  return out;
}

inline std::string emit_markdown(const MetricsReport& report, int budget = 5) {
  return emit_markdown(std::vector<const MetricsReport*>{&report}, budget);
}

/// One CSV document per table, keyed by file name. Numbers are written in
/// shortest round-trip form; fractions rather than percentages.
inline std::map<std::string, std::string> emit_csv(const std::vector<const MetricsReport*>& runs,
                                                   int budget = 5) {
  using detail::csv_row;
  using detail::exact;
  detail::require_runs(runs);
  std::map<std::string, std::string> files;

  std::string t1 = csv_row({"run", "total", "converged", "convergence_rate", "mean_iterations",
                            "std_dev", "violation_reduction_pct", "risk_downgrade_rate"});
  for (const auto* r : runs) {
    t1 += csv_row({r->label, std::to_string(r->total), std::to_string(r->converged),
                   exact(r->convergence_rate),
                   r->iterations ? exact(r->iterations->mean) : "",
                   r->iterations ? exact(r->iterations->std) : "",
                   exact(r->overall_reduction.reduction_pct()), exact(r->downgrade.rate())});
  }
  files["table1_overall.csv"] = t1;

  std::string t2 = csv_row({"run", "iterations", "count", "fraction"});
  const int last = detail::histogram_rows(runs, budget);
  for (const auto* r : runs) {
    const double n = static_cast<double>(r->total);
    for (int it = 1; it <= last; ++it) {
      const auto c = detail::count_at(*r, it);
      t2 += csv_row({r->label, std::to_string(it), std::to_string(c), exact(c / n)});
    }
    t2 += csv_row({r->label, "converged", std::to_string(r->converged), exact(r->converged / n)});
    t2 += csv_row({r->label, "non_convergent", std::to_string(r->histogram.non_convergent),
                   exact(r->histogram.non_convergent / n)});
    t2 += csv_row({r->label, "infrastructure_failed", std::to_string(r->histogram.failed),
                   exact(r->histogram.failed / n)});
  }
  files["table2_iterations.csv"] = t2;

  std::string t3 = csv_row({"run", "principle", "mean", "std", "count"});
  for (const auto* r : runs) {
    for (const auto& [p, ms] : r->per_principle) {
      t3 += csv_row({r->label, std::string(p.roman()), exact(ms.mean), exact(ms.std),
                     std::to_string(ms.count)});
    }
  }
  files["table3_principles.csv"] = t3;

  std::map<RiskCategory, double> vel;
  if (runs.size() >= 2) {
    std::vector<GeneratorSummary> gens;
    for (const auto* r : runs) gens.push_back(r->generator_summary());
    vel = velocity(gens);
  }
  std::string t4 = csv_row({"run", "category", "before_mean", "after_mean", "reduction_pct",
                            "count", "velocity"});
  for (const auto* r : runs) {
    for (const auto& [c, g] : r->per_risk_category) {
      auto v = vel.find(c);
      t4 += csv_row({r->label, std::string(to_string(c)), exact(g.before_mean),
                     exact(g.after_mean), exact(g.reduction_pct()), std::to_string(g.count),
                     v == vel.end() ? "" : exact(v->second)});
    }
  }
  files["table4_violation_reduction.csv"] = t4;

  std::string t5 = csv_row({"run", "level", "initial", "final"});
  for (const auto* r : runs) {
    for (int level = kMinSra; level <= kMaxSra; ++level) {
      auto i = r->sra_initial.find(level);
      auto f = r->sra_final.find(level);
      t5 += csv_row({r->label, std::to_string(level),
                     i == r->sra_initial.end() ? "" : exact(i->second),
                     f == r->sra_final.end() ? "" : exact(f->second)});
    }
  }
  files["table5_sra_distribution.csv"] = t5;

  std::string fail = csv_row({"run", "query_id", "failure"});
  for (const auto* r : runs) {
    for (const auto& [id, why] : r->failures) fail += csv_row({r->label, id, why});
  }
  files["failures.csv"] = fail;
  return files;
}

inline std::map<std::string, std::string> emit_csv(const MetricsReport& report, int budget = 5) {
  return emit_csv(std::vector<const MetricsReport*>{&report}, budget);
}

/// Flat key=value record for CI assertions; stable key order.
inline std::string emit_summary(const MetricsReport& r) {
  using detail::exact;
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  kv("label", r.label);
  kv("incomplete", r.incomplete ? "true" : "false");
  kv("total", std::to_string(r.total));
  kv("converged", std::to_string(r.converged));
  kv("non_convergent", std::to_string(r.histogram.non_convergent));
  kv("infrastructure_failed", std::to_string(r.histogram.failed));
  kv("convergence_rate", exact(r.convergence_rate));
  kv("mean_iterations", r.iterations ? exact(r.iterations->mean) : "");
  kv("iteration_std", r.iterations ? exact(r.iterations->std) : "");
  for (const auto& [it, c] : r.histogram.converged_at) {
    kv("converged_at_" + std::to_string(it), std::to_string(c));
  }
  kv("ama_before_mean", exact(r.overall_reduction.before_mean));
  kv("ama_after_mean", exact(r.overall_reduction.after_mean));
  kv("violation_reduction_pct", exact(r.overall_reduction.reduction_pct()));
  kv("at_risk", std::to_string(r.downgrade.at_risk));
  kv("downgraded", std::to_string(r.downgrade.downgraded));
  kv("risk_downgrade_rate", exact(r.downgrade.rate()));
  for (const auto& [l, f] : r.sra_initial) kv("sra_initial_" + std::to_string(l), exact(f));
  for (const auto& [l, f] : r.sra_final) kv("sra_final_" + std::to_string(l), exact(f));
  for (const auto& [c, g] : r.per_risk_category) {
    const std::string k = std::string(to_string(c));
    kv("category_" + k + "_before", exact(g.before_mean));
    kv("category_" + k + "_after", exact(g.after_mean));
  }
  kv("unlabeled_excluded", std::to_string(r.unlabeled_excluded));
  for (const auto& [p, ms] : r.per_principle) {
    const std::string k = "principle_" + std::string(p.roman());
    kv(k + "_mean", exact(ms.mean));
    kv(k + "_std", exact(ms.std));
  }
  return out;
}

}  // namespace medsafe
