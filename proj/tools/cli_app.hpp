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

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "medsafe/medsafe.hpp"
#include "medsafe/remote.hpp"

namespace medsafe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

namespace fs = std::filesystem;

struct AgentSpec {
  std::string role;     // generator | ethics | risk
  std::string backend;  // remote | scripted | simulate
  nlohmann::json settings;
};

/// Parsed run configuration file. Paths are already resolved against the
/// directory holding the file.
struct RunConfigFile {
  fs::path source;
  std::string label = "run";
  ThresholdPolicy policy;
  std::vector<AgentSpec> agents;
  std::size_t worker_limit = 1;
  std::uint64_t rng_seed = 0;
  std::string dataset;
  std::string output_dir;
  std::optional<nlohmann::json> simulator;
  bool parallel_assess = true;
  std::optional<std::size_t> failure_budget;
  bool mean_includes_failures = false;
};

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).lexically_normal().string();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void check_roles(const std::vector<AgentSpec>& agents) {
  std::map<std::string, int> count;
  for (const auto& a : agents) {
    if (a.role != "generator" && a.role != "ethics" && a.role != "risk") {
      throw ConfigError("role validation: unknown agent role '" + a.role + "'");
    }
    ++count[a.role];
  }
  for (const char* role : {"generator", "ethics", "risk"}) {
    if (count[role] != 1) {
      throw ConfigError(fmt::format(
          "role validation: expected exactly one {} agent, found {} (configure one generator, "
          "one ethics evaluator and one risk evaluator)",
          role, count[role]));
    }
  }
}

inline RunConfigFile parse_config(const nlohmann::json& j, const fs::path& source) {
  RunConfigFile c;
  c.source = source;
  const fs::path base = source.has_parent_path() ? source.parent_path() : fs::path(".");
  try {
    c.label = j.value("label", c.label);
    if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
    c.worker_limit = j.value("worker_limit", c.worker_limit);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.dataset = resolve(base, j.value("dataset", std::string()));
    c.output_dir = resolve(base, j.value("output_dir", std::string()));
    c.parallel_assess = j.value("parallel_assess", c.parallel_assess);
    c.mean_includes_failures = j.value("mean_includes_failures", c.mean_includes_failures);
    if (j.contains("failure_budget")) c.failure_budget = j.at("failure_budget").get<std::size_t>();
    if (j.contains("simulator")) c.simulator = j.at("simulator");
    for (const auto& a : j.at("agents")) {
      AgentSpec spec{a.at("role").get<std::string>(), a.at("backend").get<std::string>(), a};
      for (const char* key : {"trajectories", "generate_template", "refine_template", "template"}) {
        if (spec.settings.contains(key)) {
          spec.settings[key] = resolve(base, spec.settings[key].get<std::string>());
        }
      }
      c.agents.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid configuration " + source.string() + ": " + e.what());
  } catch (const RangeError& e) {
    throw ConfigError("invalid configuration " + source.string() + ": " + e.what());
  }
  check_roles(c.agents);
  return c;
}

inline RunConfigFile load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("configuration " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path);
}

inline DiscreteDistribution distribution_from_json(const nlohmann::json& j, int first) {
  if (j.is_array()) return DiscreteDistribution::from_weights(first, j.get<std::vector<double>>());
  std::vector<std::pair<int, double>> masses;
  for (const auto& [k, v] : j.items()) masses.emplace_back(std::stoi(k), v.get<double>());
  return DiscreteDistribution(std::move(masses));
}

/// {"profile": "r1"|"mp"|"constant", ...} with optional per-category
/// overrides {"categories": {"Emergency": {"initial_ama": [...], ...}}}.
inline SimulatorParams simulator_from_json(const nlohmann::json& j, std::uint64_t seed) {
  try {
    const auto profile = j.value("profile", std::string("r1"));
    SimulatorParams p;
    if (profile == "r1") {
      p = SimulatorParams::r1_profile(seed);
    } else if (profile == "mp") {
      p = SimulatorParams::mp_profile(seed);
    } else if (profile == "constant") {
      p = SimulatorParams::constant(j.at("ama").get<int>(), j.at("sra").get<int>(), seed);
    } else {
      throw ConfigError("unknown simulator profile '" + profile + "'");
    }
    if (j.contains("coupling")) p.coupling = j.at("coupling").get<double>();
    if (j.contains("categories")) {
      for (const auto& [name, cj] : j.at("categories").items()) {
        auto cat = parse_risk_category(name);
        if (!cat) throw ConfigError("unknown risk category '" + name + "' in simulator");
        auto cp = p.for_category(*cat);
        if (cj.contains("initial_ama")) cp.initial_ama = distribution_from_json(cj.at("initial_ama"), 0);
        if (cj.contains("initial_sra")) cp.initial_sra = distribution_from_json(cj.at("initial_sra"), 1);
        if (cj.contains("ama_delta")) cp.ama_delta = distribution_from_json(cj.at("ama_delta"), 0);
        if (cj.contains("sra_delta")) cp.sra_delta = distribution_from_json(cj.at("sra_delta"), 0);
        p.categories[*cat] = cp;
      }
    }
    p.validate();
    return p;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid simulator section: ") + e.what());
  }
}

inline EndpointConfig endpoint_from_json(const nlohmann::json& j) {
  EndpointConfig e;
  try {
    e.base_url = j.at("base_url").get<std::string>();
    e.path = j.value("path", e.path);
    e.auth_env = j.value("auth_env", e.auth_env);
    e.model = j.value("model", e.model);
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      e.sampling.temperature = s.value("temperature", e.sampling.temperature);
      e.sampling.top_p = s.value("top_p", e.sampling.top_p);
      e.sampling.max_tokens = s.value("max_tokens", e.sampling.max_tokens);
    }
    e.max_attempts = j.value("max_attempts", e.max_attempts);
    e.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 500));
    e.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    e.malformed_retries = j.value("malformed_retries", e.malformed_retries);
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    e.validate();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("invalid endpoint: ") + ex.what());
  } catch (const RangeError& ex) {
    throw ConfigError(std::string("invalid endpoint: ") + ex.what());
  }
  return e;
}

/// Loop wiring plus the canonical content the config digest covers.
struct Wiring {
  std::shared_ptr<LoopConfig> loop;
  nlohmann::ordered_json digest_content;
};

inline Wiring build_wiring(const RunConfigFile& c) {
  std::shared_ptr<Generator> generator;
  std::shared_ptr<Evaluator> ethics;
  std::shared_ptr<Evaluator> risk;
  std::shared_ptr<const TrajectoryTable> trajectories;
  std::optional<SimulatorParams> sim;

  nlohmann::ordered_json digest;
  digest["policy"] = to_json(c.policy);
  digest["rng_seed"] = c.rng_seed;
  auto agents = nlohmann::ordered_json::array();

  for (const auto& a : c.agents) {
    nlohmann::ordered_json entry = {{"role", a.role}, {"backend", a.backend}};
    if (a.backend == "scripted") {
      if (a.role != "generator") {
        const auto path = a.settings.at("trajectories").get<std::string>();
        entry["trajectories_digest"] = sha256_hex(read_file(path));
        try {
          auto table = std::make_shared<const TrajectoryTable>(
              TrajectoryTable::load(path, c.policy.max_iterations));
          if (a.role == "ethics") {
            ethics = std::make_shared<ScriptedEvaluator>(EvaluatorRole::Ethics, table);
          } else {
            risk = std::make_shared<ScriptedEvaluator>(EvaluatorRole::Risk, table);
          }
        } catch (const ParseError& e) {
          throw ConfigError("trajectory file " + path + ": " + e.what());
        } catch (const RangeError& e) {
          throw ConfigError("trajectory file " + path + ": " + e.what());
        }
      } else {
        generator = std::make_shared<PlaceholderGenerator>();
      }
    } else if (a.backend == "simulate") {
      if (a.role == "generator") {
        generator = std::make_shared<PlaceholderGenerator>();
      } else {
        if (!c.simulator) throw ConfigError("simulate backend needs a 'simulator' section");
        if (!sim) sim = simulator_from_json(*c.simulator, c.rng_seed);
        entry["simulator"] = *c.simulator;
        const auto role = a.role == "ethics" ? EvaluatorRole::Ethics : EvaluatorRole::Risk;
        (a.role == "ethics" ? ethics : risk) = std::make_shared<SimulatedEvaluator>(role, *sim);
      }
    } else if (a.backend == "remote") {
      auto endpoint = endpoint_from_json(a.settings.at("endpoint"));
      nlohmann::ordered_json ep = {{"base_url", endpoint.base_url},
                                   {"path", endpoint.path},
                                   {"model", endpoint.model},
                                   {"temperature", endpoint.sampling.temperature},
                                   {"top_p", endpoint.sampling.top_p},
                                   {"max_tokens", endpoint.sampling.max_tokens}};
      auto client = std::make_shared<ChatClient>(endpoint);
      auto tpl = [&](const char* key, PromptTemplate fallback) {
        if (!a.settings.contains(key)) return fallback;
        auto text = read_file(a.settings.at(key).get<std::string>());
        ep[std::string(key) + "_digest"] = sha256_hex(text);
        return PromptTemplate(text);
      };
      if (a.role == "generator") {
        generator = std::make_shared<RemoteGenerator>(
            client, tpl("generate_template", default_generate_template()),
            tpl("refine_template", default_refine_template()));
      } else {
        const auto role = a.role == "ethics" ? EvaluatorRole::Ethics : EvaluatorRole::Risk;
        auto ev = std::make_shared<RemoteEvaluator>(role, client,
                                                    tpl("template", default_assess_template()), c.policy);
        (a.role == "ethics" ? ethics : risk) = std::move(ev);
      }
      entry["endpoint"] = std::move(ep);
    } else {
      throw ConfigError("unknown backend '" + a.backend + "' for role " + a.role);
    }
    agents.push_back(std::move(entry));
  }
  digest["agents"] = std::move(agents);
  return {std::make_shared<LoopConfig>(c.policy, generator, ethics, risk, c.parallel_assess),
          std::move(digest)};
}

inline std::string dataset_digest(const Dataset& ds) {
  std::ostringstream ss;
  ds.write(ss);
  return sha256_hex(ss.str());
}

inline std::string config_digest(const Wiring& w, const Dataset& ds) {
  auto content = w.digest_content;
  content["dataset_digest"] = dataset_digest(ds);
  return sha256_hex(content.dump());
}

/// Maps positions within a pending subset back to dataset positions.
class PositionMapper final : public RunObserver {
 public:
  PositionMapper(RunObserver& inner, std::vector<std::size_t> positions, std::size_t stop_after,
                 std::stop_source stop)
      : inner_(inner), positions_(std::move(positions)), stop_after_(stop_after), stop_(std::move(stop)) {}

  void on_trace(const Query& q, const IterationTrace& t) override { inner_.on_trace(q, t); }
  void on_result(std::size_t index, const QueryRunResult& r) override {
    inner_.on_result(positions_.at(index), r);
    if (stop_after_ > 0 && ++finished_ >= stop_after_) stop_.request_stop();
  }

 private:
  RunObserver& inner_;
  std::vector<std::size_t> positions_;
  std::size_t stop_after_;
  std::atomic<std::size_t> finished_{0};
  std::stop_source stop_;
};

/// Knobs the CLI exposes as flags; unset fields keep config-file values.
struct RunOverrides {
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> dataset;
  std::optional<std::string> label;
  bool mean_includes_failures = false;
};

inline void apply_overrides(RunConfigFile& c, const RunOverrides& o) {
  if (o.workers) c.worker_limit = *o.workers;
  if (o.seed) c.rng_seed = *o.seed;
  if (o.output) c.output_dir = *o.output;
  if (o.dataset) c.dataset = *o.dataset;
  if (o.label) c.label = *o.label;
  if (o.mean_includes_failures) c.mean_includes_failures = true;
}

struct RunOutcome {
  bool interrupted = false;
  std::size_t executed = 0;
  std::size_t failed = 0;
  fs::path run_dir;
};

inline std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

/// Writes report.md, the csv tables and summary.kv under `<run_dir>/report`.
inline MetricsReport write_reports(const fs::path& run_dir, bool mean_includes_failures,
                                   std::ostream& out) {
  const auto loaded = RunStore::load(run_dir);
  ReportOptions opts;
  opts.label = loaded.manifest.generator_label;
  opts.mean_includes_failures = mean_includes_failures;
  opts.incomplete = !loaded.complete();
  auto report = compute_report(loaded.results, opts);
  const auto dir = run_dir / "report";
  fs::create_directories(dir);
  const int budget = loaded.manifest.policy.max_iterations;
  std::ofstream(dir / "report.md") << emit_markdown(report, budget);
  for (const auto& [name, content] : emit_csv(report, budget)) std::ofstream(dir / name) << content;
  std::ofstream(dir / "summary.kv") << emit_summary(report);
  out << fmt::format("{}: {} queries, convergence {:.2f}%, mean iterations {} over {} converged, "
                     "{} non-convergent, {} infrastructure failures\n",
                     report.label, report.total, 100.0 * report.convergence_rate,
                     report.iterations ? fmt::format("{:.2f}", report.iterations->mean) : "n/a",
                     report.converged, report.histogram.non_convergent, report.histogram.failed);
  return report;
}

/// Executes (or resumes) a run and writes its reports. `stop_after` > 0
/// stops taking new queries after that many finish (interruption drills).
inline RunOutcome execute_run(const RunConfigFile& c, const Dataset& dataset, bool resume,
                              std::ostream& out, std::size_t stop_after = 0,
                              SyncMode sync = SyncMode::EveryRecord) {
  if (c.output_dir.empty()) throw ConfigError("no output_dir configured");
  const auto wiring = build_wiring(c);
  const auto digest = config_digest(wiring, dataset);
  RunOutcome outcome;
  outcome.run_dir = c.output_dir;

  std::vector<std::size_t> positions;
  std::optional<RunStore> store;
  if (resume) {
    const auto pending = resume_run(c.output_dir, dataset, digest);
    if (RunStore::read_manifest(c.output_dir).status == RunState::Complete) {
      out << "run already complete; nothing to resume\n";
      write_reports(c.output_dir, c.mean_includes_failures, out);
      return outcome;
    }
    std::set<std::string> todo(pending.begin(), pending.end());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (todo.contains(dataset.queries()[i].id())) positions.push_back(i);
    }
    store.emplace(RunStore::reopen(c.output_dir, sync));
    out << "resuming: " << positions.size() << " of " << dataset.size() << " queries pending\n";
  } else {
    if (fs::exists(fs::path(c.output_dir) / RunStore::kManifest)) {
      throw ConfigError("output directory '" + c.output_dir +
                        "' already holds a run; use --resume or choose another directory");
    }
    RunManifest m;
    m.run_id = fs::path(c.output_dir).filename().string() + "-" + digest.substr(0, 12);
    m.started_at = utc_timestamp();
    m.config_digest = digest;
    m.generator_label = c.label;
    m.policy = c.policy;
    m.dataset_size = dataset.size();
    store.emplace(RunStore::create(c.output_dir, m, sync));
    for (std::size_t i = 0; i < dataset.size(); ++i) positions.push_back(i);
    std::ofstream(fs::path(c.output_dir) / "dataset.jsonl") << [&] {
      std::ostringstream ss;
      dataset.write(ss);
      return ss.str();
    }();
  }

  std::vector<Query> subset;
  subset.reserve(positions.size());
  for (auto p : positions) subset.push_back(dataset.queries()[p]);

  std::stop_source stop;
  PositionMapper mapper(*store, positions, stop_after, stop);
  interrupt_flag() = false;
  std::jthread watcher([&stop](std::stop_token st) {
    while (!st.stop_requested()) {
      if (interrupt_flag().load()) {
        stop.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });
  RunOptions opts;
  opts.worker_limit = c.worker_limit;
  opts.observer = &mapper;
  opts.stop = stop.get_token();
  const auto results = run_dataset(subset, *wiring.loop, opts);
  watcher.request_stop();
  watcher.join();

  outcome.executed = results.size();
  for (const auto& r : results) outcome.failed += r.failed() ? 1 : 0;
  if (results.size() < subset.size()) {
    outcome.interrupted = true;
    store->close();
    out << fmt::format("interrupted after {} of {} pending queries; resume with --resume\n",
                       results.size(), subset.size());
    return outcome;
  }
  store->seal();
  store.reset();
  write_reports(c.output_dir, c.mean_includes_failures, out);
  return outcome;
}

inline int map_exception(const std::exception& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ConfigMismatchError*>(&e)) {
    return kExitUsage;
  }
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DuplicateIdError*>(&e) ||
      dynamic_cast<const BalanceError*>(&e) || dynamic_cast<const EmptyInputError*>(&e) ||
      dynamic_cast<const UnknownRunError*>(&e) || dynamic_cast<const StorageError*>(&e) ||
      dynamic_cast<const ReportError*>(&e) || dynamic_cast<const RangeError*>(&e)) {
    return kExitData;
  }
  return kExitRuntime;
}

inline int cmd_validate(const std::string& path, bool strict, bool show_rubric, std::ostream& out) {
  if (show_rubric) out << ama_rubric_text() << "\n" << sra_rubric_text() << "\n";
  if (path.empty()) return kExitOk;
  const auto ds = load_dataset(path, strict);
  out << ds.size() << " queries\n";
  for (auto p : AmaPrinciple::all()) {
    auto it = ds.per_principle_counts().find(p.index());
    out << fmt::format("  principle {:<4} {:<36} {}\n", p.roman(), p.label(),
                       it == ds.per_principle_counts().end() ? 0 : it->second);
  }
  for (const auto& [c, n] : ds.per_risk_counts()) {
    out << fmt::format("  risk {:<12} {}\n", to_string(c), n);
  }
  std::set<std::size_t> distinct;
  for (const auto& [p, n] : ds.per_principle_counts()) distinct.insert(n);
  if (ds.per_principle_counts().size() == 9 && distinct.size() == 1) {
    out << "balanced: 9 × " << *distinct.begin() << "\n";
  }
  return kExitOk;
}

inline int finish_run(const RunConfigFile& c, const RunOutcome& o, std::ostream& err) {
  if (o.interrupted) return kExitRuntime;
  if (c.failure_budget && o.failed > *c.failure_budget) {
    err << fmt::format("error: {} queries failed for infrastructure reasons (budget {})\n", o.failed,
                       *c.failure_budget);
    return kExitRuntime;
  }
  return kExitOk;
}

inline int cmd_run(const std::string& config_path, bool resume, const RunOverrides& overrides,
                   std::ostream& out, std::ostream& err) {
  auto c = load_config(config_path);
  apply_overrides(c, overrides);
  if (c.dataset.empty()) throw ConfigError("no dataset configured");
  const auto ds = load_dataset(c.dataset);
  return finish_run(c, execute_run(c, ds, resume, out), err);
}

inline int cmd_simulate(const std::string& config_path, std::size_t n, bool resume,
                        const RunOverrides& overrides, std::ostream& out, std::ostream& err) {
  auto c = load_config(config_path);
  apply_overrides(c, overrides);
  if (!c.simulator) throw ConfigError("simulate needs a 'simulator' section in the configuration");
  if (n == 0) throw EmptyInputError("simulate needs at least one query (n = 0)");
  const auto ds = synthetic_dataset(n);
  return finish_run(c, execute_run(c, ds, resume, out), err);
}

inline int cmd_report(const std::vector<std::string>& run_dirs, const std::string& format,
                      const std::string& out_path, bool mean_includes_failures, std::ostream& out) {
  std::vector<MetricsReport> reports;
  int budget = 5;
  for (const auto& d : run_dirs) {
    const auto loaded = RunStore::load(d);
    ReportOptions opts;
    opts.label = loaded.manifest.generator_label;
    opts.mean_includes_failures = mean_includes_failures;
    opts.incomplete = !loaded.complete();
    budget = std::max(budget, loaded.manifest.policy.max_iterations);
    reports.push_back(compute_report(loaded.results, opts));
  }
  std::vector<const MetricsReport*> ptrs;
  for (const auto& r : reports) ptrs.push_back(&r);
  if (format == "markdown") {
    const auto doc = emit_markdown(ptrs, budget);
    if (out_path.empty()) {
      out << doc;
    } else {
      std::ofstream(out_path) << doc;
    }
  } else {
    const auto files = emit_csv(ptrs, budget);
    if (out_path.empty()) {
      for (const auto& [name, content] : files) out << "# " << name << "\n" << content << "\n";
    } else {
      fs::create_directories(out_path);
      for (const auto& [name, content] : files) std::ofstream(fs::path(out_path) / name) << content;
    }
  }
  return kExitOk;
}

/// Entry point shared by the binary and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent safety refinement runner for medical LLM responses", "medsafe"};
  app.require_subcommand(1);

  auto* validate = app.add_subcommand("validate", "Check a dataset file");
  std::string v_path;
  bool v_strict = false;
  bool v_rubric = false;
  validate->add_option("dataset", v_path, "Dataset file (JSON lines)");
  validate->add_flag("--strict", v_strict, "Require equal per-principle counts");
  validate->add_flag("--show-rubric", v_rubric, "Print the AMA-9 and SRA-5 rubrics");

  RunOverrides overrides;
  auto add_overrides = [&overrides](CLI::App* sub) {
    sub->add_option("--workers", overrides.workers, "Maximum queries in flight");
    sub->add_option("--seed", overrides.seed, "Simulator seed");
    sub->add_option("--output", overrides.output, "Run directory");
    sub->add_option("--label", overrides.label, "Generator label used in reports");
    sub->add_flag("--mean-includes-failures", overrides.mean_includes_failures,
                  "Count non-convergent queries at the budget in mean iterations");
  };

  auto* run = app.add_subcommand("run", "Run the refinement loop over a dataset");
  std::string r_config;
  bool r_resume = false;
  run->add_option("config", r_config, "Run configuration (JSON)")->required();
  run->add_flag("--resume", r_resume, "Continue an interrupted run");
  run->add_option("--dataset", overrides.dataset, "Dataset file");
  add_overrides(run);

  auto* simulate = app.add_subcommand("simulate", "Run the loop over a synthetic dataset");
  std::string s_config;
  std::size_t s_n = 900;
  bool s_resume = false;
  simulate->add_option("config", s_config, "Run configuration (JSON)")->required();
  simulate->add_option("-n,--queries", s_n, "Number of synthetic queries");
  simulate->add_flag("--resume", s_resume, "Continue an interrupted run");
  add_overrides(simulate);

  auto* report = app.add_subcommand("report", "Recompute metrics from stored traces");
  std::vector<std::string> p_dirs;
  std::string p_format = "markdown";
  std::string p_out;
  std::string p_compare;
  bool p_mean_fail = false;
  report->add_option("run_dir", p_dirs, "Run directory")->required()->expected(1);
  report->add_option("--format", p_format, "markdown or csv")
      ->check(CLI::IsMember({"markdown", "csv"}));
  report->add_option("--out", p_out, "Output file (markdown) or directory (csv)");
  report->add_option("--compare", p_compare, "Second run directory for a side-by-side report");
  report->add_flag("--mean-includes-failures", p_mean_fail,
                   "Count non-convergent queries at the budget in mean iterations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate) return cmd_validate(v_path, v_strict, v_rubric, out);
    if (*run) return cmd_run(r_config, r_resume, overrides, out, err);
    if (*simulate) return cmd_simulate(s_config, s_n, s_resume, overrides, out, err);
    if (*report) {
      if (!p_compare.empty()) p_dirs.push_back(p_compare);
      return cmd_report(p_dirs, p_format, p_out, p_mean_fail, out);
    }
  } catch (const std::exception& e) {
    return map_exception(e, err);
  }
  return kExitUsage;
}

}  // namespace medsafe::cli
