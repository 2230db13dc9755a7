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

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/dataset.hpp"
#include "medsafe/digest.hpp"
#include "medsafe/domain.hpp"
#include "medsafe/engine.hpp"
#include "medsafe/errors.hpp"
#include "medsafe/serialize.hpp"

// Run directory layout:
//   manifest.json  - RunManifest, rewritten atomically on status change
//   traces.jsonl   - append-only log; one "trace" record per loop iteration
//                    and one terminal "result" record per finished query

namespace medsafe {

enum class RunState { InProgress, Complete };

struct RunManifest {
  std::string run_id;
  std::string started_at;
  std::string config_digest;
  std::string digest_algorithm = std::string(kDigestAlgorithm);
  std::string generator_label;
  RunState status = RunState::InProgress;
  ThresholdPolicy policy;
  std::size_t dataset_size = 0;

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["started_at"] = started_at;
    j["config_digest"] = config_digest;
    j["digest_algorithm"] = digest_algorithm;
    j["generator_label"] = generator_label;
    j["status"] = status == RunState::Complete ? "Complete" : "InProgress";
    j["policy"] = medsafe::to_json(policy);
    j["dataset_size"] = dataset_size;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.digest_algorithm = j.at("digest_algorithm").get<std::string>();
    m.generator_label = j.at("generator_label").get<std::string>();
    const auto s = j.at("status").get<std::string>();
    if (s != "Complete" && s != "InProgress") throw StorageError("unknown run status '" + s + "'");
    m.status = s == "Complete" ? RunState::Complete : RunState::InProgress;
    m.policy = policy_from_json(j.at("policy"));
    m.dataset_size = j.at("dataset_size").get<std::size_t>();
    return m;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Everything recovered from a run directory.
struct LoadedRun {
  RunManifest manifest;
  /// Terminal results ordered by dataset position.
  std::vector<QueryRunResult> results;
  std::vector<std::size_t> positions;
  std::size_t trace_records = 0;
  /// Bytes of an unterminated final record that was discarded, 0 if none.
  std::size_t truncated_bytes = 0;

  [[nodiscard]] bool complete() const noexcept { return manifest.status == RunState::Complete; }
};

enum class SyncMode { EveryRecord, OnClose };

/// Single-writer, append-only store for one run. Appends from concurrent
/// workers are serialized through one mutex; each record is one line written
/// with a single write() and, by default, fsync'ed before returning.
class RunStore final : public RunObserver {
 public:
  static constexpr const char* kManifest = "manifest.json";
  static constexpr const char* kLog = "traces.jsonl";

  /// Starts a new run in `dir` (created if needed; must not already hold a run).
  static RunStore create(const std::filesystem::path& dir, RunManifest manifest,
                         SyncMode sync = SyncMode::EveryRecord) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw StorageError("cannot create run directory '" + dir.string() + "': " + ec.message());
    if (std::filesystem::exists(dir / kManifest)) {
      throw StorageError("run directory '" + dir.string() + "' already holds a run");
    }
    manifest.status = RunState::InProgress;
    write_manifest(dir, manifest);
    return RunStore(dir, std::move(manifest), sync);
  }

  /// Reopens an in-progress run for appending.
  static RunStore reopen(const std::filesystem::path& dir, SyncMode sync = SyncMode::EveryRecord) {
    auto manifest = read_manifest(dir);
    if (manifest.status == RunState::Complete) {
      throw SealedRunError("run '" + manifest.run_id + "' is complete and sealed");
    }
    return RunStore(dir, std::move(manifest), sync);
  }

  RunStore(RunStore&& other) noexcept
      : dir_(std::move(other.dir_)), manifest_(std::move(other.manifest_)), sync_(other.sync_),
        fd_(std::exchange(other.fd_, -1)) {}
  RunStore& operator=(RunStore&&) = delete;
  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  ~RunStore() override { close(); }

  [[nodiscard]] const RunManifest& manifest() const noexcept { return manifest_; }
  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

  void append_trace(const std::string& query_id, const IterationTrace& trace) {
    nlohmann::ordered_json j;
    j["type"] = "trace";
    j["query_id"] = query_id;
    j["trace"] = to_json(trace);
    append_line(j.dump());
  }

  /// Terminal record for the query at dataset position `position`.
  void append_result(std::size_t position, const QueryRunResult& result) {
    nlohmann::ordered_json j;
    j["type"] = "result";
    j["position"] = position;
    j["result"] = to_json(result);
    append_line(j.dump());
  }

  void on_trace(const Query& query, const IterationTrace& trace) override {
    append_trace(query.id(), trace);
  }
  void on_result(std::size_t index, const QueryRunResult& result) override {
    append_result(index, result);
  }

  /// Marks the run Complete; later appends throw SealedRunError.
  void seal() {
    std::lock_guard lock(mu_);
    sync_locked();
    manifest_.status = RunState::Complete;
    write_manifest(dir_, manifest_);
  }

  /// Flushes and closes the log without sealing; the run stays resumable.
  void close() noexcept {
    std::lock_guard lock(mu_);
    if (fd_ >= 0) {
      ::fsync(fd_);
      ::close(fd_);
      fd_ = -1;
    }
  }

  static RunManifest read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / kManifest);
    if (!in) throw UnknownRunError("no run manifest in '" + dir.string() + "'");
    try {
      return RunManifest::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw StorageError("unreadable manifest in '" + dir.string() + "': " + e.what());
    }
  }

  /// Reads a run directory. An unterminated final record (torn write) is
  /// dropped and reported; any other unreadable record is a StorageError.
  static LoadedRun load(const std::filesystem::path& dir) {
    LoadedRun out;
    out.manifest = read_manifest(dir);
    std::ifstream in(dir / kLog, std::ios::binary);
    std::string content;
    if (in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      content = ss.str();
    }
    std::map<std::size_t, QueryRunResult> by_position;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < content.size()) {
      const auto nl = content.find('\n', start);
      if (nl == std::string::npos) {
        out.truncated_bytes = content.size() - start;
        break;
      }
      ++line_no;
      const std::string_view line(content.data() + start, nl - start);
      start = nl + 1;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        const auto type = j.at("type").get<std::string>();
        if (type == "trace") {
          (void)trace_from_json(j.at("trace"), j.at("query_id").get<std::string>(),
                                out.manifest.policy);
          ++out.trace_records;
        } else if (type == "result") {
          const auto pos = j.at("position").get<std::size_t>();
          by_position.insert_or_assign(pos, result_from_json(j.at("result"), out.manifest.policy));
        } else {
          throw StorageError("unknown record type '" + type + "'");
        }
      } catch (const StorageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StorageError("corrupt record at line " + std::to_string(line_no) + " of " +
                           (dir / kLog).string() + ": " + e.what());
      }
    }
    for (auto& [pos, r] : by_position) {
      out.positions.push_back(pos);
      out.results.push_back(std::move(r));
    }
    return out;
  }

 private:
  RunStore(std::filesystem::path dir, RunManifest manifest, SyncMode sync)
      : dir_(std::move(dir)), manifest_(std::move(manifest)), sync_(sync) {
    const auto log = dir_ / kLog;
    drop_torn_tail(log);
    fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) {
      throw StorageError("cannot open '" + log.string() + "': " + std::strerror(errno));
    }
  }

  /// A reopened log must not glue new records onto a torn final line.
  static void drop_torn_tail(const std::filesystem::path& log) {
    std::error_code ec;
    const auto size = std::filesystem::file_size(log, ec);
    if (ec || size == 0) return;
    std::ifstream in(log, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto last_nl = content.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != content.size()) std::filesystem::resize_file(log, keep);
  }

  static void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    const auto tmp = dir / (std::string(kManifest) + ".tmp");
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << m.to_json().dump(2) << '\n';
      out.flush();
      if (!out) throw StorageError("cannot write manifest in '" + dir.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dir / kManifest, ec);
    if (ec) throw StorageError("cannot replace manifest in '" + dir.string() + "': " + ec.message());
  }

  void append_line(std::string line) {
    line += '\n';
    std::lock_guard lock(mu_);
    if (manifest_.status == RunState::Complete) {
      throw SealedRunError("run '" + manifest_.run_id + "' is sealed");
    }
    if (fd_ < 0) throw StorageError("run store for '" + manifest_.run_id + "' is closed");
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const auto n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw StorageError(std::string("append failed: ") + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (sync_ == SyncMode::EveryRecord) sync_locked();
  }

  void sync_locked() {
    if (fd_ >= 0 && ::fsync(fd_) != 0) {
      throw StorageError(std::string("fsync failed: ") + std::strerror(errno));
    }
  }

  std::filesystem::path dir_;
  RunManifest manifest_;
  SyncMode sync_;
  int fd_ = -1;
  std::mutex mu_;
};

/// Dataset ids with no terminal record in the run at `dir`. Refuses to
/// resume when the stored configuration digest differs from `config_digest`.
inline std::vector<std::string> resume_run(const std::filesystem::path& dir, const Dataset& dataset,
                                           const std::string& config_digest) {
  const auto loaded = RunStore::load(dir);
  if (loaded.manifest.config_digest != config_digest) {
    throw ConfigMismatchError("run '" + loaded.manifest.run_id +
                              "' was started with a different configuration (digest " +
                              loaded.manifest.config_digest + ", now " + config_digest + ")");
  }
  if (loaded.complete()) return {};
  std::set<std::string> done;
  for (const auto& r : loaded.results) done.insert(r.query().id());
  std::vector<std::string> pending;
  for (const auto& q : dataset.queries()) {
    if (!done.contains(q.id())) pending.push_back(q.id());
  }
  return pending;
}

}  // namespace medsafe
