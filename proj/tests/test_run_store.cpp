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

#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace medsafe {
namespace {

namespace fs = std::filesystem;

RunManifest manifest(const std::string& digest = "abc") {
  RunManifest m;
  m.run_id = "test-run";
  m.started_at = utc_timestamp();
  m.config_digest = digest;
  m.generator_label = "scripted";
  m.dataset_size = 0;
  return m;
}

class RunStoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::fresh_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(RunStoreTest, AppendThenLoadRoundTrips) {
  auto f = testing::histogram_fixture({2, 1, 1, 0, 0}, 1);
  auto results = testing::run_fixture(f);
  {
    auto store = RunStore::create(dir_, manifest());
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (const auto& t : results[i].traces()) store.append_trace(results[i].query().id(), t);
      store.append_result(i, results[i]);
    }
  }
  const auto loaded = RunStore::load(dir_);
  EXPECT_EQ(loaded.results, results);
  EXPECT_EQ(loaded.trace_records, 2U + 2 + 3 + 5);
  EXPECT_EQ(loaded.truncated_bytes, 0U);
  EXPECT_FALSE(loaded.complete());
  EXPECT_EQ(loaded.manifest.digest_algorithm, "sha256");
}

TEST_F(RunStoreTest, CreateRefusesExistingRun) {
  { auto s = RunStore::create(dir_, manifest()); }
  EXPECT_THROW(RunStore::create(dir_, manifest()), StorageError);
}

TEST_F(RunStoreTest, SealedRunRejectsAppendsAndReopen) {
  auto results = testing::run_fixture(testing::histogram_fixture({1, 0, 0, 0, 0}, 0));
  auto store = RunStore::create(dir_, manifest());
  store.append_result(0, results[0]);
  store.seal();
  EXPECT_THROW(store.append_result(1, results[0]), SealedRunError);
  EXPECT_THROW(store.append_trace("q", results[0].traces()[0]), UnknownRunError);
  EXPECT_THROW(RunStore::reopen(dir_), SealedRunError);
  EXPECT_TRUE(RunStore::load(dir_).complete());
}

TEST_F(RunStoreTest, MissingRunIsUnknown) {
  EXPECT_THROW(RunStore::load(dir_ / "nothing"), UnknownRunError);
  EXPECT_THROW(RunStore::reopen(dir_ / "nothing"), UnknownRunError);
}

TEST_F(RunStoreTest, TornFinalRecordIsDroppedAndReported) {
  auto results = testing::run_fixture(testing::histogram_fixture({3, 2, 0, 0, 0}, 0));
  {
    auto store = RunStore::create(dir_, manifest());
    for (std::size_t i = 0; i < 4; ++i) store.append_result(i, results[i]);
  }
  // Simulate a crash halfway through writing the fifth record.
  const auto full = nlohmann::json{{"type", "result"}, {"position", 4}, {"result", to_json(results[4])}}.dump();
  const auto partial = full.substr(0, full.size() / 2);
  {
    std::ofstream log(dir_ / RunStore::kLog, std::ios::app | std::ios::binary);
    log << partial;
  }
  auto loaded = RunStore::load(dir_);
  EXPECT_EQ(loaded.results.size(), 4U);
  EXPECT_EQ(loaded.truncated_bytes, partial.size());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(loaded.results[i], results[i]);

  // Reopening discards the torn bytes so new records stay line-aligned.
  {
    auto store = RunStore::reopen(dir_);
    store.append_result(4, results[4]);
  }
  loaded = RunStore::load(dir_);
  EXPECT_EQ(loaded.truncated_bytes, 0U);
  EXPECT_EQ(loaded.results, results);
}

TEST_F(RunStoreTest, CorruptInteriorRecordIsStorageError) {
  { auto s = RunStore::create(dir_, manifest()); }
  {
    std::ofstream log(dir_ / RunStore::kLog, std::ios::app);
    log << "{\"type\":\"result\",\"position\":0}\n";
  }
  EXPECT_THROW(RunStore::load(dir_), StorageError);
}

TEST_F(RunStoreTest, ConcurrentAppendsStayLineAligned) {
  auto results = testing::run_fixture(testing::histogram_fixture({40, 40, 20, 0, 0}, 0));
  {
    auto store = RunStore::create(dir_, manifest(), SyncMode::OnClose);
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < 8; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < results.size(); i += 8) {
          for (const auto& tr : results[i].traces()) store.append_trace(results[i].query().id(), tr);
          store.append_result(i, results[i]);
        }
      });
    }
  }
  const auto loaded = RunStore::load(dir_);
  EXPECT_EQ(loaded.results, results);
  EXPECT_EQ(loaded.truncated_bytes, 0U);
}

TEST_F(RunStoreTest, ResumeReportsPendingQueries) {
  auto f = testing::histogram_fixture({252, 378, 164, 36, 18}, 52);
  auto results = testing::run_fixture(f, 4);
  const auto ds = f.dataset();
  {
    auto store = RunStore::create(dir_, manifest("digest-1"));
    // Out-of-order completions: every even position below 800.
    for (std::size_t i = 0; i < 800; i += 2) store.append_result(i, results[i]);
  }
  const auto pending = resume_run(dir_, ds, "digest-1");
  EXPECT_EQ(pending.size(), 500U);
  std::set<std::string> done;
  for (const auto& r : RunStore::load(dir_).results) done.insert(r.query().id());
  for (const auto& id : pending) EXPECT_FALSE(done.contains(id));

  EXPECT_THROW(resume_run(dir_, ds, "digest-2"), ConfigMismatchError);

  {
    auto store = RunStore::reopen(dir_);
    store.seal();
  }
  EXPECT_TRUE(resume_run(dir_, ds, "digest-1").empty());
}

TEST(Serialization, RoundTripIsIdentityForRandomResults) {
  std::mt19937_64 rng(404);
  const ThresholdPolicy p;
  for (int n = 0; n < 200; ++n) {
    for (const auto& r : testing::random_result_set(rng, 10)) {
      const auto j = nlohmann::json::parse(to_json(r).dump());
      EXPECT_EQ(result_from_json(j, p), r);
      EXPECT_EQ(query_from_json(nlohmann::json::parse(to_json(r.query()).dump())), r.query());
      for (const auto& t : r.traces()) {
        EXPECT_EQ(trace_from_json(nlohmann::json::parse(to_json(t).dump()), r.query().id(), p), t);
      }
    }
  }
}

TEST(Serialization, PolicyAndManifestRoundTrip) {
  ThresholdPolicy p;
  p.tau_ama = 3;
  p.max_iterations = 7;
  EXPECT_EQ(policy_from_json(nlohmann::json::parse(to_json(p).dump())), p);
  EXPECT_EQ(policy_from_json(nlohmann::json::object()), ThresholdPolicy{});
  EXPECT_THROW(policy_from_json(nlohmann::json{{"tau_sra", 9}}), RangeError);
  auto m = manifest();
  m.policy = p;
  m.dataset_size = 12;
  const auto back = RunManifest::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.run_id, m.run_id);
  EXPECT_EQ(back.policy, p);
  EXPECT_EQ(back.dataset_size, 12U);
  EXPECT_EQ(back.config_digest, m.config_digest);
}

TEST(Serialization, TamperedDecisionIsRejected) {
  auto r = testing::run_fixture(testing::make_fixture({{{5, 4}, {1, 1}}}))[0];
  auto j = nlohmann::json::parse(to_json(r.traces()[0]).dump());
  j["decision"] = "stop";
  EXPECT_ANY_THROW(trace_from_json(j, r.query().id(), ThresholdPolicy{}));
}

TEST(Digest, Sha256KnownAnswers) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace medsafe
