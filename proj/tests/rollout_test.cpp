//
// Copyright 2026 The sqlharness Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <gtest/gtest.h>

#include <atomic>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "sqlharness/rollout.hpp"
#include "support.hpp"

namespace {

using namespace sqlharness;
using testsupport::TempDir;

const std::string kAvgSql = "<reasoning>check the average</reasoning><sql>SELECT AVG(price) FROM products</sql>";
const std::string kAvgSolution = "<reasoning>done</reasoning><solution>SELECT AVG(price) FROM products</solution>";
const std::string kProbe = "<reasoning>look</reasoning><sql>SELECT name FROM products</sql>";

struct Fixture {
  TempDir dir;
  std::filesystem::path db_path;
  TaskInstance task;

  Fixture() {
    db_path = testsupport::make_db(dir / "shop.sqlite", testsupport::kProductsScript);
    task.id = "avg";
    task.question = "what is the average price of all products?";
    task.database_id = "shop";
    task.db_path = db_path;
    task.gold_sql = "SELECT AVG(price) FROM products";
    task.difficulty = Difficulty::kHard;
    task.schema = introspect_schema(open_database(db_path));
  }

  Database db() const { return open_database(db_path, true); }
};

RolloutOptions options(int budget) {
  RolloutOptions o;
  o.budget = budget;
  o.backoff = std::chrono::milliseconds(1);
  o.seed = 42;
  return o;
}

// Records every dialogue it is shown.
class RecordingPolicy final : public Policy {
 public:
  explicit RecordingPolicy(std::vector<std::string> script) : script_(std::move(script)) {}
  std::string complete(const Dialogue& d, const SamplingConfig&, std::string_view id = {}) override {
    seen.push_back(d);
    ids.emplace_back(id);
    return scripted_next(script_, seen.size() - 1);
  }
  std::vector<Dialogue> seen;
  std::vector<std::string> ids;

 private:
  std::vector<std::string> script_;
};

class ThrowingPolicy final : public Policy {
 public:
  explicit ThrowingPolicy(bool transport) : transport_(transport) {}
  std::string complete(const Dialogue&, const SamplingConfig&, std::string_view = {}) override {
    ++calls;
    if (transport_) throw TransportError("connection refused");
    throw ProtocolError("no string at /choices/0/message/content");
  }
  int calls = 0;

 private:
  bool transport_;
};

int stated_turns_left(const std::string& text) {
  static const std::regex re("You have (\\d+) turns left to complete the task\\.$");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return -1;
  return std::stoi(m[1]);
}

TEST(Rollout, OneTurnSolution) {
  Fixture f;
  ScriptedPolicy p({kAvgSolution});
  const auto t = run_trajectory(f.task, p, f.db(), options(10));
  EXPECT_EQ(t.termination, Termination::kSolution);
  ASSERT_EQ(t.turns.size(), 1u);
  EXPECT_FALSE(t.turns[0].observation);
  EXPECT_EQ(t.final_sql, "SELECT AVG(price) FROM products");
  EXPECT_EQ(t.seed, 42u);
}

TEST(Rollout, WorkedTwoTurnTranscript) {
  Fixture f;
  RecordingPolicy p({kAvgSql, kAvgSolution});
  const auto t = run_trajectory(f.task, p, f.db(), options(10));
  ASSERT_EQ(t.turns.size(), 2u);
  EXPECT_EQ(t.termination, Termination::kSolution);
  ASSERT_TRUE(t.turns[0].observation);
  EXPECT_EQ(t.turns[0].observation->text, "   AVG(price)\n0       24.75\nYou have 9 turns left to complete the task.");

  ASSERT_EQ(p.seen.size(), 2u);
  const auto& second = p.seen[1];
  ASSERT_EQ(second.size(), 4u);
  EXPECT_EQ(second[0].role, Role::kSystem);
  EXPECT_EQ(second[1].role, Role::kUser);
  EXPECT_EQ(second[2], (ChatMessage{Role::kAssistant, kAvgSql}));
  EXPECT_EQ(second[3],
            (ChatMessage{Role::kUser,
                     "<observation>\n   AVG(price)\n0       24.75\nYou have 9 turns left to complete the task.\n</observation>"}));
  EXPECT_EQ(p.ids[0], "avg/42/1");
  EXPECT_EQ(p.ids[1], "avg/42/2");

  const auto r = score_trajectory(t, f.task, f.db(), {});
  EXPECT_EQ(r.r_exec, 1);
  EXPECT_EQ(r.r_turns, 1);
  EXPECT_EQ(r.total, 11.0);
}

TEST(Rollout, BudgetForcedFinalGeneration) {
  Fixture f;
  RecordingPolicy p({kProbe, kProbe, kProbe, kAvgSolution});
  const auto t = run_trajectory(f.task, p, f.db(), options(3));
  EXPECT_EQ(t.termination, Termination::kBudgetForced);
  ASSERT_EQ(t.turns.size(), 4u);
  EXPECT_TRUE(t.turns[3].forced_final);
  EXPECT_FALSE(t.turns[3].observation);
  EXPECT_EQ(t.final_sql, "SELECT AVG(price) FROM products");
  EXPECT_EQ(t.policy_turns(), 3);
  EXPECT_EQ(t.turns[2].observation->turns_left, 0);
  EXPECT_EQ(p.seen.back().back().content, kForcedFinalPrompt);
}

TEST(Rollout, BudgetForcedWithoutSolutionHasNoFinalSql) {
  Fixture f;
  ScriptedPolicy p({kProbe});
  const auto t = run_trajectory(f.task, p, f.db(), options(2));
  EXPECT_EQ(t.termination, Termination::kBudgetForced);
  EXPECT_FALSE(t.final_sql);
  EXPECT_EQ(score_trajectory(t, f.task, f.db(), {}).total, 0.0);
}

TEST(Rollout, InvalidActionAndSqlErrorObservations) {
  Fixture f;
  ScriptedPolicy p({"no tags at all", "<reasoning>r</reasoning><sql>SELECT * FROM nope</sql>", kAvgSolution});
  const auto t = run_trajectory(f.task, p, f.db(), options(5));
  ASSERT_EQ(t.turns.size(), 3u);
  EXPECT_EQ(t.turns[0].observation->kind, ObservationKind::kInvalidAction);
  EXPECT_EQ(t.turns[0].observation->text,
            "Your previous action is invalid. Think and try again.\nYou have 4 turns left to complete the task.");
  EXPECT_EQ(t.turns[1].observation->kind, ObservationKind::kError);
  EXPECT_NE(t.turns[1].observation->text.find("nope"), std::string::npos);
}

TEST(Rollout, ConfigValidation) {
  Fixture f;
  ScriptedPolicy p({kAvgSolution});
  EXPECT_THROW(run_trajectory(f.task, p, f.db(), options(0)), ConfigError);
  auto o = options(3);
  o.limits.timeout = std::chrono::milliseconds(0);
  EXPECT_THROW(run_trajectory(f.task, p, f.db(), o), ConfigError);
}

TEST(Rollout, TransportFailureBecomesPolicyError) {
  Fixture f;
  ThrowingPolicy p(true);
  const auto t = run_trajectory(f.task, p, f.db(), options(5));
  EXPECT_EQ(t.termination, Termination::kPolicyError);
  EXPECT_FALSE(t.final_sql);
  EXPECT_TRUE(t.turns.empty());
  EXPECT_EQ(p.calls, 3);
}

TEST(Rollout, ProtocolErrorIsNotRetried) {
  Fixture f;
  ThrowingPolicy p(false);
  const auto t = run_trajectory(f.task, p, f.db(), options(5));
  EXPECT_EQ(t.termination, Termination::kPolicyError);
  EXPECT_EQ(p.calls, 1);
}

// Random scripts over a fixed vocabulary of turns, including writes.
std::vector<std::string> random_script(SplitMix64& rng) {
  static const std::vector<std::string> vocab = {
      kProbe,
      kAvgSql,
      kAvgSolution,
      "garbage",
      "<reasoning>r</reasoning><sql>SELECT * FROM missing</sql>",
      "<reasoning>r</reasoning><sql>DELETE FROM products</sql>",
      "<reasoning>r</reasoning><sql>DROP TABLE products</sql>",
      "<reasoning>r</reasoning><sql>SELECT 1; DELETE FROM customers</sql>",
      "<reasoning>r</reasoning><sql>INSERT INTO customers VALUES (9, 'x')</sql>",
  };
  std::vector<std::string> s(1 + rng.next() % 12);
  for (auto& x : s) x = vocab[rng.next() % vocab.size()];
  return s;
}

TEST(RolloutProperty, ConservationTurnsLeftAndNoWrites) {
  Fixture f;
  const auto before = testsupport::file_hash(f.db_path);
  SplitMix64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const int budget = 1 + static_cast<int>(rng.next() % 8);
    ScriptedPolicy p(random_script(rng));
    const auto t = run_trajectory(f.task, p, f.db(), options(budget));
    int observations = 0;
    int k = 0;
    for (const auto& turn : t.turns) {
      if (turn.forced_final) continue;
      ++k;
      ASSERT_EQ(turn.index, k);
      if (!turn.observation) continue;
      ++observations;
      ASSERT_EQ(turn.observation->turns_left, budget - k);
      ASSERT_EQ(stated_turns_left(turn.observation->text), budget - k) << turn.observation->text;
    }
    if (t.termination == Termination::kSolution) {
      ASSERT_EQ(observations, static_cast<int>(t.turns.size()) - 1);
      ASSERT_LE(t.policy_turns(), budget);
    } else {
      ASSERT_EQ(t.termination, Termination::kBudgetForced);
      ASSERT_EQ(observations, t.policy_turns());
      ASSERT_EQ(t.policy_turns(), budget);
      ASSERT_TRUE(t.turns.back().forced_final);
    }
    for (const auto& turn : t.turns) {
      if (turn.observation && turn.observation->kind == ObservationKind::kError) {
        ASSERT_EQ(turn.observation->text.find("changes"), std::string::npos);
      }
    }
  }
  EXPECT_EQ(testsupport::file_hash(f.db_path), before);
  EXPECT_EQ(execute_sql(f.db(), "SELECT count(*) FROM customers", {}).rows[0][0], Value{std::int64_t{2}});
}

TEST(RolloutProperty, DeterministicForFixedInputs) {
  Fixture f;
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto script = random_script(rng);
    ScriptedPolicy a(script);
    ScriptedPolicy b(script);
    const auto ta = run_trajectory(f.task, a, f.db(), options(4));
    const auto tb = run_trajectory(f.task, b, f.db(), options(4));
    ASSERT_EQ(ta, tb);
    ASSERT_EQ(trajectory_to_json(ta).dump(), trajectory_to_json(tb).dump());
  }
}

TEST(Group, SizeOneAndSixIdenticalMembers) {
  Fixture f;
  const auto g1 = run_group(f.task, scripted_factory({kAvgSql, kAvgSolution}), read_only_factory(f.db_path), 1,
                            options(10));
  ASSERT_EQ(g1.trajectories.size(), 1u);
  EXPECT_EQ(g1.group.advantages, std::vector<double>{0.0});

  const auto g6 = run_group(f.task, scripted_factory({kAvgSql, kAvgSolution}), read_only_factory(f.db_path), 6,
                            options(10), {}, 3);
  ASSERT_EQ(g6.trajectories.size(), 6u);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(g6.group.members[i].reward, 11.0);
    EXPECT_EQ(g6.group.advantages[i], 0.0);
    seeds.insert(g6.trajectories[i].seed);
  }
  EXPECT_EQ(seeds.size(), 6u);
}

TEST(Group, AlternatingScriptsGiveTwoRewards) {
  Fixture f;
  auto counter = std::make_shared<std::atomic<int>>(0);
  PolicyFactory factory = [counter](std::uint64_t) -> std::unique_ptr<Policy> {
    const int n = (*counter)++;
    if (n % 2 == 0) return std::make_unique<ScriptedPolicy>(std::vector<std::string>{kAvgSolution});
    return std::make_unique<ScriptedPolicy>(
        std::vector<std::string>{"<reasoning>r</reasoning><solution>SELECT COUNT(*) FROM customers</solution>"});
  };
  const auto g = run_group(f.task, factory, read_only_factory(f.db_path), 6, options(10));
  const auto rewards = g.group.rewards();
  EXPECT_EQ(std::set<double>(rewards.begin(), rewards.end()).size(), 2u);
  double sum = 0.0;
  for (double a : g.group.advantages) sum += a;
  EXPECT_NEAR(sum, 0.0, 1e-12);
  EXPECT_GT(g.group.advantages[0], 0.0);
  EXPECT_LT(g.group.advantages[1], 0.0);
}

TEST(Group, PolicyErrorIsRecordedNotFatal) {
  Fixture f;
  auto counter = std::make_shared<std::atomic<int>>(0);
  PolicyFactory factory = [counter](std::uint64_t) -> std::unique_ptr<Policy> {
    if ((*counter)++ == 0) return std::make_unique<ThrowingPolicy>(true);
    return std::make_unique<ScriptedPolicy>(std::vector<std::string>{kAvgSolution});
  };
  const auto g = run_group(f.task, factory, read_only_factory(f.db_path), 3, options(10));
  EXPECT_EQ(g.trajectories[0].termination, Termination::kPolicyError);
  EXPECT_EQ(g.group.members[0].reward, 0.0);
  EXPECT_EQ(g.group.members[1].reward, 11.0);
  EXPECT_THROW(run_group(f.task, factory, read_only_factory(f.db_path), 0, options(10)), ConfigError);
}

TEST(ParallelFor, VisitsEachIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 8, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 4, [](std::size_t i) { if (i == 7) throw Error("boom"); }), Error);
}

TEST(TrajectoryJsonl, RoundTripEmptyAndSix) {
  Fixture f;
  TempDir dir;
  save_trajectories({}, dir / "empty.jsonl");
  EXPECT_TRUE(load_trajectories(dir / "empty.jsonl").empty());

  std::vector<Trajectory> trajs;
  SplitMix64 rng(3);
  for (int i = 0; i < 6; ++i) {
    ScriptedPolicy p(random_script(rng));
    auto o = options(3);
    o.seed = static_cast<std::uint64_t>(i);
    auto t = run_trajectory(f.task, p, f.db(), o);
    if (i % 2 == 0) t.reward = score_trajectory(t, f.task, f.db(), {});
    trajs.push_back(std::move(t));
  }
  save_trajectories(trajs, dir / "six.jsonl");
  EXPECT_EQ(load_trajectories(dir / "six.jsonl"), trajs);
}

TEST(TrajectoryJsonl, TruncatedLineIsNamed) {
  Fixture f;
  TempDir dir;
  ScriptedPolicy p({kAvgSql, kAvgSolution});
  const auto t = run_trajectory(f.task, p, f.db(), options(3));
  const auto line = trajectory_to_json(t).dump();
  testsupport::write_text(dir / "bad.jsonl", line + "\n" + line.substr(0, line.size() / 2) + "\n");
  try {
    load_trajectories(dir / "bad.jsonl");
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

}  // namespace
