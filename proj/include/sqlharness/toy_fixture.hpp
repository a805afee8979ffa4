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

// Desk-scale training fixture: one task, a small database script and a fixed
// list of complete assistant turns that the template policy chooses between.
//
//   {
//     "task": {"id", "question", "gold_sql", "difficulty"},
//     "setup_sql": "CREATE TABLE ...; INSERT ...;",
//     "budget": 10,
//     "candidates": ["<reasoning>...</reasoning><solution>...</solution>", ...],
//     "initial_logits": [0, 0, ...]          (optional, uniform when absent)
//   }

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqlharness/error.hpp"
#include "sqlharness/policy.hpp"
#include "sqlharness/rewards.hpp"
#include "sqlharness/rollout.hpp"
#include "sqlharness/taskdata.hpp"

namespace sqlharness {

struct ToyFixture {
  TaskInstance task;
  std::string setup_sql;
  int budget = 10;
  std::vector<std::string> candidates;
  std::vector<double> initial_logits;

  TemplatePolicy initial_policy() const { return TemplatePolicy(candidates, initial_logits); }
};

inline ToyFixture toy_fixture_from_json(const nlohmann::ordered_json& j) {
  ToyFixture f;
  try {
    const auto& t = j.at("task");
    f.task.id = t.at("id").get<std::string>();
    f.task.question = t.at("question").get<std::string>();
    f.task.gold_sql = t.at("gold_sql").get<std::string>();
    f.task.difficulty = parse_difficulty(t.value("difficulty", std::string()));
    f.task.database_id = t.value("database_id", f.task.id);
    f.setup_sql = j.at("setup_sql").get<std::string>();
    f.budget = j.value("budget", 10);
    f.candidates = j.at("candidates").get<std::vector<std::string>>();
    if (j.contains("initial_logits")) {
      f.initial_logits = j.at("initial_logits").get<std::vector<double>>();
    } else {
      f.initial_logits.assign(f.candidates.size(), 0.0);
    }
  } catch (const nlohmann::ordered_json::exception& e) {
    throw DatasetError(std::string("toy fixture: ") + e.what());
  }
  if (f.candidates.empty()) throw DatasetError("toy fixture: no candidates");
  if (f.initial_logits.size() != f.candidates.size()) {
    throw DatasetError("toy fixture: initial_logits must have one entry per candidate");
  }
  if (f.budget < 1) throw DatasetError("toy fixture: budget must be >= 1");
  return f;
}

inline ToyFixture load_toy_fixture(const std::filesystem::path& path) {
  return toy_fixture_from_json(nlohmann::ordered_json::parse(detail::read_file(path)));
}

// Builds the fixture database at `db_path` and fills in the task's path and
// schema.
inline void materialize(ToyFixture& f, const std::filesystem::path& db_path) {
  Database::create_from_script(db_path, f.setup_sql);
  f.task.db_path = db_path;
  f.task.schema = introspect_schema(open_database(db_path, true));
}

// Reward of every candidate: each one is replayed through the rollout loop
// as a scripted policy and the trajectory is scored.
inline std::vector<double> candidate_rewards(const ToyFixture& f, const RewardWeights& weights = {}) {
  if (f.task.db_path.empty()) throw ContractError("candidate_rewards: fixture not materialized");
  const auto db = open_database(f.task.db_path, true);
  RolloutOptions opt;
  opt.budget = f.budget;
  opt.max_attempts = 1;
  std::vector<double> out;
  for (const auto& c : f.candidates) {
    ScriptedPolicy policy({c});
    const auto traj = run_trajectory(f.task, policy, db, opt);
    out.push_back(score_trajectory(traj, f.task, db, opt.limits, weights).total);
  }
  return out;
}

}  // namespace sqlharness
