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

// The reason -> execute -> observe loop for one task, and groups of
// independent rollouts.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "sqlharness/grpo.hpp"
#include "sqlharness/policy.hpp"
#include "sqlharness/protocol.hpp"
#include "sqlharness/rewards.hpp"
#include "sqlharness/sqlenv.hpp"
#include "sqlharness/taskdata.hpp"
#include "sqlharness/trajectory.hpp"

namespace sqlharness {

inline constexpr std::string_view kForcedFinalPrompt =
    "You have no turns left. Provide the final SQL query inside <solution>...</solution> tags and nothing else.";

struct RolloutOptions {
  int budget = 10;  // T
  SamplingConfig sampling;
  ExecLimits limits;
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  std::uint64_t seed = 0;
};

namespace detail {

// Returns nullopt once every attempt has failed with a transport error.
// Protocol errors are not retried.
inline std::optional<std::string> call_with_retries(Policy& policy, const Dialogue& dialogue,
                                                    const RolloutOptions& opt, const std::string& request_id) {
  auto delay = opt.backoff;
  for (int attempt = 1; attempt <= opt.max_attempts; ++attempt) {
    try {
      return policy.complete(dialogue, opt.sampling, request_id);
    } catch (const TransportError&) {
      if (attempt == opt.max_attempts) break;
      std::this_thread::sleep_for(delay);
      delay *= 2;
    } catch (const ProtocolError&) {
      break;
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline Trajectory run_trajectory(const TaskInstance& task, Policy& policy, const Database& db,
                                 const RolloutOptions& opt) {
  if (opt.budget < 1) throw ConfigError("rollout: turn budget must be >= 1");
  opt.limits.validate();
  ExecLimits limits = opt.limits;
  limits.allow_writes = false;

  Trajectory traj;
  traj.task_id = task.id;
  traj.budget = opt.budget;
  traj.seed = opt.seed;

  RolloutOptions call_opt = opt;
  call_opt.sampling.seed = static_cast<std::int64_t>(opt.seed & 0x7fffffffffffffffULL);

  Dialogue dialogue = build_prompt(task, opt.prompt_template);
  auto request_id = [&](int turn) {
    return task.id + "/" + std::to_string(opt.seed) + "/" + std::to_string(turn);
  };

  for (int t = 1; t <= opt.budget; ++t) {
    auto raw = detail::call_with_retries(policy, dialogue, call_opt, request_id(t));
    if (!raw) {
      traj.termination = Termination::kPolicyError;
      return traj;
    }
    dialogue.push_back({Role::kAssistant, *raw});
    Turn turn;
    turn.index = t;
    turn.raw = std::move(*raw);
    turn.action = parse_action(turn.raw);

    if (turn.action.solution) {
      traj.final_sql = turn.action.solution;
      traj.termination = Termination::kSolution;
      traj.turns.push_back(std::move(turn));
      return traj;
    }
    const int turns_left = opt.budget - t;
    if (turn.action.sql) {
      const auto guard = guard_sql(*turn.action.sql, GuardPolicy::kSelectOnly);
      const auto outcome =
          guard.ok() ? execute_sql(db, *turn.action.sql, limits)
                     : ExecOutcome::error("query rejected: only a single SELECT statement is allowed (" +
                                          std::string(to_string(guard.reason)) + ")");
      turn.observation = render_observation(outcome, turns_left);
    } else {
      turn.observation = render_invalid_action(turns_left);
    }
    dialogue.push_back({Role::kUser, wrap_observation(*turn.observation)});
    traj.turns.push_back(std::move(turn));
  }

  dialogue.push_back({Role::kUser, std::string(kForcedFinalPrompt)});
  auto raw = detail::call_with_retries(policy, dialogue, call_opt, request_id(opt.budget + 1));
  if (!raw) {
    traj.termination = Termination::kPolicyError;
    return traj;
  }
  Turn forced;
  forced.index = opt.budget + 1;
  forced.raw = std::move(*raw);
  forced.action = parse_action(forced.raw);
  forced.forced_final = true;
  traj.final_sql = forced.action.solution;
  traj.termination = Termination::kBudgetForced;
  traj.turns.push_back(std::move(forced));
  return traj;
}

// Runs fn(i) for i in [0, n) on at most `parallelism` threads. The first
// exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, parallelism));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct GroupRollout {
  RolloutGroup group;
  std::vector<Trajectory> trajectories;
};

// Opens a fresh database handle for each trajectory.
using DatabaseFactory = std::function<Database()>;

inline DatabaseFactory read_only_factory(std::filesystem::path path) {
  return [path = std::move(path)] { return open_database(path, true); };
}

// G independent trajectories, each with its own seed, policy session and
// database handle, scored with `weights`. Member i's reward is trajectory i's
// total; old logprobs are unavailable for remote models.
inline GroupRollout run_group(const TaskInstance& task, const PolicyFactory& policies, const DatabaseFactory& databases,
                              int group_size, const RolloutOptions& opt, const RewardWeights& weights = {},
                              int parallelism = 1) {
  if (group_size < 1) throw ConfigError("rollout: group size must be >= 1");
  GroupRollout out;
  out.trajectories.resize(static_cast<std::size_t>(group_size));
  parallel_for(out.trajectories.size(), parallelism, [&](std::size_t i) {
    RolloutOptions mine = opt;
    mine.seed = derive_seed(opt.seed, task.id, i);
    const auto db = databases();
    auto policy = policies(mine.seed);
    auto traj = run_trajectory(task, *policy, db, mine);
    traj.reward = score_trajectory(traj, task, db, opt.limits, weights);
    out.trajectories[i] = std::move(traj);
  });
  out.group.task_id = task.id;
  for (std::size_t i = 0; i < out.trajectories.size(); ++i) {
    out.group.members.push_back({i, out.trajectories[i].reward->total, std::nullopt});
  }
  out.group.normalize();
  return out;
}

}  // namespace sqlharness
