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

// Trajectories (alternating assistant actions and environment observations),
// the format check over them, and their JSONL persistence.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqlharness/protocol.hpp"
#include "sqlharness/reward_types.hpp"

namespace sqlharness {

using json = nlohmann::ordered_json;

enum class Termination { kSolution, kBudgetForced, kPolicyError };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kSolution: return "solution";
    case Termination::kBudgetForced: return "budget_forced";
    case Termination::kPolicyError: return "policy_error";
  }
  return "unknown";
}

inline Termination termination_from_string(std::string_view s) {
  if (s == "solution") return Termination::kSolution;
  if (s == "budget_forced") return Termination::kBudgetForced;
  if (s == "policy_error") return Termination::kPolicyError;
  throw DatasetError("unknown termination '" + std::string(s) + "'");
}

struct Turn {
  int index = 1;  // 1-based
  std::string raw;
  ParsedAction action;
  std::optional<Observation> observation;  // absent on the terminal turn
  bool forced_final = false;               // the extra generation after the budget ran out

  bool operator==(const Turn&) const = default;
};

struct Trajectory {
  std::string task_id;
  std::vector<Turn> turns;
  int budget = 10;  // T
  std::optional<std::string> final_sql;
  Termination termination = Termination::kSolution;
  std::optional<RewardBreakdown> reward;
  std::uint64_t seed = 0;

  // Turns the policy initiated inside the budget (excludes the forced one).
  int policy_turns() const {
    int n = 0;
    for (const auto& t : turns) n += t.forced_final ? 0 : 1;
    return n;
  }

  // The t used by the turn reward: the index of the solution turn, or T when
  // the budget was exhausted.
  int finishing_turn() const {
    if (turns.empty()) return 1;
    const int t = policy_turns();
    return std::clamp(t, 1, budget);
  }

  bool operator==(const Trajectory&) const = default;
};

// 1 iff every assistant turn is well formed and the last turn carries a
// solution. The forced final generation is asked for the solution block only,
// so a missing reasoning block is not held against it.
inline int check_format(const Trajectory& traj) {
  if (traj.turns.empty()) return 0;
  for (const auto& turn : traj.turns) {
    if (turn.action.well_formed) continue;
    if (turn.forced_final) {
      for (auto d : turn.action.defects) {
        if (d != Defect::kMissingReasoning) return 0;
      }
      continue;
    }
    return 0;
  }
  return traj.turns.back().action.solution.has_value() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// JSONL

inline json reward_to_json(const RewardBreakdown& r) {
  return {{"r_exec", r.r_exec},     {"r_turns", r.r_turns},   {"r_schema", r.r_schema}, {"r_bigram", r.r_bigram},
          {"r_syntax", r.r_syntax}, {"r_format", r.r_format}, {"total", r.total}};
}

inline RewardBreakdown reward_from_json(const json& j) {
  RewardBreakdown r;
  r.r_exec = j.at("r_exec").get<int>();
  r.r_turns = j.at("r_turns").get<int>();
  r.r_schema = j.at("r_schema").get<double>();
  r.r_bigram = j.at("r_bigram").get<double>();
  r.r_syntax = j.at("r_syntax").get<int>();
  r.r_format = j.at("r_format").get<int>();
  r.total = j.at("total").get<double>();
  return r;
}

inline json trajectory_to_json(const Trajectory& t) {
  auto opt = [](const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); };
  json turns = json::array();
  for (const auto& turn : t.turns) {
    json obs = nullptr;
    if (turn.observation) {
      obs = {{"kind", to_string(turn.observation->kind)},
             {"text", turn.observation->text},
             {"turns_left", turn.observation->turns_left}};
    }
    turns.push_back({{"index", turn.index},
                     {"raw", turn.raw},
                     {"reasoning", opt(turn.action.reasoning)},
                     {"sql", opt(turn.action.sql)},
                     {"solution", opt(turn.action.solution)},
                     {"observation", std::move(obs)}});
  }
  json j;
  j["task_id"] = t.task_id;
  j["T"] = t.budget;
  j["termination"] = to_string(t.termination);
  j["final_sql"] = opt(t.final_sql);
  j["turns"] = std::move(turns);
  j["reward"] = t.reward ? reward_to_json(*t.reward) : json(nullptr);
  j["seed"] = t.seed;
  return j;
}

inline ObservationKind observation_kind_from_string(std::string_view s) {
  if (s == "result") return ObservationKind::kResult;
  if (s == "error") return ObservationKind::kError;
  if (s == "invalid_action") return ObservationKind::kInvalidAction;
  throw DatasetError("unknown observation kind '" + std::string(s) + "'");
}

// Parsed fields are recomputed from `raw`; the stored copies are for readers.
inline Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.task_id = j.at("task_id").get<std::string>();
  t.budget = j.at("T").get<int>();
  t.termination = termination_from_string(j.at("termination").get<std::string>());
  if (!j.at("final_sql").is_null()) t.final_sql = j.at("final_sql").get<std::string>();
  for (const auto& tj : j.at("turns")) {
    Turn turn;
    turn.index = tj.at("index").get<int>();
    turn.raw = tj.at("raw").get<std::string>();
    turn.action = parse_action(turn.raw);
    const auto& obs = tj.at("observation");
    if (!obs.is_null()) {
      turn.observation = Observation{observation_kind_from_string(obs.at("kind").get<std::string>()),
                                     obs.at("text").get<std::string>(), obs.at("turns_left").get<int>()};
    }
    turn.forced_final = t.termination == Termination::kBudgetForced && turn.index == t.budget + 1;
    t.turns.push_back(std::move(turn));
  }
  if (!j.at("reward").is_null()) t.reward = reward_from_json(j.at("reward"));
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

inline void save_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& t : trajectories) out << trajectory_to_json(t).dump() << "\n";
}

inline std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read '" + path.string() + "'");
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trajectory_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DatasetError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sqlharness
