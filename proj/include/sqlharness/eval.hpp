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

// Benchmark metrics: execution accuracy, execution-consensus majority voting,
// Pass@k, data efficiency and reasoning/turn statistics.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqlharness/error.hpp"
#include "sqlharness/protocol.hpp"
#include "sqlharness/rewards.hpp"
#include "sqlharness/sqlenv.hpp"
#include "sqlharness/taskdata.hpp"
#include "sqlharness/trajectory.hpp"

namespace sqlharness {

inline double execution_accuracy(const std::vector<bool>& outcomes) {
  if (outcomes.empty()) throw ContractError("execution_accuracy: no outcomes");
  const auto hits = static_cast<double>(std::count(outcomes.begin(), outcomes.end(), true));
  return 100.0 * hits / static_cast<double>(outcomes.size());
}

// Index of the chosen candidate. Candidates are clustered by result
// equivalence (erroring ones excluded); the largest cluster wins, ties go to
// the cluster whose first member was submitted earliest, and the cluster's
// earliest member is returned. If every candidate errors, returns 0.
inline std::size_t majority_vote_index(const std::vector<std::string>& candidates, const Database& db,
                                       const ExecLimits& limits = {}) {
  if (candidates.empty()) throw ContractError("majority_vote: no candidates");
  struct Cluster {
    std::size_t first;
    std::size_t size;
    ExecOutcome result;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto outcome = execute_full(db, candidates[i], limits);
    if (!outcome.ok()) continue;
    bool placed = false;
    for (auto& c : clusters) {
      if (results_equal(c.result, outcome)) {
        ++c.size;
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({i, 1, std::move(outcome)});
  }
  if (clusters.empty()) return 0;
  const Cluster* best = &clusters.front();
  for (const auto& c : clusters) {
    if (c.size > best->size) best = &c;  // strict: earlier cluster keeps ties
  }
  return best->first;
}

inline std::string majority_vote(const std::vector<std::string>& candidates, const Database& db,
                                 const ExecLimits& limits = {}) {
  return candidates[majority_vote_index(candidates, db, limits)];
}

// Fraction of tasks with at least one correct sample among the first k.
inline double pass_at_k(const std::vector<std::vector<bool>>& outcomes, std::size_t k) {
  if (outcomes.empty()) throw ContractError("pass_at_k: no tasks");
  if (k == 0) throw ContractError("pass_at_k: k must be >= 1");
  std::size_t passed = 0;
  for (const auto& row : outcomes) {
    if (row.size() < k) {
      throw ContractError("pass_at_k: k=" + std::to_string(k) + " exceeds samples per task (" +
                          std::to_string(row.size()) + ")");
    }
    passed += std::any_of(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), [](bool b) { return b; }) ? 1 : 0;
  }
  return static_cast<double>(passed) / static_cast<double>(outcomes.size());
}

// EX gain in percentage points per 1,000 training examples.
inline double data_efficiency(double delta_pp, long long n) {
  if (n < 1) throw ContractError("data_efficiency: n must be >= 1");
  return delta_pp / static_cast<double>(n) * 1000.0;
}

// ---------------------------------------------------------------------------
// Reasoning and turn statistics

struct TurnStats {
  std::size_t trajectories = 0;
  double avg_reasoning_chars = 0.0;
  double avg_turns = 0.0;
  double std_turns = 0.0;  // population
};

struct ReasoningStats {
  TurnStats overall;
  std::map<Difficulty, TurnStats> by_difficulty;
};

// Characters (code points) inside every reasoning block of the trajectory.
inline std::size_t reasoning_chars(const Trajectory& traj) {
  std::size_t n = 0;
  for (const auto& turn : traj.turns) {
    for (const auto& block : reasoning_blocks(turn.raw)) n += utf8_length(block);
  }
  return n;
}

namespace detail {

inline TurnStats summarize(const std::vector<const Trajectory*>& trajs) {
  TurnStats s;
  s.trajectories = trajs.size();
  if (trajs.empty()) return s;
  const double n = static_cast<double>(trajs.size());
  double chars = 0.0;
  double turns = 0.0;
  for (const auto* t : trajs) {
    chars += static_cast<double>(reasoning_chars(*t));
    turns += t->policy_turns();
  }
  s.avg_reasoning_chars = chars / n;
  s.avg_turns = turns / n;
  double var = 0.0;
  for (const auto* t : trajs) var += std::pow(t->policy_turns() - s.avg_turns, 2);
  s.std_turns = std::sqrt(var / n);
  return s;
}

}  // namespace detail

// Trajectories whose task_id is missing from `difficulty` count as medium.
inline ReasoningStats reasoning_stats(const std::vector<Trajectory>& trajectories,
                                      const std::map<std::string, Difficulty>& difficulty = {}) {
  std::vector<const Trajectory*> all;
  std::map<Difficulty, std::vector<const Trajectory*>> grouped;
  for (const auto& t : trajectories) {
    all.push_back(&t);
    const auto it = difficulty.find(t.task_id);
    grouped[it == difficulty.end() ? Difficulty::kMedium : it->second].push_back(&t);
  }
  ReasoningStats out;
  out.overall = detail::summarize(all);
  for (const auto& [d, ts] : grouped) out.by_difficulty[d] = detail::summarize(ts);
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct TaskEval {
  std::string task_id;
  std::vector<std::string> candidates;
  std::string chosen_sql;
  bool correct = false;
  int turns = 0;
  std::size_t reasoning_chars = 0;
  bool operator==(const TaskEval&) const = default;
};

struct Efficiency {
  double delta_pp = 0.0;
  long long n = 1;
  double value = 0.0;
  bool operator==(const Efficiency&) const = default;
};

struct EvalReport {
  std::string benchmark;
  std::vector<TaskEval> per_task;
  std::optional<double> ex_greedy;
  std::optional<double> ex_majority;
  std::map<int, double> pass_at_k;
  std::optional<Efficiency> efficiency;
  std::string version = kVersion;
  bool operator==(const EvalReport&) const = default;
};

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  using J = nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? J(*v) : J(nullptr); };
  J tasks = J::array();
  for (const auto& t : r.per_task) {
    tasks.push_back({{"task_id", t.task_id},
                     {"candidates", t.candidates},
                     {"chosen_sql", t.chosen_sql},
                     {"correct", t.correct},
                     {"turns", t.turns},
                     {"reasoning_chars", t.reasoning_chars}});
  }
  J pass = J::object();
  for (const auto& [k, v] : r.pass_at_k) pass[std::to_string(k)] = v;
  J eff = nullptr;
  if (r.efficiency) eff = {{"delta_pp", r.efficiency->delta_pp}, {"n", r.efficiency->n}, {"value", r.efficiency->value}};
  return {{"version", r.version},   {"benchmark", r.benchmark}, {"ex_greedy", opt(r.ex_greedy)},
          {"ex_majority", opt(r.ex_majority)}, {"pass_at_k", std::move(pass)}, {"efficiency", std::move(eff)},
          {"per_task", std::move(tasks)}};
}

inline EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport r;
  r.version = j.at("version").get<std::string>();
  r.benchmark = j.at("benchmark").get<std::string>();
  if (!j.at("ex_greedy").is_null()) r.ex_greedy = j.at("ex_greedy").get<double>();
  if (!j.at("ex_majority").is_null()) r.ex_majority = j.at("ex_majority").get<double>();
  for (const auto& [k, v] : j.at("pass_at_k").items()) r.pass_at_k[std::stoi(k)] = v.get<double>();
  if (!j.at("efficiency").is_null()) {
    const auto& e = j.at("efficiency");
    r.efficiency = Efficiency{e.at("delta_pp").get<double>(), e.at("n").get<long long>(), e.at("value").get<double>()};
  }
  for (const auto& t : j.at("per_task")) {
    r.per_task.push_back({t.at("task_id").get<std::string>(), t.at("candidates").get<std::vector<std::string>>(),
                          t.at("chosen_sql").get<std::string>(), t.at("correct").get<bool>(), t.at("turns").get<int>(),
                          t.at("reasoning_chars").get<std::size_t>()});
  }
  return r;
}

inline void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write report '" + path.string() + "'");
  out << report_to_json(report).dump(2) << "\n";
  if (!out) throw Error("failed writing report '" + path.string() + "'");
}

inline EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read report '" + path.string() + "'");
  return report_from_json(nlohmann::ordered_json::parse(in));
}

// benchmark,ex_greedy,ex_majority,pass@1..k,efficiency
inline std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "benchmark,ex_greedy,ex_majority";
  for (const auto& [k, v] : r.pass_at_k) out << ",pass@" << k;
  out << ",efficiency\n";
  auto cell = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  out << r.benchmark << "," << cell(r.ex_greedy) << "," << cell(r.ex_majority);
  for (const auto& [k, v] : r.pass_at_k) out << "," << v;
  out << "," << (r.efficiency ? std::to_string(r.efficiency->value) : std::string()) << "\n";
  return out.str();
}

}  // namespace sqlharness
