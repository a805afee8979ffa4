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

// Training-data curation: pass@G over sampled rollouts, the difficulty score
// S(q) = pass@G if 0 < pass@G < 1 else 1, difficulty-balanced selection,
// the exploration set and SFT trajectory filtering.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sqlharness/error.hpp"
#include "sqlharness/reward_types.hpp"
#include "sqlharness/taskdata.hpp"
#include "sqlharness/trajectory.hpp"

namespace sqlharness {

enum class Bucket { kBalanced, kExploration, kRejected };

inline std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::kBalanced: return "balanced";
    case Bucket::kExploration: return "exploration";
    case Bucket::kRejected: return "rejected";
  }
  return "rejected";
}

inline Bucket bucket_from_string(std::string_view s) {
  if (s == "balanced") return Bucket::kBalanced;
  if (s == "exploration") return Bucket::kExploration;
  if (s == "rejected") return Bucket::kRejected;
  throw DatasetError("unknown bucket '" + std::string(s) + "'");
}

inline Fraction pass_at_g(const std::vector<bool>& flags) {
  if (flags.empty()) throw ContractError("pass_at_g: no outcomes");
  return {static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true)), flags.size()};
}

inline Fraction difficulty_score(const Fraction& p) {
  if (p.num > p.den) throw ContractError("difficulty_score: pass rate above 1");
  if (p.num > 0 && p.num < p.den) return p;
  return {1, 1};
}

// One flag per rollout: r_exec of each scored trajectory.
inline std::vector<bool> outcome_flags(const std::vector<Trajectory>& group) {
  std::vector<bool> flags;
  flags.reserve(group.size());
  for (const auto& t : group) {
    if (!t.reward) throw ContractError("outcome_flags: trajectory for task '" + t.task_id + "' is not scored");
    flags.push_back(t.reward->r_exec == 1);
  }
  return flags;
}

struct CurationRecord {
  std::string task_id;
  std::vector<bool> outcome_flags;
  Fraction pass_rate;
  Fraction score;
  Bucket bucket = Bucket::kRejected;

  static CurationRecord from_flags(std::string task_id, std::vector<bool> flags) {
    CurationRecord r;
    r.task_id = std::move(task_id);
    r.outcome_flags = std::move(flags);
    r.pass_rate = pass_at_g(r.outcome_flags);
    r.score = difficulty_score(r.pass_rate);
    return r;
  }
};

namespace detail {

// Exact comparison of two fractions without floating point.
inline bool fraction_less(const Fraction& a, const Fraction& b) { return a.num * b.den < b.num * a.den; }

}  // namespace detail

// The n records with the smallest score, ties broken by task_id.
inline std::vector<CurationRecord> select_balanced(std::vector<CurationRecord> records, std::size_t n) {
  if (n > records.size()) {
    throw ContractError("select_balanced: asked for " + std::to_string(n) + " of " + std::to_string(records.size()) +
                        " records");
  }
  std::stable_sort(records.begin(), records.end(), [](const CurationRecord& a, const CurationRecord& b) {
    if (detail::fraction_less(a.score, b.score)) return true;
    if (detail::fraction_less(b.score, a.score)) return false;
    return a.task_id < b.task_id;
  });
  records.resize(n);
  for (auto& r : records) r.bucket = Bucket::kBalanced;
  return records;
}

struct ExplorationSet {
  std::vector<CurationRecord> records;
  std::size_t post_sft_failures = 0;
  std::size_t synsql_zero = 0;
  std::size_t spider_zero = 0;
};

inline ExplorationSet assemble_exploration(std::vector<CurationRecord> post_sft_failures,
                                           std::vector<CurationRecord> synsql_zero,
                                           std::vector<CurationRecord> spider_zero) {
  std::set<std::string> seen;
  std::vector<std::string> dupes;
  for (const auto* src : {&post_sft_failures, &synsql_zero, &spider_zero}) {
    for (const auto& r : *src) {
      if (!seen.insert(r.task_id).second) dupes.push_back(r.task_id);
    }
  }
  if (!dupes.empty()) {
    std::string ids;
    for (const auto& d : dupes) ids += (ids.empty() ? "" : ", ") + d;
    throw DatasetError("exploration sources overlap on task ids: " + ids);
  }
  ExplorationSet out;
  out.post_sft_failures = post_sft_failures.size();
  out.synsql_zero = synsql_zero.size();
  out.spider_zero = spider_zero.size();
  for (auto* src : {&post_sft_failures, &synsql_zero, &spider_zero}) {
    for (auto& r : *src) {
      r.bucket = Bucket::kExploration;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

struct SftCandidate {
  Trajectory trajectory;
  RewardBreakdown reward;
  Difficulty difficulty = Difficulty::kMedium;
};

struct SftSelection {
  std::vector<SftCandidate> selected;
  bool short_of_quota = false;
};

// Hardest first: extra, hard, medium, simple.
inline int sft_priority(Difficulty d) {
  switch (d) {
    case Difficulty::kExtra: return 0;
    case Difficulty::kHard: return 1;
    case Difficulty::kMedium: return 2;
    case Difficulty::kSimple: return 3;
  }
  return 4;
}

inline SftSelection filter_sft_trajectories(const std::vector<SftCandidate>& candidates, std::size_t quota) {
  SftSelection out;
  for (const auto& c : candidates) {
    if (c.reward.r_exec == 1) out.selected.push_back(c);
  }
  std::stable_sort(out.selected.begin(), out.selected.end(), [](const SftCandidate& a, const SftCandidate& b) {
    const int pa = sft_priority(a.difficulty);
    const int pb = sft_priority(b.difficulty);
    if (pa != pb) return pa < pb;
    return a.trajectory.task_id < b.trajectory.task_id;
  });
  out.short_of_quota = out.selected.size() < quota;
  if (out.selected.size() > quota) out.selected.resize(quota);
  return out;
}

// ---------------------------------------------------------------------------
// Report JSONL: {task_id, flags, pass_at_g, score, bucket}

inline nlohmann::ordered_json curation_to_json(const CurationRecord& r) {
  return {{"task_id", r.task_id},
          {"flags", r.outcome_flags},
          {"pass_at_g", r.pass_rate.value()},
          {"score", r.score.value()},
          {"bucket", to_string(r.bucket)}};
}

inline void save_curation_report(const std::vector<CurationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& r : records) out << curation_to_json(r).dump() << "\n";
}

}  // namespace sqlharness
