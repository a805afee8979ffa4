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

// Command-line driver: rollout, score, eval, curate, train-toy, init-db.
//
// Exit codes: 0 success, 1 operational failure, 2 configuration error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sqlharness/curation.hpp"
#include "sqlharness/error.hpp"
#include "sqlharness/eval.hpp"
#include "sqlharness/grpo.hpp"
#include "sqlharness/policy.hpp"
#include "sqlharness/remote_policy.hpp"
#include "sqlharness/rewards.hpp"
#include "sqlharness/rollout.hpp"
#include "sqlharness/taskdata.hpp"
#include "sqlharness/toy_fixture.hpp"
#include "sqlharness/trajectory.hpp"

namespace sqlharness::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

struct HarnessConfig {
  std::string command;

  // data
  fs::path tasks;
  std::string format = "jsonl";
  fs::path db_root;

  // policy
  std::string endpoint;
  std::string api_key;
  std::string model;
  fs::path policy_script;  // {"task_id": [turn, ...], "*": [...]}
  SamplingConfig sampling;

  int turns = 10;
  int group = 6;
  RewardWeights weights;
  ClipConfig clip;
  ExecLimits limits;
  fs::path out = "out";
  int parallelism = 4;
  std::uint64_t seed = 0;

  // score / eval
  fs::path trajectories;
  fs::path predictions;  // {"task_id", "greedy"?, "candidates"?}
  int candidates = 8;
  bool greedy = false;
  std::optional<double> baseline_ex;
  std::optional<long long> train_size;

  // curate
  fs::path records;
  int balanced_n = 700;
  fs::path post_sft;
  fs::path synsql_zero;
  fs::path spider_zero;
  int quota_post_sft = 127;
  int quota_synsql = 100;
  int quota_spider = 100;

  // train-toy
  fs::path fixture;
  int steps = 500;
  double lr = 0.1;
  int inner_epochs = 2;

  // init-db
  fs::path sql;
  fs::path db_out;
};

namespace detail {

using J = nlohmann::ordered_json;

template <class T>
void read_key(const J& j, const char* key, T& dst, std::vector<std::string>& problems) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const J::exception&) {
    problems.push_back(std::string(key) + ": wrong type in config file");
  }
}

inline void read_path(const J& j, const char* key, fs::path& dst, std::vector<std::string>& problems) {
  std::string s;
  if (!j.contains(key)) return;
  read_key(j, key, s, problems);
  dst = s;
}

inline void apply_file(HarnessConfig& c, const J& j, std::vector<std::string>& problems) {
  static const std::set<std::string> kKeys = {
      "tasks",       "format",       "db_root",      "endpoint",       "api_key",      "model",
      "policy_script", "temperature", "top_p",       "max_tokens",     "turns",        "group",
      "weights",     "eps_low",      "eps_high",     "timeout_ms",     "max_rows",     "out",
      "parallelism", "seed",         "trajectories", "predictions",    "candidates",   "greedy",
      "baseline_ex", "train_size",   "records",      "balanced_n",     "post_sft",     "synsql_zero",
      "spider_zero", "quota_post_sft", "quota_synsql", "quota_spider", "fixture",      "steps",
      "lr",          "inner_epochs", "sql",          "db_out"};
  if (!j.is_object()) {
    problems.push_back("config file: expected a JSON object");
    return;
  }
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) problems.push_back("config file: unknown key '" + k + "'");
  }
  read_path(j, "tasks", c.tasks, problems);
  read_key(j, "format", c.format, problems);
  read_path(j, "db_root", c.db_root, problems);
  read_key(j, "endpoint", c.endpoint, problems);
  read_key(j, "api_key", c.api_key, problems);
  read_key(j, "model", c.model, problems);
  read_path(j, "policy_script", c.policy_script, problems);
  read_key(j, "temperature", c.sampling.temperature, problems);
  read_key(j, "top_p", c.sampling.top_p, problems);
  read_key(j, "max_tokens", c.sampling.max_tokens, problems);
  read_key(j, "turns", c.turns, problems);
  read_key(j, "group", c.group, problems);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    read_key(w, "exec", c.weights.exec, problems);
    read_key(w, "turns", c.weights.turns, problems);
    read_key(w, "schema", c.weights.schema, problems);
    read_key(w, "bigram", c.weights.bigram, problems);
    read_key(w, "syntax", c.weights.syntax, problems);
    read_key(w, "format", c.weights.format, problems);
  }
  read_key(j, "eps_low", c.clip.eps_low, problems);
  read_key(j, "eps_high", c.clip.eps_high, problems);
  if (j.contains("timeout_ms")) {
    long long ms = 0;
    read_key(j, "timeout_ms", ms, problems);
    c.limits.timeout = std::chrono::milliseconds(ms);
  }
  read_key(j, "max_rows", c.limits.max_rows_fetched, problems);
  read_path(j, "out", c.out, problems);
  read_key(j, "parallelism", c.parallelism, problems);
  read_key(j, "seed", c.seed, problems);
  read_path(j, "trajectories", c.trajectories, problems);
  read_path(j, "predictions", c.predictions, problems);
  read_key(j, "candidates", c.candidates, problems);
  read_key(j, "greedy", c.greedy, problems);
  if (j.contains("baseline_ex")) {
    double v = 0;
    read_key(j, "baseline_ex", v, problems);
    c.baseline_ex = v;
  }
  if (j.contains("train_size")) {
    long long v = 0;
    read_key(j, "train_size", v, problems);
    c.train_size = v;
  }
  read_path(j, "records", c.records, problems);
  read_key(j, "balanced_n", c.balanced_n, problems);
  read_path(j, "post_sft", c.post_sft, problems);
  read_path(j, "synsql_zero", c.synsql_zero, problems);
  read_path(j, "spider_zero", c.spider_zero, problems);
  read_key(j, "quota_post_sft", c.quota_post_sft, problems);
  read_key(j, "quota_synsql", c.quota_synsql, problems);
  read_key(j, "quota_spider", c.quota_spider, problems);
  read_path(j, "fixture", c.fixture, problems);
  read_key(j, "steps", c.steps, problems);
  read_key(j, "lr", c.lr, problems);
  read_key(j, "inner_epochs", c.inner_epochs, problems);
  read_path(j, "sql", c.sql, problems);
  read_path(j, "db_out", c.db_out, problems);
}

template <class F>
void check(std::vector<std::string>& problems, F&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
}

inline void require_file(std::vector<std::string>& problems, const char* field, const fs::path& p) {
  std::error_code ec;
  if (p.empty()) {
    problems.push_back(std::string(field) + ": required");
  } else if (!fs::is_regular_file(p, ec)) {
    problems.push_back(std::string(field) + ": no such file '" + p.string() + "'");
  }
}

inline void optional_file(std::vector<std::string>& problems, const char* field, const fs::path& p) {
  if (!p.empty()) require_file(problems, field, p);
}

}  // namespace detail

// Every problem found, not just the first.
inline std::vector<std::string> validate(const HarnessConfig& c) {
  std::vector<std::string> p;
  if (c.turns < 1) p.push_back("turns: must be >= 1 (got " + std::to_string(c.turns) + ")");
  if (c.group < 1) p.push_back("group: must be >= 1 (got " + std::to_string(c.group) + ")");
  if (c.candidates < 1) p.push_back("candidates: must be >= 1");
  if (c.parallelism < 1) p.push_back("parallelism: must be >= 1");
  if (c.balanced_n < 0) p.push_back("balanced_n: must be >= 0");
  if (c.quota_post_sft < 0 || c.quota_synsql < 0 || c.quota_spider < 0) p.push_back("quota: must be >= 0");
  if (c.train_size && *c.train_size < 1) p.push_back("train_size: must be >= 1");
  detail::check(p, [&] { c.sampling.validate(); });
  detail::check(p, [&] { c.weights.validate(); });
  detail::check(p, [&] { c.clip.validate(); });
  detail::check(p, [&] { c.limits.validate(); });
  detail::check(p, [&] { parse_task_format(c.format); });

  const bool has_policy = !c.endpoint.empty() || !c.policy_script.empty();
  if (c.command == "rollout") {
    detail::require_file(p, "tasks", c.tasks);
    if (!has_policy) p.push_back("policy: need --endpoint or --policy-script");
    detail::optional_file(p, "policy_script", c.policy_script);
  } else if (c.command == "score") {
    detail::require_file(p, "trajectories", c.trajectories);
    detail::require_file(p, "tasks", c.tasks);
  } else if (c.command == "eval") {
    detail::require_file(p, "tasks", c.tasks);
    detail::optional_file(p, "predictions", c.predictions);
    if (c.predictions.empty() && !has_policy) p.push_back("policy: need --predictions, --endpoint or --policy-script");
    detail::optional_file(p, "policy_script", c.policy_script);
    if (c.baseline_ex.has_value() != c.train_size.has_value()) {
      p.push_back("efficiency: --baseline-ex and --train-size go together");
    }
  } else if (c.command == "curate") {
    detail::require_file(p, "records", c.records);
    detail::optional_file(p, "post_sft", c.post_sft);
    detail::optional_file(p, "synsql_zero", c.synsql_zero);
    detail::optional_file(p, "spider_zero", c.spider_zero);
  } else if (c.command == "train-toy") {
    detail::require_file(p, "fixture", c.fixture);
    if (c.steps < 0) p.push_back("steps: must be >= 0");
    if (!(c.lr > 0)) p.push_back("lr: must be positive");
    if (c.inner_epochs < 1) p.push_back("inner_epochs: must be >= 1");
  } else if (c.command == "init-db") {
    detail::require_file(p, "sql", c.sql);
    if (c.db_out.empty()) p.push_back("db_out: required");
  }
  return p;
}

struct ParseResult {
  HarnessConfig config;
  std::optional<int> early_exit;  // --help / --version
};

// Defaults, then the --config file, then flags.
inline ParseResult parse_config(std::vector<std::string> args, std::ostream& out = std::cout) {
  HarnessConfig c;
  CLI::App app{"Multi-turn text-to-SQL agent harness", "sqlharness"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  app.add_option("--config", config_file, "JSON config file");

  HarnessConfig f;  // flag values; applied only when given
  std::vector<std::pair<CLI::Option*, std::function<void()>>> flags;
  auto add = [&](const std::string& name, auto& flag_dst, auto& cfg_dst, const std::string& help) {
    auto* opt = app.add_option(name, flag_dst, help);
    flags.emplace_back(opt, [&flag_dst, &cfg_dst] { cfg_dst = flag_dst; });
  };
  std::string tasks, db_root, policy_script, out_dir, trajectories, predictions, records, post_sft, synsql_zero,
      spider_zero, fixture, sql, db_out;
  long long timeout_ms = 0;
  double baseline_ex = 0;
  long long train_size = 0;
  add("--tasks", tasks, c.tasks, "task file");
  add("--format", f.format, c.format, "spider-json | bird-json | jsonl");
  add("--db-root", db_root, c.db_root, "database root directory");
  add("--endpoint", f.endpoint, c.endpoint, "chat-completions URL");
  add("--model", f.model, c.model, "model name");
  add("--policy-script", policy_script, c.policy_script, "scripted policy JSON");
  add("--temperature", f.sampling.temperature, c.sampling.temperature, "sampling temperature");
  add("--top-p", f.sampling.top_p, c.sampling.top_p, "nucleus mass");
  add("--max-tokens", f.sampling.max_tokens, c.sampling.max_tokens, "completion token cap");
  add("--turns", f.turns, c.turns, "turn budget T");
  add("--group", f.group, c.group, "rollouts per task G");
  add("--eps-low", f.clip.eps_low, c.clip.eps_low, "lower clip");
  add("--eps-high", f.clip.eps_high, c.clip.eps_high, "upper clip");
  add("--max-rows", f.limits.max_rows_fetched, c.limits.max_rows_fetched, "rows fetched per query");
  add("--out", out_dir, c.out, "output directory");
  add("--parallelism", f.parallelism, c.parallelism, "worker threads");
  add("--seed", f.seed, c.seed, "root seed");
  add("--trajectories", trajectories, c.trajectories, "trajectory JSONL");
  add("--predictions", predictions, c.predictions, "offline predictions JSONL");
  add("--candidates", f.candidates, c.candidates, "sampled candidates per task");
  add("--records", records, c.records, "curation input JSONL {task_id, flags}");
  add("--balanced-n", f.balanced_n, c.balanced_n, "difficulty-balanced set size");
  add("--post-sft", post_sft, c.post_sft, "exploration source JSONL");
  add("--synsql-zero", synsql_zero, c.synsql_zero, "exploration source JSONL");
  add("--spider-zero", spider_zero, c.spider_zero, "exploration source JSONL");
  add("--quota-post-sft", f.quota_post_sft, c.quota_post_sft, "exploration quota");
  add("--quota-synsql", f.quota_synsql, c.quota_synsql, "exploration quota");
  add("--quota-spider", f.quota_spider, c.quota_spider, "exploration quota");
  add("--fixture", fixture, c.fixture, "toy fixture JSON");
  add("--steps", f.steps, c.steps, "training steps");
  add("--lr", f.lr, c.lr, "learning rate");
  add("--inner-epochs", f.inner_epochs, c.inner_epochs, "updates per sampled group");
  add("--sql", sql, c.sql, "SQL script");
  add("--db-out", db_out, c.db_out, "database file to create");
  auto* timeout_opt = app.add_option("--timeout-ms", timeout_ms, "query timeout");
  auto* greedy_opt = app.add_flag("--greedy", f.greedy, "also score one temperature-0 candidate");
  auto* baseline_opt = app.add_option("--baseline-ex", baseline_ex, "baseline EX for data efficiency");
  auto* train_size_opt = app.add_option("--train-size", train_size, "training examples for data efficiency");

  for (const char* name : {"rollout", "score", "eval", "curate", "train-toy", "init-db"}) {
    app.add_subcommand(name)->fallthrough();
  }
  app.get_subcommand("rollout")->description("sample G trajectories per task and score them");
  app.get_subcommand("score")->description("score trajectories against their tasks");
  app.get_subcommand("eval")->description("EX (greedy and majority), Pass@k, data efficiency");
  app.get_subcommand("curate")->description("difficulty-balanced and exploration sets");
  app.get_subcommand("train-toy")->description("GRPO on the template policy");
  app.get_subcommand("init-db")->description("build a SQLite file from a SQL script");

  ParseResult result;
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    result.early_exit = kExitOk;
    return result;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    result.early_exit = kExitOk;
    return result;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  for (auto* sub : app.get_subcommands()) c.command = sub->get_name();

  std::vector<std::string> problems;
  if (!config_file.empty()) {
    try {
      detail::apply_file(c, nlohmann::ordered_json::parse(sqlharness::detail::read_file(config_file)), problems);
    } catch (const nlohmann::ordered_json::parse_error& e) {
      problems.push_back(std::string("config file: invalid JSON: ") + e.what());
    } catch (const DatasetError& e) {
      problems.push_back(std::string("config file: ") + e.what());
    }
  }
  for (auto& [opt, apply] : flags) {
    if (opt->count() > 0) apply();
  }
  if (timeout_opt->count() > 0) c.limits.timeout = std::chrono::milliseconds(timeout_ms);
  if (greedy_opt->count() > 0) c.greedy = f.greedy;
  if (baseline_opt->count() > 0) c.baseline_ex = baseline_ex;
  if (train_size_opt->count() > 0) c.train_size = train_size;

  const auto remote = RemoteConfig::from_env({c.endpoint, c.api_key, c.model});
  c.endpoint = remote.endpoint;
  c.api_key = remote.api_key;
  c.model = remote.model;

  for (auto& p : validate(c)) problems.push_back(std::move(p));
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  result.config = std::move(c);
  return result;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

// Loads tasks, resolves relative database paths and checks they exist.
inline std::vector<TaskInstance> load_checked_tasks(const HarnessConfig& c) {
  auto tasks = load_tasks(c.tasks, c.format, c.db_root);
  const fs::path base = c.db_root.empty() ? c.tasks.parent_path() : c.db_root;
  std::vector<std::string> missing;
  for (auto& t : tasks) {
    if (t.db_path.is_relative()) t.db_path = base / t.db_path;
    std::error_code ec;
    if (!fs::is_regular_file(t.db_path, ec)) missing.push_back(t.id + ": " + t.db_path.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing database files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw ConfigError(msg);
  }
  attach_schemas(tasks);
  return tasks;
}

inline std::map<std::string, const TaskInstance*> index_tasks(const std::vector<TaskInstance>& tasks) {
  std::map<std::string, const TaskInstance*> out;
  for (const auto& t : tasks) out[t.id] = &t;
  return out;
}

inline const TaskInstance& find_task(const std::map<std::string, const TaskInstance*>& idx, const std::string& id) {
  const auto it = idx.find(id);
  if (it == idx.end()) throw DatasetError("unknown task_id '" + id + "'");
  return *it->second;
}

// Per-task scripts with an optional "*" fallback.
inline std::function<PolicyFactory(const std::string&)> policy_source(const HarnessConfig& c) {
  if (!c.policy_script.empty()) {
    const auto doc = nlohmann::ordered_json::parse(sqlharness::detail::read_file(c.policy_script));
    if (!doc.is_object()) throw ConfigError("policy_script: expected an object of task_id -> turns");
    std::map<std::string, std::vector<std::string>> scripts;
    for (const auto& [k, v] : doc.items()) scripts[k] = v.get<std::vector<std::string>>();
    return [scripts](const std::string& task_id) {
      auto it = scripts.find(task_id);
      if (it == scripts.end()) it = scripts.find("*");
      if (it == scripts.end()) throw DatasetError("policy_script: no script for task '" + task_id + "'");
      return scripted_factory(it->second);
    };
  }
  RemoteConfig rc;
  rc.endpoint = c.endpoint;
  rc.api_key = c.api_key;
  rc.model = c.model;
  rc.max_in_flight = c.parallelism;
  auto factory = remote_factory(rc);
  return [factory](const std::string&) { return factory; };
}

inline RolloutOptions rollout_options(const HarnessConfig& c) {
  RolloutOptions opt;
  opt.budget = c.turns;
  opt.sampling = c.sampling;
  opt.limits = c.limits;
  opt.seed = c.seed;
  return opt;
}

inline nlohmann::ordered_json score_line(const std::string& task_id, const std::string& pred,
                                         const RewardBreakdown& r) {
  auto components = reward_to_json(r);
  components.erase("total");
  return {{"task_id", task_id}, {"pred_sql", pred}, {"components", components}, {"total", r.total}};
}

inline std::vector<CurationRecord> read_records(const fs::path& path, std::size_t limit = SIZE_MAX) {
  std::vector<CurationRecord> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read '" + path.string() + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line) && out.size() < limit) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::ordered_json::parse(line);
      out.push_back(CurationRecord::from_flags(j.at("task_id").get<std::string>(), j.at("flags").get<std::vector<bool>>()));
    } catch (const nlohmann::ordered_json::exception& e) {
      throw DatasetError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detail

inline int cmd_rollout(const HarnessConfig& c, std::ostream& out) {
  const auto tasks = detail::load_checked_tasks(c);
  const auto policies = detail::policy_source(c);
  const auto opt = detail::rollout_options(c);
  std::vector<Trajectory> all;
  std::string groups;
  for (const auto& task : tasks) {
    auto g = run_group(task, policies(task.id), read_only_factory(task.db_path), c.group, opt, c.weights, c.parallelism);
    nlohmann::ordered_json line = {{"task_id", task.id}, {"rewards", g.group.rewards()}, {"advantages", g.group.advantages}};
    groups += line.dump() + "\n";
    for (auto& t : g.trajectories) all.push_back(std::move(t));
  }
  fs::create_directories(c.out);
  save_trajectories(all, c.out / "trajectories.jsonl");
  detail::write_file(c.out / "groups.jsonl", groups);
  out << "wrote " << all.size() << " trajectories to " << (c.out / "trajectories.jsonl").string() << "\n";
  return kExitOk;
}

inline int cmd_score(const HarnessConfig& c, std::ostream& out) {
  const auto tasks = detail::load_checked_tasks(c);
  const auto idx = detail::index_tasks(tasks);
  const auto trajs = load_trajectories(c.trajectories);
  std::string lines;
  for (const auto& t : trajs) {
    const auto& task = detail::find_task(idx, t.task_id);
    const auto db = open_database(task.db_path, true);
    const auto r = score_trajectory(t, task, db, c.limits, c.weights);
    lines += detail::score_line(t.task_id, t.final_sql.value_or(""), r).dump() + "\n";
  }
  detail::write_file(c.out / "scores.jsonl", lines);
  out << "scored " << trajs.size() << " trajectories\n";
  return kExitOk;
}

inline int cmd_eval(const HarnessConfig& c, std::ostream& out) {
  const auto tasks = detail::load_checked_tasks(c);
  const auto idx = detail::index_tasks(tasks);

  struct Entry {
    std::optional<std::string> greedy;
    std::vector<std::string> candidates;
    int turns = 0;
    std::size_t reasoning = 0;
  };
  std::map<std::string, Entry> entries;

  if (!c.predictions.empty()) {
    std::ifstream in(c.predictions, std::ios::binary);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::ordered_json::parse(line);
        auto& e = entries[j.at("task_id").get<std::string>()];
        if (j.contains("greedy")) e.greedy = j.at("greedy").get<std::string>();
        if (j.contains("candidates")) e.candidates = j.at("candidates").get<std::vector<std::string>>();
      } catch (const nlohmann::ordered_json::exception& ex) {
        throw DatasetError(c.predictions.string() + " line " + std::to_string(n) + ": " + ex.what());
      }
    }
  } else {
    const auto policies = detail::policy_source(c);
    for (const auto& task : tasks) {
      auto& e = entries[task.id];
      const auto db = open_database(task.db_path, true);
      const auto factory = policies(task.id);
      std::vector<Trajectory> trajs;
      if (c.greedy) {
        auto opt = detail::rollout_options(c);
        opt.sampling.temperature = 0.0;
        opt.seed = derive_seed(c.seed, task.id + "/greedy", 0);
        auto policy = factory(opt.seed);
        trajs.push_back(run_trajectory(task, *policy, db, opt));
        e.greedy = trajs.back().final_sql.value_or("");
      }
      auto opt = detail::rollout_options(c);
      GroupRollout g = run_group(task, factory, read_only_factory(task.db_path), c.candidates, opt, c.weights,
                                 c.parallelism);
      for (auto& t : g.trajectories) {
        e.candidates.push_back(t.final_sql.value_or(""));
        trajs.push_back(std::move(t));
      }
      const auto& first = trajs.front();
      e.turns = first.policy_turns();
      e.reasoning = reasoning_chars(first);
    }
  }

  EvalReport report;
  report.benchmark = c.tasks.stem().string();
  std::vector<bool> greedy_ok, majority_ok;
  std::vector<std::vector<bool>> matrix;
  for (const auto& [id, e] : entries) {
    const auto& task = detail::find_task(idx, id);
    const auto db = open_database(task.db_path, true);
    TaskEval te;
    te.task_id = id;
    te.candidates = e.candidates;
    te.turns = e.turns;
    te.reasoning_chars = e.reasoning;
    if (e.greedy) {
      greedy_ok.push_back(exec_reward(*e.greedy, task.gold_sql, db, c.limits) == 1);
      te.chosen_sql = *e.greedy;
      te.correct = greedy_ok.back();
    }
    if (!e.candidates.empty()) {
      std::vector<bool> row;
      for (const auto& s : e.candidates) row.push_back(!s.empty() && exec_reward(s, task.gold_sql, db, c.limits) == 1);
      matrix.push_back(row);
      const auto chosen = majority_vote_index(e.candidates, db, c.limits);
      majority_ok.push_back(row[chosen]);
      if (!e.greedy) {
        te.chosen_sql = e.candidates[chosen];
        te.correct = row[chosen];
      }
    }
    report.per_task.push_back(std::move(te));
  }
  if (!greedy_ok.empty()) report.ex_greedy = execution_accuracy(greedy_ok);
  if (!majority_ok.empty()) report.ex_majority = execution_accuracy(majority_ok);
  if (!matrix.empty()) {
    std::size_t n = SIZE_MAX;
    for (const auto& r : matrix) n = std::min(n, r.size());
    for (std::size_t k = 1; k <= n; ++k) report.pass_at_k[static_cast<int>(k)] = pass_at_k(matrix, k);
  }
  if (c.baseline_ex && c.train_size) {
    const auto ex = report.ex_greedy ? report.ex_greedy : report.ex_majority;
    if (!ex) throw DatasetError("efficiency: no EX value to compare against the baseline");
    const double delta = *ex - *c.baseline_ex;
    report.efficiency = Efficiency{delta, *c.train_size, data_efficiency(delta, *c.train_size)};
  }
  fs::create_directories(c.out);
  emit_report(report, c.out / "report.json");
  detail::write_file(c.out / "summary.csv", report_csv(report));
  auto fmt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
  out << "EX greedy " << fmt(report.ex_greedy) << ", EX majority " << fmt(report.ex_majority) << "\n";
  return kExitOk;
}

inline int cmd_curate(const HarnessConfig& c, std::ostream& out) {
  auto records = detail::read_records(c.records);
  const auto n = static_cast<std::size_t>(c.balanced_n);
  auto selected = select_balanced(records, n);
  std::set<std::string> chosen;
  for (const auto& r : selected) chosen.insert(r.task_id);

  auto source = [](const fs::path& p, int quota) {
    return p.empty() ? std::vector<CurationRecord>{} : detail::read_records(p, static_cast<std::size_t>(quota));
  };
  auto exploration = assemble_exploration(source(c.post_sft, c.quota_post_sft), source(c.synsql_zero, c.quota_synsql),
                                          source(c.spider_zero, c.quota_spider));
  std::vector<CurationRecord> report = selected;
  for (auto& r : exploration.records) report.push_back(r);
  for (auto& r : records) {
    if (!chosen.count(r.task_id)) {
      r.bucket = Bucket::kRejected;
      report.push_back(r);
    }
  }
  fs::create_directories(c.out);
  save_curation_report(report, c.out / "curation.jsonl");
  out << "balanced " << selected.size() << ", exploration " << exploration.records.size() << " ("
      << exploration.post_sft_failures << "+" << exploration.synsql_zero << "+" << exploration.spider_zero << ")\n";
  return kExitOk;
}

inline int cmd_train_toy(const HarnessConfig& c, std::ostream& out) {
  auto fixture = load_toy_fixture(c.fixture);
  fs::create_directories(c.out);
  materialize(fixture, c.out / "toy.sqlite");
  const auto rewards = candidate_rewards(fixture, c.weights);
  ToyHyper h;
  h.lr = c.lr;
  h.steps = c.steps;
  h.group_size = c.group;
  h.clip = c.clip;
  h.inner_epochs = c.inner_epochs;
  h.seed = c.seed;
  const auto result = toy_train(fixture.initial_policy(), rewards, h);
  detail::write_file(c.out / "metrics.csv", metrics_csv(result.metrics));
  const auto p = result.policy.probabilities();
  out << "candidate rewards:";
  for (double r : rewards) out << " " << r;
  out << "\nfinal p_best " << p[result.best_index] << " (candidate " << result.best_index << ")\n";
  return kExitOk;
}

inline int cmd_init_db(const HarnessConfig& c, std::ostream& out) {
  Database::create_from_script(c.db_out, sqlharness::detail::read_file(c.sql));
  out << "created " << c.db_out.string() << "\n";
  return kExitOk;
}

inline int dispatch(const HarnessConfig& c, std::ostream& out) {
  if (c.command == "rollout") return cmd_rollout(c, out);
  if (c.command == "score") return cmd_score(c, out);
  if (c.command == "eval") return cmd_eval(c, out);
  if (c.command == "curate") return cmd_curate(c, out);
  if (c.command == "train-toy") return cmd_train_toy(c, out);
  if (c.command == "init-db") return cmd_init_db(c, out);
  throw ConfigError("unknown command '" + c.command + "'");
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto parsed = parse_config(args, out);
    if (parsed.early_exit) return *parsed.early_exit;
    return dispatch(parsed.config, out);
  } catch (const ConfigError& e) {
    err << "sqlharness: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "sqlharness: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace sqlharness::cli
