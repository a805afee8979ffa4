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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sqlharness/cli.hpp"
#include "sqlharness/curation.hpp"
#include "sqlharness/eval.hpp"
#include "sqlharness/grpo.hpp"
#include "sqlharness/rewards.hpp"
#include "sqlharness/rollout.hpp"
#include "sqlharness/toy_fixture.hpp"
#include "support.hpp"

namespace {

using namespace sqlharness;
using testsupport::TempDir;
namespace fs = std::filesystem;

// Collects failed expectations for one criterion.
struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  template <class A, class B>
  void equal(const A& got, const B& want, const std::string& what) {
    if (!(got == want)) {
      std::ostringstream s;
      s << what << " (got " << got << ", want " << want << ")";
      failures.push_back(s.str());
    }
  }
};

std::ostream& operator<<(std::ostream& os, const Fraction& f) { return os << f.str(); }

// ---------------------------------------------------------------------------
// 1. Reward golden values

void reward_golden(Check& c) {
  c.equal(bigram_reward("SELECT name FROM teacher", "SELECT name FROM student"), Fraction{2, 4}, "bigram 2/4");
  c.equal(bigram_reward("SELECT name FROM teacher", "SELECT name FROM student").value(), 0.5, "bigram value");
  SchemaCatalog cat;
  cat.tables.push_back({"Employees", {{"Id", "INTEGER", true}, {"Name", "TEXT", false}, {"Salary", "REAL", false}}});
  const auto s = schema_reward("SELECT Wages FROM Employees", "SELECT Salary FROM Employees", cat);
  c.equal(s, Fraction{1, 3}, "schema 1/3");
  c.expect(s.num == 1 && s.den == 3, "schema fraction is 1/3 in lowest terms");
}

// ---------------------------------------------------------------------------
// 2. Turn-reward truth table

void turn_truth_table(Check& c) {
  const std::map<Difficulty, std::pair<std::string, std::string>> table = {
      {Difficulty::kSimple, {"1100000000", "1100000000"}},
      {Difficulty::kMedium, {"1110000000", "1110000000"}},
      {Difficulty::kHard, {"0000000000", "1111111110"}},
      {Difficulty::kExtra, {"0000000000", "1111111110"}},
  };
  int cells = 0;
  for (const auto& [d, rows] : table) {
    for (int t = 1; t <= 10; ++t) {
      for (int exec = 0; exec <= 1; ++exec) {
        const auto& row = exec ? rows.second : rows.first;
        c.equal(turn_reward(d, t, 10, exec), row[static_cast<std::size_t>(t - 1)] - '0',
                std::string(to_string(d)) + " t=" + std::to_string(t) + " exec=" + std::to_string(exec));
        ++cells;
      }
    }
  }
  c.equal(cells, 80, "cell count");
}

// ---------------------------------------------------------------------------
// 3. Total-reward bound

void total_bound(Check& c) {
  c.equal(total_reward(RewardBreakdown{1, 1, 1.0, 1.0, 1, 1, 0}).total, 11.0, "all-ones total");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int outside = 0;
  for (int i = 0; i < 10000; ++i) {
    RewardBreakdown r;
    r.r_exec = static_cast<int>(rng() % 2);
    r.r_turns = static_cast<int>(rng() % 2);
    r.r_schema = unit(rng);
    r.r_bigram = unit(rng);
    r.r_syntax = static_cast<int>(rng() % 2);
    r.r_format = static_cast<int>(rng() % 2);
    const double t = total_reward(r).total;
    outside += (t < 0.0 || t > 11.0) ? 1 : 0;
  }
  c.equal(outside, 0, "totals outside [0, 11]");
}

// ---------------------------------------------------------------------------
// 4. Rollout loop conformance

TaskInstance shop_task(const fs::path& db) {
  TaskInstance t;
  t.id = "avg";
  t.question = "what is the average price of all products?";
  t.database_id = "shop";
  t.db_path = db;
  t.gold_sql = "SELECT AVG(price) FROM products";
  t.difficulty = Difficulty::kHard;
  t.schema = introspect_schema(open_database(db));
  return t;
}

void rollout_conformance(Check& c) {
  TempDir dir;
  const auto db_path = testsupport::make_db(dir / "shop.sqlite",
                                            std::string(testsupport::kProductsScript) + testsupport::numbers_script(120));
  const auto task = shop_task(db_path);
  const auto db = open_database(db_path, true);
  RolloutOptions opt;

  ScriptedPolicy worked({"<reasoning>average</reasoning><sql>SELECT AVG(price) FROM products</sql>",
                         "<reasoning>done</reasoning><solution>SELECT AVG(price) FROM products</solution>"});
  const auto t = run_trajectory(task, worked, db, opt);
  c.equal(t.turns.size(), 2u, "(a) two turns");
  c.expect(t.termination == Termination::kSolution, "(a) solution termination");
  if (!t.turns.empty() && t.turns[0].observation) {
    c.equal(wrap_observation(*t.turns[0].observation),
            std::string("<observation>\n   AVG(price)\n0       24.75\nYou have 9 turns left to complete the task.\n"
                        "</observation>"),
            "(a) observation bytes");
  } else {
    c.expect(false, "(a) first turn has an observation");
  }

  ScriptedPolicy invalid({"I think the answer is 24.75", "<reasoning>r</reasoning><solution>SELECT 1</solution>"});
  const auto ti = run_trajectory(task, invalid, db, opt);
  c.expect(!ti.turns.empty() && ti.turns[0].observation &&
               ti.turns[0].observation->text ==
                   "Your previous action is invalid. Think and try again.\nYou have 9 turns left to complete the task.",
           "(b) invalid-action sentence");

  ScriptedPolicy big({"<reasoning>r</reasoning><sql>SELECT n FROM big</sql>",
                      "<reasoning>r</reasoning><solution>SELECT 1</solution>"});
  const auto tb = run_trajectory(task, big, db, opt);
  if (!tb.turns.empty() && tb.turns[0].observation) {
    const auto& text = tb.turns[0].observation->text;
    std::istringstream in(text);
    std::string line;
    int data_rows = -1;  // header
    bool notice = false;
    while (std::getline(in, line)) {
      if (line.rfind("[output truncated", 0) == 0) {
        notice = line == "[output truncated: showing first 50 of 120 rows]";
        break;
      }
      ++data_rows;
    }
    c.equal(data_rows, 50, "(c) data rows shown");
    c.expect(notice, "(c) truncation notice");
  } else {
    c.expect(false, "(c) observation present");
  }

  RolloutOptions three = opt;
  three.budget = 3;
  ScriptedPolicy probe({"<reasoning>r</reasoning><sql>SELECT name FROM products</sql>",
                        "<reasoning>r</reasoning><sql>SELECT name FROM products</sql>",
                        "<reasoning>r</reasoning><sql>SELECT name FROM products</sql>",
                        "<solution>SELECT AVG(price) FROM products</solution>"});
  const auto tf = run_trajectory(task, probe, db, three);
  c.expect(tf.termination == Termination::kBudgetForced, "(d) budget_forced");
  c.equal(tf.turns.size(), 4u, "(d) three policy turns plus the forced one");
  c.expect(!tf.turns.empty() && tf.turns.back().forced_final, "(d) forced final generation");
  c.expect(tf.final_sql == std::optional<std::string>("SELECT AVG(price) FROM products"), "(d) final SQL");
}

// ---------------------------------------------------------------------------
// 5. GRPO math

RolloutGroup make_group(const std::vector<double>& old_logits, const std::vector<std::size_t>& idx,
                        const std::vector<double>& rewards) {
  const auto lp = log_softmax(old_logits);
  RolloutGroup g;
  g.task_id = "g";
  for (std::size_t i = 0; i < idx.size(); ++i) g.members.push_back({idx[i], rewards[i], lp[idx[i]]});
  g.normalize();
  return g;
}

void grpo_math(Check& c) {
  const ClipConfig clip;
  c.equal(clipped_term(1.5, 1.0, clip), 1.28, "clipped_term(1.5, +1)");
  c.equal(clipped_term(0.5, -1.0, clip), -0.8, "clipped_term(0.5, -1)");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    std::vector<double> old_logits(k), logits(k);
    for (std::size_t i = 0; i < k; ++i) {
      old_logits[i] = unit(rng) * 2 - 1;
      logits[i] = old_logits[i] + (unit(rng) - 0.5) * 0.6;
    }
    std::vector<std::size_t> idx(2 + rng() % 6);
    std::vector<double> rew(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = rng() % k;
      rew[i] = std::floor(unit(rng) * 4);
    }
    const auto g = make_group(old_logits, idx, rew);
    const auto lp = log_softmax(logits);
    bool near_kink = false;
    for (const auto& m : g.members) {
      const double rho = std::exp(lp[m.index] - *m.old_logprob);
      near_kink |= std::fabs(rho - clip.lower()) < 1e-3 || std::fabs(rho - clip.upper()) < 1e-3;
    }
    if (near_kink) continue;
    ++checked;
    worst = std::max(worst, grad_check(TemplatePolicy(std::vector<std::string>(k, "c"), logits), {g}, clip));
  }
  c.expect(checked > 200, "enough grad checks");
  c.expect(worst < 1e-4, "grad_check max relative error " + std::to_string(worst));

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits = {unit(rng), unit(rng), unit(rng)};
    const double r = std::floor(unit(rng) * 11);
    const auto g = make_group(logits, {rng() % 3, rng() % 3, rng() % 3, rng() % 3}, {r, r, r, r});
    for (double x : grpo_gradient(logits, {g}, clip)) c.expect(x == 0.0, "degenerate group gradient is zero");
  }
}

// ---------------------------------------------------------------------------
// 6. Clip-higher separation

void clip_higher(Check& c) {
  // Old policy uniform over three; new p = (5/12, 1/5, 23/60), so the A > 0
  // member has ratio 1.25 and the A < 0 member 0.6.
  const std::vector<double> old_logits = {0.0, 0.0, 0.0};
  const std::vector<double> logits = {std::log(5.0 / 12.0), std::log(0.2), std::log(23.0 / 60.0)};
  const auto g = make_group(old_logits, {0, 1}, {1.0, 0.0});
  const auto lp = log_softmax(logits);
  const double rho_pos = std::exp(lp[0] - *g.members[0].old_logprob);
  c.expect(g.advantages[0] > 0.0, "member 0 has positive advantage");
  c.expect(rho_pos > 1.2 && rho_pos <= 1.28, "ratio in (1+eps_low, 1+eps_high]: " + std::to_string(rho_pos));

  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double symmetric = norm(grpo_gradient(logits, {g}, ClipConfig{0.2, 0.2}));
  const double higher = norm(grpo_gradient(logits, {g}, ClipConfig{0.2, 0.28}));
  c.equal(symmetric, 0.0, "symmetric-clip gradient norm");
  c.expect(higher > 0.0, "clip-higher gradient norm > 0");
}

// ---------------------------------------------------------------------------
// 7. Toy RL convergence

// REINFORCE with group-normalized advantages and its own sampler.
std::vector<double> reinforce_oracle(std::size_t n, const std::vector<double>& rewards, int steps, double lr) {
  std::vector<double> theta(n, 0.0);
  std::mt19937_64 rng(1234);
  for (int step = 0; step < steps; ++step) {
    std::vector<double> p(n);
    const double mx = *std::max_element(theta.begin(), theta.end());
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) z += p[k] = std::exp(theta[k] - mx);
    for (auto& x : p) x /= z;
    std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
    std::vector<std::size_t> idx(6);
    std::vector<double> r(6);
    for (std::size_t i = 0; i < 6; ++i) r[i] = rewards[idx[i] = pick(rng)];
    double mean = 0.0, var = 0.0;
    for (double x : r) mean += x / 6.0;
    for (double x : r) var += (x - mean) * (x - mean) / 6.0;
    const double sd = std::sqrt(var);
    if (sd == 0.0) continue;
    for (std::size_t i = 0; i < 6; ++i) {
      const double a = (r[i] - mean) / sd;
      for (std::size_t k = 0; k < n; ++k) theta[k] += lr * a * ((k == idx[i]) - p[k]) / 6.0;
    }
  }
  return theta;
}

void toy_convergence(Check& c) {
  auto fixture = load_toy_fixture(testsupport::fixture("toy_fixture.json"));
  TempDir dir;
  materialize(fixture, dir / "toy.sqlite");
  const auto rewards = candidate_rewards(fixture, {});
  c.equal(rewards.size(), 4u, "four candidates");
  ToyHyper h;
  const auto a = toy_train(fixture.initial_policy(), rewards, h);
  const auto b = toy_train(fixture.initial_policy(), rewards, h);
  const double p_best = a.policy.probabilities()[a.best_index];
  c.expect(p_best > 0.9, "P(best) after 500 steps = " + std::to_string(p_best));
  c.expect(a.policy.logits == b.policy.logits, "deterministic under a fixed seed");
  const auto ref = reinforce_oracle(rewards.size(), rewards, 500, 0.1);
  const auto argmax = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  c.equal(argmax(ref), argmax(a.policy.logits), "REINFORCE oracle argmax");
  c.equal(argmax(a.policy.logits), a.best_index, "argmax is the best candidate");
}

// ---------------------------------------------------------------------------
// 8. Curation

void curation(Check& c) {
  c.equal(difficulty_score({0, 6}), Fraction{1, 1}, "S(0)");
  c.equal(difficulty_score({1, 6}), Fraction{1, 6}, "S(1/6)");
  c.equal(difficulty_score({3, 6}), Fraction{1, 2}, "S(1/2)");
  c.equal(difficulty_score({6, 6}), Fraction{1, 1}, "S(1)");

  std::mt19937_64 rng(2800);
  std::vector<CurationRecord> pool;
  for (int i = 0; i < 2800; ++i) {
    std::vector<bool> flags(6);
    for (std::size_t k = 0; k < 6; ++k) flags[k] = rng() % 3 == 0;
    pool.push_back(CurationRecord::from_flags("q" + std::to_string(100000 + i), flags));
  }
  const auto sel = select_balanced(pool, 700);
  c.equal(sel.size(), 700u, "balanced size");
  std::set<std::string> chosen;
  double max_sel = 0.0, min_unsel = 2.0;
  for (const auto& r : sel) {
    chosen.insert(r.task_id);
    max_sel = std::max(max_sel, r.score.value());
  }
  for (const auto& r : pool) {
    if (!chosen.count(r.task_id)) min_unsel = std::min(min_unsel, r.score.value());
  }
  c.expect(max_sel <= min_unsel, "max selected score <= min unselected score");

  auto zeros = [](const std::string& prefix, int n) {
    std::vector<CurationRecord> out;
    for (int i = 0; i < n; ++i) out.push_back(CurationRecord::from_flags(prefix + std::to_string(i), {false}));
    return out;
  };
  c.equal(assemble_exploration(zeros("a", 127), zeros("b", 100), zeros("c", 100)).records.size(), 327u,
          "exploration size");
}

// ---------------------------------------------------------------------------
// 9. Data efficiency

void efficiency(Check& c) {
  auto two = [](double x) { return std::round(x * 100.0) / 100.0; };
  c.equal(two(data_efficiency(86.0 - 82.2, 2000)), 1.90, "(86.0-82.2, 2000)");
  c.equal(two(data_efficiency(60.1 - 50.9, 2000)), 4.60, "(60.1-50.9, 2000)");
  c.equal(two(data_efficiency(83.5 - 82.2, 5000)), 0.26, "(83.5-82.2, 5000)");
  c.equal(two(data_efficiency(58.9 - 50.9, 5000)), 1.60, "(58.9-50.9, 5000)");
}

// ---------------------------------------------------------------------------
// 10. End-to-end mini-benchmark

std::string solution(const std::string& sql) {
  return "<reasoning>answer</reasoning><solution>" + sql + "</solution>";
}

void minibench(Check& c) {
  const auto doc = nlohmann::json::parse(testsupport::slurp(testsupport::fixture("minibench.json")));
  TempDir dir;
  const auto db_path = testsupport::make_db(dir / "minibench.sqlite", doc.at("setup_sql").get<std::string>());
  const auto schema = introspect_schema(open_database(db_path));
  const auto db = open_database(db_path, true);

  std::vector<TaskInstance> tasks;
  std::vector<bool> planted_greedy, planted_majority;
  std::string predictions;
  std::vector<bool> greedy_ok, majority_ok;
  RolloutOptions opt;
  opt.seed = 7;
  for (const auto& tj : doc.at("tasks")) {
    TaskInstance t;
    t.id = tj.at("id").get<std::string>();
    t.question = tj.at("question").get<std::string>();
    t.database_id = "minibench";
    t.db_path = db_path;
    t.schema = schema;
    t.gold_sql = tj.at("gold_sql").get<std::string>();
    t.difficulty = parse_difficulty(tj.at("difficulty").get<std::string>());
    tasks.push_back(t);

    planted_greedy.push_back(tj.at("greedy").at("correct").get<bool>());
    std::vector<std::string> cand_sql;
    std::size_t planted_correct = 0;
    for (const auto& cj : tj.at("candidates")) {
      cand_sql.push_back(cj.at("sql").get<std::string>());
      const bool correct = cj.at("correct").get<bool>();
      planted_correct += correct ? 1 : 0;
      c.equal(exec_reward(cand_sql.back(), t.gold_sql, db, {}), correct ? 1 : 0, t.id + " planted label");
    }
    planted_majority.push_back(planted_correct >= 5);

    // Greedy: one scripted session at temperature 0.
    RolloutOptions greedy_opt = opt;
    greedy_opt.sampling.temperature = 0.0;
    ScriptedPolicy greedy({solution(tj.at("greedy").at("sql").get<std::string>())});
    const auto gt = run_trajectory(t, greedy, db, greedy_opt);
    greedy_ok.push_back(exec_reward(gt.final_sql.value_or(""), t.gold_sql, db, {}) == 1);

    // Candidates: the factory maps each member's derived seed to its script.
    std::map<std::uint64_t, std::string> by_seed;
    for (std::size_t i = 0; i < cand_sql.size(); ++i) by_seed[derive_seed(opt.seed, t.id, i)] = solution(cand_sql[i]);
    PolicyFactory factory = [by_seed](std::uint64_t seed) {
      return std::make_unique<ScriptedPolicy>(std::vector<std::string>{by_seed.at(seed)});
    };
    const auto g = run_group(t, factory, read_only_factory(db_path), static_cast<int>(cand_sql.size()), opt, {}, 4);
    std::vector<std::string> finals;
    for (const auto& tr : g.trajectories) finals.push_back(tr.final_sql.value_or(""));
    c.expect(finals == cand_sql, t.id + " candidates arrive in submission order");
    const auto chosen = majority_vote(finals, db);
    majority_ok.push_back(exec_reward(chosen, t.gold_sql, db, {}) == 1);

    predictions += nlohmann::json{{"task_id", t.id}, {"greedy", tj.at("greedy").at("sql")}, {"candidates", cand_sql}}
                       .dump() +
                   "\n";
  }
  c.equal(execution_accuracy(planted_greedy), 70.0, "planted greedy count");
  c.equal(execution_accuracy(planted_majority), 80.0, "planted consensus count");
  c.equal(execution_accuracy(greedy_ok), 70.0, "EX_greedy");
  c.equal(execution_accuracy(majority_ok), 80.0, "EX_majority");

  // Same numbers through the command-line eval path.
  save_tasks(tasks, dir / "tasks.jsonl");
  testsupport::write_text(dir / "predictions.jsonl", predictions);
  std::ostringstream out, err;
  const int code = cli::run({"eval", "--tasks", (dir / "tasks.jsonl").string(), "--predictions",
                             (dir / "predictions.jsonl").string(), "--out", (dir / "out").string()},
                            out, err);
  c.equal(code, 0, "cli eval exit code");
  if (code == 0) {
    const auto report = load_report(dir / "out" / "report.json");
    c.expect(report.ex_greedy == std::optional<double>(70.0), "cli EX_greedy 70.0");
    c.expect(report.ex_majority == std::optional<double>(80.0), "cli EX_majority 80.0");
  }
}

// ---------------------------------------------------------------------------
// 11. Scope statement

void scope_statement(Check&) {
  std::cout << "  note: EX figures for RL-trained language models need GPU training and are not reproduced here;\n"
               "        criteria 1-10 (invariant suites, oracle equivalence, planted-accuracy checks) stand in for them.\n";
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Check&)> run;
  double budget_s;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "reward golden values (bigram 2/4, schema 1/3)", reward_golden, 1},
      {2, "turn-reward truth table (80 cells at T=10)", turn_truth_table, 1},
      {3, "total reward within [0, 11], all-ones = 11", total_bound, 5},
      {4, "rollout loop conformance (transcript, invalid action, 50-row cap, forced final)", rollout_conformance, 10},
      {5, "GRPO math (grad check, clipped terms, degenerate groups)", grpo_math, 10},
      {6, "clip-higher separation", clip_higher, 5},
      {7, "toy RL convergence and REINFORCE agreement", toy_convergence, 60},
      {8, "curation (S(q), 2800 -> 700, 127+100+100 = 327)", curation, 5},
      {9, "data-efficiency arithmetic", efficiency, 1},
      {10, "mini-benchmark EX_greedy 70.0, EX_majority 80.0", minibench, 30},
      {11, "scope: trained-model EX figures are not desk-reproducible", scope_statement, 1},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > cr.budget_s) check.failures.push_back("took " + std::to_string(secs) + " s");
    const bool ok = check.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s criterion %d: %s (%.3f s)\n", ok ? "PASS" : "FAIL", cr.id, cr.name, secs);
    for (const auto& f : check.failures) std::printf("    %s\n", f.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
