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

// The six-term reward panel:
//
//   R = 5 r_exec + 2 r_turns + r_schema + r_bigram + r_syntax + r_format
//
// r_exec    execution result of the final SQL matches the gold result
// r_turns   finished within the difficulty-dependent turn allowance
// r_schema  Jaccard over referenced tables/columns (hallucinations included)
// r_bigram  Jaccard over token bigram sets
// r_syntax  final SQL executes without an engine error
// r_format  every turn respects the tag protocol and the last one answers

#pragma once

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqlharness/reward_types.hpp"
#include "sqlharness/sql_lexer.hpp"
#include "sqlharness/sqlenv.hpp"
#include "sqlharness/taskdata.hpp"
#include "sqlharness/trajectory.hpp"

namespace sqlharness {

// ---------------------------------------------------------------------------
// Execution

// Runs a query and, if the fetch limit truncated it, runs it again in full so
// that comparisons see every row.
inline ExecOutcome execute_full(const Database& db, std::string_view sql_text, ExecLimits limits) {
  auto out = execute_sql(db, sql_text, limits);
  if (out.ok() && out.truncated()) {
    limits.max_rows_fetched = out.row_count_total;
    out = execute_sql(db, sql_text, limits);
  }
  return out;
}

inline int exec_reward(std::string_view pred_sql, std::string_view gold_sql, const Database& db,
                       const ExecLimits& limits = {}) {
  const auto gold = execute_full(db, gold_sql, limits);
  if (!gold.ok()) {
    throw DatasetError("gold SQL failed to execute: " + gold.error_message.value_or("unknown error"));
  }
  const auto pred = execute_full(db, pred_sql, limits);
  return results_equal(pred, gold) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Turns

inline int turn_reward(Difficulty difficulty, int t, int budget, int exec) {
  if (t < 1 || t > budget) throw ContractError("turn_reward: need 1 <= t <= T");
  switch (difficulty) {
    case Difficulty::kSimple: return t <= 2 ? 1 : 0;
    case Difficulty::kMedium: return t <= 3 ? 1 : 0;
    case Difficulty::kHard:
    case Difficulty::kExtra: return exec == 1 && t < budget ? 1 : 0;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Bigrams

// Lower-cased tokens split on whitespace and punctuation. String literals stay
// whole (and keep their case); statement semicolons are dropped.
inline std::vector<std::string> tokenize_sql(std::string_view sql_text) {
  std::vector<std::string> out;
  for (auto& tok : sql::lex(sql_text).tokens) {
    if (tok.is_punct(";")) continue;
    if (tok.kind == sql::TokenKind::kString) {
      out.push_back(std::move(tok.text));
    } else {
      out.push_back(sql::to_lower(tok.text));
    }
  }
  return out;
}

inline std::set<std::pair<std::string, std::string>> bigram_set(const std::vector<std::string>& tokens) {
  std::set<std::pair<std::string, std::string>> out;
  for (std::size_t i = 1; i < tokens.size(); ++i) out.emplace(tokens[i - 1], tokens[i]);
  return out;
}

template <typename Set>
Fraction jaccard(const Set& a, const Set& b, bool empty_union_is_match) {
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return empty_union_is_match ? Fraction{1, 1} : Fraction{0, 1};
  return {inter, uni};
}

inline Fraction bigram_reward(std::string_view pred_sql, std::string_view gold_sql) {
  const auto p = tokenize_sql(pred_sql);
  const auto g = tokenize_sql(gold_sql);
  // Queries shorter than two tokens have no bigrams; they score 1 only when
  // the token streams are identical.
  return jaccard(bigram_set(p), bigram_set(g), p == g);
}

// ---------------------------------------------------------------------------
// Schema items

enum class ItemKind { kTable, kColumn, kUnknown };

struct SchemaItem {
  ItemKind kind;
  std::string name;  // catalog spelling for known items, as written otherwise

  std::string key() const { return sql::to_lower(name); }
  bool operator<(const SchemaItem& o) const {
    if (kind != o.kind) return kind < o.kind;
    return key() < o.key();
  }
  bool operator==(const SchemaItem& o) const { return kind == o.kind && key() == o.key(); }
};

using SchemaItems = std::set<SchemaItem>;

namespace detail {

inline const Table* catalog_table(const SchemaCatalog& c, std::string_view name) { return c.find_table(name); }

inline const Column* catalog_column(const SchemaCatalog& c, std::string_view name) {
  for (const auto& t : c.tables) {
    for (const auto& col : t.columns) {
      if (sql::iequals(col.name, name)) return &col;
    }
  }
  return nullptr;
}

inline bool extra_non_identifier(std::string_view word) {
  static const std::set<std::string, std::less<>> kExtra = {"nocase", "binary", "rtrim"};
  return kExtra.count(sql::to_lower(word)) > 0;
}

inline bool balanced(const std::vector<sql::Token>& toks) {
  int depth = 0;
  for (const auto& t : toks) {
    if (t.is_punct("(")) ++depth;
    if (t.is_punct(")") && --depth < 0) return false;
  }
  return depth == 0;
}

// Names introduced by the query itself: table aliases, derived-table aliases,
// column aliases and CTE names.
inline std::set<std::string> local_names(const std::vector<sql::Token>& toks, const SchemaCatalog& catalog) {
  std::set<std::string> names;
  auto plain_ident = [&](std::size_t i) {
    return i < toks.size() && toks[i].is_ident_like() && !(toks[i].is_word() && sql::is_keyword(toks[i].text));
  };
  auto is_word = [&](std::size_t i, std::string_view w) {
    return i < toks.size() && toks[i].is_word() && sql::iequals(toks[i].text, w);
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (is_word(i, "as")) {
      if (plain_ident(i + 1)) {
        names.insert(sql::to_lower(toks[i + 1].text));  // expr AS alias
      } else if (i + 1 < toks.size() && toks[i + 1].is_punct("(") && i > 0 && toks[i - 1].is_ident_like()) {
        names.insert(sql::to_lower(toks[i - 1].text));  // WITH cte AS (...)
      }
      continue;
    }
    if (!plain_ident(i) || i == 0) continue;
    if (catalog_table(catalog, toks[i].text) || catalog_column(catalog, toks[i].text)) continue;
    // FROM t alias | JOIN t alias | , t alias | (subquery) alias
    const bool after_table = i >= 2 && toks[i - 1].is_ident_like() && catalog_table(catalog, toks[i - 1].text) &&
                             (is_word(i - 2, "from") || is_word(i - 2, "join") || toks[i - 2].is_punct(","));
    if (after_table || toks[i - 1].is_punct(")")) names.insert(sql::to_lower(toks[i].text));
  }
  return names;
}

}  // namespace detail

// All identifiers a query references, resolved against the catalog. Unknown
// bare identifiers (hallucinated tables or columns) are returned with
// ItemKind::kUnknown; double-quoted unknowns are treated as string literals.
inline SchemaItems extract_schema_references(std::string_view sql_text, const SchemaCatalog& catalog) {
  const auto lexed = sql::lex(sql_text);
  const auto& toks = lexed.tokens;
  SchemaItems items;
  auto add_known = [&](const sql::Token& t) {
    if (const auto* table = detail::catalog_table(catalog, t.text)) {
      items.insert({ItemKind::kTable, table->name});
      return true;
    }
    if (const auto* col = detail::catalog_column(catalog, t.text)) {
      items.insert({ItemKind::kColumn, col->name});
      return true;
    }
    return false;
  };

  if (!lexed.complete || !detail::balanced(toks)) {
    // Unparseable: intersect the raw identifier vocabulary with the catalog,
    // plus unknown names in qualified-column position.
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (!toks[i].is_ident_like()) continue;
      if (add_known(toks[i])) continue;
      if (toks[i].is_word() && i > 0 && toks[i - 1].is_punct(".") && !sql::is_keyword(toks[i].text)) {
        items.insert({ItemKind::kUnknown, toks[i].text});
      }
    }
    return items;
  }

  const auto locals = detail::local_names(toks, catalog);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (!t.is_ident_like()) continue;
    const bool is_call = i + 1 < toks.size() && toks[i + 1].is_punct("(");
    const bool is_qualifier = i + 1 < toks.size() && toks[i + 1].is_punct(".");
    const bool is_qualified = i > 0 && toks[i - 1].is_punct(".");
    if (is_call && !is_qualified) continue;

    if (is_qualified) {
      // alias.column or table.column: resolve the column part only.
      if (const auto* col = detail::catalog_column(catalog, t.text)) {
        items.insert({ItemKind::kColumn, col->name});
      } else if (t.is_word() || t.kind == sql::TokenKind::kQuotedIdent) {
        if (t.text != "*") items.insert({ItemKind::kUnknown, t.text});
      }
      continue;
    }
    if (is_qualifier) {
      if (const auto* table = detail::catalog_table(catalog, t.text)) {
        items.insert({ItemKind::kTable, table->name});
      } else if (!locals.count(sql::to_lower(t.text)) && t.is_word()) {
        items.insert({ItemKind::kUnknown, t.text});
      }
      continue;
    }
    if (add_known(t)) continue;
    if (t.kind == sql::TokenKind::kQuotedIdent) continue;
    if (sql::is_keyword(t.text) || detail::extra_non_identifier(t.text)) continue;
    if (locals.count(sql::to_lower(t.text))) continue;
    items.insert({ItemKind::kUnknown, t.text});
  }
  return items;
}

// Catalog tables and columns referenced by the query.
inline SchemaItems extract_schema_items(std::string_view sql_text, const SchemaCatalog& catalog) {
  SchemaItems out;
  for (const auto& item : extract_schema_references(sql_text, catalog)) {
    if (item.kind != ItemKind::kUnknown) out.insert(item);
  }
  return out;
}

// Unknown references land in the union, so hallucinated names cost reward.
inline Fraction schema_reward(std::string_view pred_sql, std::string_view gold_sql, const SchemaCatalog& catalog) {
  return jaccard(extract_schema_references(pred_sql, catalog), extract_schema_references(gold_sql, catalog), true);
}

// ---------------------------------------------------------------------------
// Whole trajectory

inline RewardBreakdown score_trajectory(const Trajectory& traj, const TaskInstance& task, const Database& db,
                                        const ExecLimits& limits = {}, const RewardWeights& weights = {}) {
  RewardBreakdown c;
  const std::string pred = traj.final_sql.value_or("");
  if (!pred.empty()) {
    c.r_exec = exec_reward(pred, task.gold_sql, db, limits);
    c.r_syntax = is_executable(db, pred, std::min(limits.timeout, kExecutableProbeTimeout));
  } else {
    // Still validates the gold query.
    exec_reward("SELECT 1 WHERE 0", task.gold_sql, db, limits);
  }
  c.r_turns = turn_reward(task.difficulty, traj.finishing_turn(), traj.budget, c.r_exec);
  c.r_bigram = bigram_reward(pred, task.gold_sql).value();
  c.r_schema = schema_reward(pred, task.gold_sql, task.schema).value();
  c.r_format = check_format(traj);
  return total_reward(c, weights);
}

}  // namespace sqlharness
