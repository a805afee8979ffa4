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

// Benchmark tasks, schema catalogs and the initial agent prompt.

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sqlharness/error.hpp"
#include "sqlharness/message.hpp"
#include "sqlharness/sqlenv.hpp"

namespace sqlharness {

using json = nlohmann::ordered_json;

enum class Difficulty { kSimple, kMedium, kHard, kExtra };

inline std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kSimple: return "simple";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
    case Difficulty::kExtra: return "extra";
  }
  return "medium";
}

// Maps Spider ({easy, medium, hard, extra}) and BIRD ({simple, moderate,
// challenging}) labels onto the four-level scale. Empty means unlabelled.
inline Difficulty parse_difficulty(std::string_view label) {
  std::string l;
  for (char c : label) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l.empty() || l == "medium" || l == "moderate") return Difficulty::kMedium;
  if (l == "simple" || l == "easy") return Difficulty::kSimple;
  if (l == "hard" || l == "challenging") return Difficulty::kHard;
  if (l == "extra" || l == "extra hard" || l == "extra_hard" || l == "extra-hard") return Difficulty::kExtra;
  throw DatasetError("unknown difficulty label '" + std::string(label) + "'");
}

struct Column {
  std::string name;
  std::string type;  // declared type, upper case; may be empty
  bool primary_key = false;
  bool operator==(const Column&) const = default;
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  bool operator==(const Table&) const = default;
};

struct ForeignKey {
  std::string from_table, from_column, to_table, to_column;
  bool operator==(const ForeignKey&) const = default;
};

struct SchemaCatalog {
  std::vector<Table> tables;
  std::vector<ForeignKey> foreign_keys;

  bool empty() const { return tables.empty(); }
  bool operator==(const SchemaCatalog&) const = default;

  const Table* find_table(std::string_view name) const {
    for (const auto& t : tables) {
      if (sql::iequals(t.name, name)) return &t;
    }
    return nullptr;
  }

  // Throws DatasetError on duplicate names or dangling foreign keys.
  void validate() const {
    std::set<std::string> table_names;
    for (const auto& t : tables) {
      if (!table_names.insert(sql::to_lower(t.name)).second) {
        throw DatasetError("schema: duplicate table '" + t.name + "'");
      }
      std::set<std::string> cols;
      for (const auto& c : t.columns) {
        if (!cols.insert(sql::to_lower(c.name)).second) {
          throw DatasetError("schema: duplicate column '" + t.name + "." + c.name + "'");
        }
      }
    }
    auto has = [&](const std::string& table, const std::string& column) {
      const auto* t = find_table(table);
      if (!t) return false;
      for (const auto& c : t->columns) {
        if (sql::iequals(c.name, column)) return true;
      }
      return false;
    };
    for (const auto& fk : foreign_keys) {
      if (!has(fk.from_table, fk.from_column) || !has(fk.to_table, fk.to_column)) {
        throw DatasetError("schema: foreign key " + fk.from_table + "." + fk.from_column + " -> " +
                           fk.to_table + "." + fk.to_column + " references an unknown column");
      }
    }
  }
};

struct TaskInstance {
  std::string id;
  std::string question;
  std::string database_id;
  std::filesystem::path db_path;
  SchemaCatalog schema;
  std::string gold_sql;
  Difficulty difficulty = Difficulty::kMedium;
  std::optional<std::string> external_knowledge;
  std::string engine_tag = "SQLite";

  bool operator==(const TaskInstance&) const = default;
};

// ---------------------------------------------------------------------------
// Schema text

inline std::string render_schema(const SchemaCatalog& catalog) {
  if (catalog.empty()) throw ContractError("render_schema: empty catalog");
  std::string out;
  for (std::size_t i = 0; i < catalog.tables.size(); ++i) {
    const auto& t = catalog.tables[i];
    if (i > 0) out += "\n";
    out += "Table: " + t.name + "\n";
    for (const auto& c : t.columns) {
      std::string attrs = c.type;
      if (c.primary_key) attrs += attrs.empty() ? "PRIMARY KEY" : ", PRIMARY KEY";
      out += "- " + c.name + (attrs.empty() ? "" : " (" + attrs + ")") + "\n";
    }
  }
  for (const auto& fk : catalog.foreign_keys) {
    out += "Foreign keys: " + fk.from_table + "." + fk.from_column + " = " + fk.to_table + "." +
           fk.to_column + "\n";
  }
  return out;
}

// Reads the catalog of a SQLite database: user tables in creation order,
// PRAGMA table_info columns and PRAGMA foreign_key_list edges.
inline SchemaCatalog introspect_schema(const Database& db) {
  SchemaCatalog catalog;
  ExecLimits limits;
  limits.allow_writes = true;  // PRAGMA statements are not SELECTs
  const auto tables = execute_sql(
      db, "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
      limits);
  if (!tables.ok()) throw DatasetError("schema introspection failed: " + tables.error_message.value_or(""));
  auto quote = [](const std::string& name) {
    std::string q = "\"";
    for (char c : name) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  auto text = [](const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    return std::string();
  };
  for (const auto& row : tables.rows) {
    Table t;
    t.name = text(row[0]);
    const auto info = execute_sql(db, "PRAGMA table_info(" + quote(t.name) + ")", limits);
    for (const auto& c : info.rows) {
      Column col;
      col.name = text(c[1]);
      col.type = sql::to_lower(text(c[2]));
      for (auto& ch : col.type) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      col.primary_key = std::holds_alternative<std::int64_t>(c[5]) && std::get<std::int64_t>(c[5]) > 0;
      t.columns.push_back(std::move(col));
    }
    catalog.tables.push_back(std::move(t));
  }
  for (const auto& t : catalog.tables) {
    const auto fks = execute_sql(db, "PRAGMA foreign_key_list(" + quote(t.name) + ")", limits);
    for (const auto& r : fks.rows) {
      ForeignKey fk{t.name, text(r[3]), text(r[2]), text(r[4])};
      if (fk.to_column.empty()) {
        // Implicit reference to the target's primary key.
        if (const auto* target = catalog.find_table(fk.to_table)) {
          for (const auto& c : target->columns) {
            if (c.primary_key) {
              fk.to_column = c.name;
              break;
            }
          }
        }
      }
      if (const auto* target = catalog.find_table(fk.to_table)) fk.to_table = target->name;
      catalog.foreign_keys.push_back(std::move(fk));
    }
  }
  return catalog;
}

// ---------------------------------------------------------------------------
// Prompt

inline constexpr std::string_view kDefaultPromptTemplate = R"(You are a text-to-SQL assistant. You are given a database schema and a question in natural language. Write a SQL query that answers the question. You may explore the database over several turns before answering.

Database Engine: {engine}

Database Schema:
{schema}
External Knowledge: {external_knowledge}

Question: {question}

Instructions:
1. Return exactly the information the question asks for. If a specific column is requested, select only that column.
2. The query must return everything the question asks for, with nothing missing and nothing extra.
3. In your first response, list every table and column from the schema that is relevant to the question.
4. Before giving the final query, review the previous steps and fix any mistakes.

Format:
1. Put your thinking inside <reasoning>...</reasoning> every time you receive new information.
2. To explore or verify, put one SQL query inside <sql>...</sql>. Its result is returned as a table inside <observation>...</observation>.
3. Results longer than 50 rows are truncated to the first 50 rows.
4. When no further exploration is needed, or you are out of turns, give the final query inside <solution>...</solution>.

Example:
Question: what is the average price of all products?
Database Schema:
Table: products
- id (INTEGER, PRIMARY KEY)
- name (TEXT)
- price (REAL)

<reasoning>Relevant table and column: products.price. An AVG aggregate answers this.</reasoning>
<sql>SELECT AVG(price) FROM products;</sql>
<observation>
   AVG(price)
0       24.75
You have 9 turns left to complete the task.
</observation>
<reasoning>The average price is 24.75, so this query is the answer.</reasoning>
<solution>SELECT AVG(price) FROM products;</solution>
)";

inline constexpr std::array<std::string_view, 4> kPromptPlaceholders = {"engine", "schema", "external_knowledge",
                                                                        "question"};

// System message is the filled template; the first user message carries the
// question on its own.
inline Dialogue build_prompt(const TaskInstance& task, std::string_view tmpl = kDefaultPromptTemplate) {
  std::vector<std::string> missing;
  for (auto name : kPromptPlaceholders) {
    if (tmpl.find("{" + std::string(name) + "}") == std::string_view::npos) missing.emplace_back(name);
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw ConfigError("prompt template is missing placeholders: " + names);
  }
  const std::string schema_text = task.schema.empty() ? std::string("(schema unavailable)\n")
                                                      : render_schema(task.schema);
  auto value_for = [&](std::string_view name) -> std::string {
    if (name == "engine") return task.engine_tag;
    if (name == "schema") return schema_text;
    if (name == "external_knowledge") return task.external_knowledge.value_or("None");
    return task.question;
  };
  // Single pass so substituted values are never re-scanned.
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (auto name : kPromptPlaceholders) {
        const auto marker = "{" + std::string(name) + "}";
        if (tmpl.compare(i, marker.size(), marker) == 0) {
          out += value_for(name);
          i += marker.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return {{Role::kSystem, std::move(out)}, {Role::kUser, task.question}};
}

// ---------------------------------------------------------------------------
// Loading and saving

enum class TaskFormat { kSpiderJson, kBirdJson, kJsonl };

inline TaskFormat parse_task_format(std::string_view tag) {
  if (tag == "spider-json") return TaskFormat::kSpiderJson;
  if (tag == "bird-json") return TaskFormat::kBirdJson;
  if (tag == "jsonl") return TaskFormat::kJsonl;
  throw ConfigError("unknown task format '" + std::string(tag) + "' (expected spider-json, bird-json or jsonl)");
}

inline json schema_to_json(const SchemaCatalog& c) {
  json tables = json::array();
  for (const auto& t : c.tables) {
    json cols = json::array();
    for (const auto& col : t.columns) {
      cols.push_back({{"name", col.name}, {"type", col.type}, {"primary_key", col.primary_key}});
    }
    tables.push_back({{"name", t.name}, {"columns", std::move(cols)}});
  }
  json fks = json::array();
  for (const auto& fk : c.foreign_keys) {
    fks.push_back({{"from_table", fk.from_table},
                   {"from_column", fk.from_column},
                   {"to_table", fk.to_table},
                   {"to_column", fk.to_column}});
  }
  return {{"tables", std::move(tables)}, {"foreign_keys", std::move(fks)}};
}

inline SchemaCatalog schema_from_json(const json& j) {
  SchemaCatalog c;
  for (const auto& t : j.at("tables")) {
    Table table{t.at("name").get<std::string>(), {}};
    for (const auto& col : t.at("columns")) {
      table.columns.push_back({col.at("name").get<std::string>(), col.value("type", std::string()),
                               col.value("primary_key", false)});
    }
    c.tables.push_back(std::move(table));
  }
  if (j.contains("foreign_keys")) {
    for (const auto& fk : j.at("foreign_keys")) {
      c.foreign_keys.push_back({fk.at("from_table").get<std::string>(), fk.at("from_column").get<std::string>(),
                                fk.at("to_table").get<std::string>(), fk.at("to_column").get<std::string>()});
    }
  }
  return c;
}

inline json task_to_json(const TaskInstance& t) {
  json j;
  j["id"] = t.id;
  j["question"] = t.question;
  j["database_id"] = t.database_id;
  j["db_path"] = t.db_path.string();
  j["schema"] = schema_to_json(t.schema);
  j["gold_sql"] = t.gold_sql;
  j["difficulty"] = to_string(t.difficulty);
  j["external_knowledge"] = t.external_knowledge ? json(*t.external_knowledge) : json(nullptr);
  j["engine_tag"] = t.engine_tag;
  return j;
}

namespace detail {

inline const json& require(const json& record, std::size_t index, const char* field) {
  if (!record.is_object() || !record.contains(field) || record.at(field).is_null()) {
    throw DatasetError("record " + std::to_string(index) + ": missing field '" + field + "'");
  }
  return record.at(field);
}

inline std::string require_string(const json& record, std::size_t index, const char* field) {
  const auto& v = require(record, index, field);
  if (!v.is_string()) {
    throw DatasetError("record " + std::to_string(index) + ": field '" + field + "' must be a string");
  }
  return v.get<std::string>();
}

inline std::optional<std::string> optional_text(const json& record, const char* field) {
  if (!record.contains(field) || record.at(field).is_null()) return std::nullopt;
  auto s = record.at(field).get<std::string>();
  if (s.empty()) return std::nullopt;
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path benchmark_db_path(const std::filesystem::path& root, const std::string& db_id) {
  return root / db_id / (db_id + ".sqlite");
}

}  // namespace detail

inline TaskInstance task_from_json(const json& j, std::size_t index) {
  TaskInstance t;
  t.id = detail::require_string(j, index, "id");
  t.question = detail::require_string(j, index, "question");
  t.database_id = detail::require_string(j, index, "database_id");
  t.db_path = detail::require_string(j, index, "db_path");
  try {
    t.schema = schema_from_json(detail::require(j, index, "schema"));
  } catch (const json::exception& e) {
    throw DatasetError("record " + std::to_string(index) + ": bad schema: " + e.what());
  }
  t.gold_sql = detail::require_string(j, index, "gold_sql");
  if (t.gold_sql.empty()) throw DatasetError("record " + std::to_string(index) + ": empty gold_sql");
  t.difficulty = parse_difficulty(j.value("difficulty", std::string()));
  t.external_knowledge = detail::optional_text(j, "external_knowledge");
  t.engine_tag = j.value("engine_tag", std::string("SQLite"));
  return t;
}

// db_root is where Spider/BIRD databases live (<root>/<db_id>/<db_id>.sqlite).
// Schemas for those formats are left empty; see attach_schemas.
inline std::vector<TaskInstance> load_tasks(const std::filesystem::path& path, TaskFormat format,
                                            const std::filesystem::path& db_root = {}) {
  const std::string content = detail::read_file(path);
  std::vector<TaskInstance> tasks;

  if (format == TaskFormat::kJsonl) {
    std::istringstream in(content);
    std::string line;
    std::size_t index = 0;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw DatasetError("record " + std::to_string(index) + ": invalid JSON: " + e.what());
      }
      tasks.push_back(task_from_json(j, index));
      ++index;
    }
    return tasks;
  }

  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw DatasetError("'" + path.string() + "': invalid JSON: " + e.what());
  }
  if (!doc.is_array()) throw DatasetError("'" + path.string() + "': expected a JSON array of records");
  const auto root = db_root.empty() ? path.parent_path() : db_root;

  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& r = doc[i];
    TaskInstance t;
    t.database_id = detail::require_string(r, i, "db_id");
    t.question = detail::require_string(r, i, "question");
    t.db_path = detail::benchmark_db_path(root, t.database_id);
    if (format == TaskFormat::kSpiderJson) {
      t.id = "spider-" + std::to_string(i);
      t.gold_sql = detail::require_string(r, i, "query");
      std::string label = r.value("hardness", std::string());
      if (label.empty()) label = r.value("difficulty", std::string());
      t.difficulty = parse_difficulty(label);
    } else {
      t.id = "bird-" + (r.contains("question_id") ? r.at("question_id").dump() : std::to_string(i));
      t.gold_sql = detail::require_string(r, i, "SQL");
      t.difficulty = parse_difficulty(r.value("difficulty", std::string()));
      t.external_knowledge = detail::optional_text(r, "evidence");
    }
    if (t.gold_sql.empty()) throw DatasetError("record " + std::to_string(i) + ": empty gold SQL");
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline std::vector<TaskInstance> load_tasks(const std::filesystem::path& path, std::string_view format_tag,
                                            const std::filesystem::path& db_root = {}) {
  return load_tasks(path, parse_task_format(format_tag), db_root);
}

// Fills empty schemas by introspecting each task's database (once per file).
inline void attach_schemas(std::vector<TaskInstance>& tasks) {
  std::map<std::filesystem::path, SchemaCatalog> cache;
  for (auto& t : tasks) {
    if (!t.schema.empty()) continue;
    auto it = cache.find(t.db_path);
    if (it == cache.end()) {
      const auto db = open_database(t.db_path, true);
      it = cache.emplace(t.db_path, introspect_schema(db)).first;
    }
    t.schema = it->second;
  }
}

inline void save_tasks(const std::vector<TaskInstance>& tasks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& t : tasks) out << task_to_json(t).dump() << "\n";
}

}  // namespace sqlharness
