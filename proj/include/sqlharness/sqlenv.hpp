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

// SQLite execution environment: read-only handles, a SELECT-only statement
// guard, bounded execution and result-set equivalence.

#pragma once

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "sqlharness/error.hpp"
#include "sqlharness/sql_lexer.hpp"

namespace sqlharness {

struct Blob {
  std::vector<std::uint8_t> bytes;
  bool operator==(const Blob&) const = default;
};

// One cell of a result set. monostate is SQL NULL.
using Value = std::variant<std::monostate, std::int64_t, double, std::string, Blob>;
using Row = std::vector<Value>;

enum class ExecStatus { kOk, kError };

struct ExecOutcome {
  ExecStatus status = ExecStatus::kOk;
  std::vector<std::string> columns;
  std::vector<Row> rows;
  std::optional<std::string> error_message;
  std::chrono::nanoseconds elapsed{0};
  std::int64_t row_count_total = 0;  // before max_rows_fetched truncation

  bool ok() const { return status == ExecStatus::kOk; }
  bool truncated() const { return static_cast<std::int64_t>(rows.size()) < row_count_total; }

  static ExecOutcome error(std::string message) {
    ExecOutcome out;
    out.status = ExecStatus::kError;
    out.error_message = std::move(message);
    return out;
  }
};

struct ExecLimits {
  std::chrono::milliseconds timeout{30'000};
  std::int64_t max_rows_fetched = 10'000;
  bool allow_writes = false;

  void validate() const {
    if (timeout.count() <= 0) throw ConfigError("ExecLimits: timeout must be positive");
    if (max_rows_fetched < 1) throw ConfigError("ExecLimits: max_rows_fetched must be >= 1");
  }
};

// Short timeout used for the syntax/executability probe.
inline constexpr std::chrono::milliseconds kExecutableProbeTimeout{5'000};

// ---------------------------------------------------------------------------
// Handle

class Database {
 public:
  Database() = default;

  static Database open(const std::filesystem::path& path, bool read_only) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
      throw OpenError("cannot open database '" + path.string() + "': no such file");
    }
    sqlite3* raw = nullptr;
    const int flags = read_only ? SQLITE_OPEN_READONLY : SQLITE_OPEN_READWRITE;
    const int rc = sqlite3_open_v2(path.string().c_str(), &raw, flags | SQLITE_OPEN_NOMUTEX, nullptr);
    Database db;
    db.conn_.reset(raw);
    db.read_only_ = read_only;
    db.path_ = path;
    if (rc != SQLITE_OK) {
      const std::string msg = raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc);
      throw OpenError("cannot open database '" + path.string() + "': " + msg);
    }
    // SQLite opens lazily; touch the schema so corrupt files fail here.
    char* err = nullptr;
    if (sqlite3_exec(raw, "SELECT count(*) FROM sqlite_master", nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      throw OpenError("cannot open database '" + path.string() + "': " + msg);
    }
    if (read_only) sqlite3_exec(raw, "PRAGMA query_only = 1", nullptr, nullptr, nullptr);
    return db;
  }

  // Creates (or replaces) a database file from a SQL script. Used for fixtures.
  static void create_from_script(const std::filesystem::path& path, const std::string& script) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    sqlite3* raw = nullptr;
    const int rc = sqlite3_open_v2(path.string().c_str(), &raw,
                                   SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr);
    std::unique_ptr<sqlite3, Closer> guard(raw);
    if (rc != SQLITE_OK) throw OpenError("cannot create database '" + path.string() + "'");
    char* err = nullptr;
    if (sqlite3_exec(raw, script.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      throw DatasetError("fixture script failed for '" + path.string() + "': " + msg);
    }
  }

  sqlite3* native() const { return conn_.get(); }
  bool read_only() const { return read_only_; }
  const std::filesystem::path& path() const { return path_; }
  explicit operator bool() const { return conn_ != nullptr; }

 private:
  struct Closer {
    void operator()(sqlite3* db) const { sqlite3_close_v2(db); }
  };
  std::unique_ptr<sqlite3, Closer> conn_;
  bool read_only_ = true;
  std::filesystem::path path_;
};

inline Database open_database(const std::filesystem::path& path, bool read_only = true) {
  return Database::open(path, read_only);
}

// ---------------------------------------------------------------------------
// Guard

enum class GuardPolicy { kSelectOnly, kUnrestricted };

enum class GuardReason { kNone, kEmpty, kNonSelect, kMultiStatement };

inline std::string_view to_string(GuardReason r) {
  switch (r) {
    case GuardReason::kNone: return "none";
    case GuardReason::kEmpty: return "empty";
    case GuardReason::kNonSelect: return "non_select";
    case GuardReason::kMultiStatement: return "multi_statement";
  }
  return "unknown";
}

struct GuardResult {
  GuardReason reason = GuardReason::kNone;
  bool ok() const { return reason == GuardReason::kNone; }
};

namespace detail {

// The verb of a statement after any WITH clause: the first SELECT / INSERT /
// UPDATE / DELETE / REPLACE / VALUES keyword at parenthesis depth zero.
inline std::string main_verb(const std::vector<sql::Token>& stmt) {
  if (stmt.empty() || !stmt.front().is_word()) return "";
  const auto first = sql::to_lower(stmt.front().text);
  if (first != "with") return first;
  int depth = 0;
  for (std::size_t i = 1; i < stmt.size(); ++i) {
    const auto& t = stmt[i];
    if (t.is_punct("(")) ++depth;
    else if (t.is_punct(")")) --depth;
    else if (depth == 0 && t.is_word()) {
      const auto w = sql::to_lower(t.text);
      if (w == "select" || w == "insert" || w == "update" || w == "delete" || w == "replace" ||
          w == "values") {
        return w;
      }
    }
  }
  return "with";
}

}  // namespace detail

inline GuardResult guard_sql(std::string_view sql_text, GuardPolicy policy) {
  if (policy == GuardPolicy::kUnrestricted) return {};
  const auto lexed = sql::lex(sql_text);
  const auto stmts = sql::split_statements(lexed.tokens);
  if (stmts.empty()) return {GuardReason::kEmpty};
  if (stmts.size() > 1) return {GuardReason::kMultiStatement};
  if (detail::main_verb(stmts.front()) != "select") return {GuardReason::kNonSelect};
  return {};
}

// ---------------------------------------------------------------------------
// Execution

namespace detail {

struct Deadline {
  std::chrono::steady_clock::time_point at;
  bool fired = false;
};

inline int progress_check(void* arg) {
  auto* d = static_cast<Deadline*>(arg);
  if (std::chrono::steady_clock::now() >= d->at) {
    d->fired = true;
    return 1;
  }
  return 0;
}

inline Value read_column(sqlite3_stmt* stmt, int i) {
  switch (sqlite3_column_type(stmt, i)) {
    case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt, i));
    case SQLITE_FLOAT: return sqlite3_column_double(stmt, i);
    case SQLITE_TEXT: {
      const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
      return std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt, i)));
    }
    case SQLITE_BLOB: {
      const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt, i));
      const auto n = static_cast<std::size_t>(sqlite3_column_bytes(stmt, i));
      return Blob{std::vector<std::uint8_t>(p, p + n)};
    }
    default: return std::monostate{};
  }
}

struct StmtCloser {
  void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
};

}  // namespace detail

inline ExecOutcome execute_sql(const Database& db, std::string_view sql_text, const ExecLimits& limits) {
  limits.validate();
  if (!db) throw ContractError("execute_sql on a closed database handle");
  const auto started = std::chrono::steady_clock::now();
  auto finish = [&](ExecOutcome out) {
    out.elapsed = std::chrono::steady_clock::now() - started;
    return out;
  };

  if (!limits.allow_writes) {
    const auto guard = guard_sql(sql_text, GuardPolicy::kSelectOnly);
    if (!guard.ok()) {
      return finish(ExecOutcome::error("query rejected by SELECT-only policy (" +
                                       std::string(to_string(guard.reason)) + ")"));
    }
  }

  sqlite3* conn = db.native();
  detail::Deadline deadline{started + limits.timeout};
  sqlite3_progress_handler(conn, 1000, &detail::progress_check, &deadline);
  struct ResetHandler {
    sqlite3* c;
    ~ResetHandler() { sqlite3_progress_handler(c, 0, nullptr, nullptr); }
  } reset{conn};

  auto engine_error = [&]() {
    if (deadline.fired) {
      return ExecOutcome::error("timeout after " + std::to_string(limits.timeout.count()) + " ms");
    }
    return ExecOutcome::error(sqlite3_errmsg(conn));
  };

  ExecOutcome result;
  bool have_result = false;
  const std::string owned(sql_text);
  const char* tail = owned.c_str();
  while (tail && *tail) {
    sqlite3_stmt* raw = nullptr;
    const char* next = nullptr;
    if (sqlite3_prepare_v2(conn, tail, -1, &raw, &next) != SQLITE_OK) {
      return finish(engine_error());
    }
    std::unique_ptr<sqlite3_stmt, detail::StmtCloser> stmt(raw);
    tail = next;
    if (!raw) continue;  // whitespace or comment only

    ExecOutcome cur;
    const int ncols = sqlite3_column_count(raw);
    for (int i = 0; i < ncols; ++i) cur.columns.emplace_back(sqlite3_column_name(raw, i));
    for (;;) {
      const int rc = sqlite3_step(raw);
      if (rc == SQLITE_DONE) break;
      if (rc != SQLITE_ROW) return finish(engine_error());
      if (static_cast<std::int64_t>(cur.rows.size()) < limits.max_rows_fetched) {
        Row row;
        row.reserve(static_cast<std::size_t>(ncols));
        for (int i = 0; i < ncols; ++i) row.push_back(detail::read_column(raw, i));
        cur.rows.push_back(std::move(row));
      }
      ++cur.row_count_total;
    }
    if (ncols > 0 || !have_result) {
      result = std::move(cur);
      have_result = true;
    }
  }
  if (!have_result) return finish(ExecOutcome::error("empty query"));
  return finish(std::move(result));
}

// 1 iff the query runs to completion without an engine error.
inline int is_executable(const Database& db, std::string_view sql_text,
                         std::chrono::milliseconds timeout = kExecutableProbeTimeout) {
  ExecLimits probe;
  probe.timeout = timeout;
  probe.max_rows_fetched = 1;
  return execute_sql(db, sql_text, probe).ok() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Equivalence

inline constexpr double kRelativeTolerance = 1e-6;

namespace detail {

inline std::optional<double> as_number(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

inline bool values_equal(const Value& a, const Value& b) {
  const auto na = as_number(a);
  const auto nb = as_number(b);
  if (na && nb) {
    if (std::isnan(*na) || std::isnan(*nb)) return std::isnan(*na) && std::isnan(*nb);
    if (*na == *nb) return true;
    const double scale = std::max({1.0, std::fabs(*na), std::fabs(*nb)});
    return std::fabs(*na - *nb) <= kRelativeTolerance * scale;
  }
  if (na || nb) return false;
  return a == b;
}

inline bool rows_equal(const Row& a, const Row& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!values_equal(a[i], b[i])) return false;
  }
  return true;
}

// Total order used to align rows before the tolerant pairwise comparison:
// NULL < numbers < text < blob.
inline int value_rank(const Value& v) {
  if (std::holds_alternative<std::monostate>(v)) return 0;
  if (as_number(v)) return 1;
  if (std::holds_alternative<std::string>(v)) return 2;
  return 3;
}

inline bool value_less(const Value& a, const Value& b) {
  const int ra = value_rank(a);
  const int rb = value_rank(b);
  if (ra != rb) return ra < rb;
  switch (ra) {
    case 1: return *as_number(a) < *as_number(b);
    case 2: return std::get<std::string>(a) < std::get<std::string>(b);
    case 3: return std::get<Blob>(a).bytes < std::get<Blob>(b).bytes;
    default: return false;
  }
}

inline bool row_less(const Row& a, const Row& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), value_less);
}

}  // namespace detail

// Bag equality over rows; column order matters, row order does not, numbers
// compare with a relative tolerance. Any error outcome compares unequal.
inline bool results_equal(const ExecOutcome& a, const ExecOutcome& b) {
  if (!a.ok() || !b.ok()) return false;
  if (a.columns.size() != b.columns.size()) return false;
  if (a.row_count_total != b.row_count_total || a.rows.size() != b.rows.size()) return false;

  auto lhs = a.rows;
  auto rhs = b.rows;
  std::sort(lhs.begin(), lhs.end(), detail::row_less);
  std::sort(rhs.begin(), rhs.end(), detail::row_less);
  bool aligned = true;
  for (std::size_t i = 0; i < lhs.size() && aligned; ++i) aligned = detail::rows_equal(lhs[i], rhs[i]);
  if (aligned) return true;

  // Values within tolerance can sort differently; fall back to matching.
  std::vector<bool> used(rhs.size(), false);
  for (const auto& row : lhs) {
    bool found = false;
    for (std::size_t j = 0; j < rhs.size(); ++j) {
      if (!used[j] && detail::rows_equal(row, rhs[j])) {
        used[j] = true;
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace sqlharness
