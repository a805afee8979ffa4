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

// A small SQLite-flavoured lexer shared by the statement guard, the bigram
// tokenizer and schema-item extraction. It never fails: problems such as an
// unterminated literal are reported through LexResult::complete.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sqlharness::sql {

enum class TokenKind {
  kWord,         // bare identifier or keyword
  kQuotedIdent,  // "x", `x` or [x]; text holds the unquoted name
  kString,       // 'x'; text holds the literal including quotes
  kNumber,
  kPunct,
};

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t offset = 0;  // byte offset in the source

  bool is_word() const { return kind == TokenKind::kWord; }
  bool is_ident_like() const {
    return kind == TokenKind::kWord || kind == TokenKind::kQuotedIdent;
  }
  bool is_punct(std::string_view p) const {
    return kind == TokenKind::kPunct && text == p;
  }
};

struct LexResult {
  std::vector<Token> tokens;
  bool complete = true;  // false on unterminated literal/identifier/comment
};

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

namespace detail {

inline bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
}

}  // namespace detail

inline LexResult lex(std::string_view src) {
  LexResult out;
  std::size_t i = 0;
  const std::size_t n = src.size();
  auto peek = [&](std::size_t k) -> char { return i + k < n ? src[i + k] : '\0'; };

  while (i < n) {
    const auto c = static_cast<unsigned char>(src[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '-' && peek(1) == '-') {
      while (i < n && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && peek(1) == '*') {
      const auto end = src.find("*/", i + 2);
      if (end == std::string_view::npos) {
        out.complete = false;
        break;
      }
      i = end + 2;
      continue;
    }
    const std::size_t start = i;
    if (c == '\'') {
      // '' is an escaped quote inside a literal.
      ++i;
      bool closed = false;
      while (i < n) {
        if (src[i] == '\'') {
          if (peek(1) == '\'') {
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) out.complete = false;
      out.tokens.push_back({TokenKind::kString, std::string(src.substr(start, i - start)), start});
      continue;
    }
    if (c == '"' || c == '`' || c == '[') {
      const char close = c == '[' ? ']' : static_cast<char>(c);
      ++i;
      std::string name;
      bool closed = false;
      while (i < n) {
        if (src[i] == close) {
          if (close != ']' && peek(1) == close) {
            name.push_back(close);
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        name.push_back(src[i++]);
      }
      if (!closed) out.complete = false;
      out.tokens.push_back({TokenKind::kQuotedIdent, std::move(name), start});
      continue;
    }
    if (std::isdigit(c) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      ++i;
      while (i < n) {
        const auto d = static_cast<unsigned char>(src[i]);
        if (detail::is_word_char(d) || d == '.') {
          ++i;
        } else if ((d == '+' || d == '-') && (src[i - 1] == 'e' || src[i - 1] == 'E')) {
          ++i;
        } else {
          break;
        }
      }
      out.tokens.push_back({TokenKind::kNumber, std::string(src.substr(start, i - start)), start});
      continue;
    }
    if (detail::is_word_char(c)) {
      while (i < n && detail::is_word_char(static_cast<unsigned char>(src[i]))) ++i;
      out.tokens.push_back({TokenKind::kWord, std::string(src.substr(start, i - start)), start});
      continue;
    }
    static constexpr std::array<std::string_view, 6> kTwoChar = {"<=", ">=", "<>", "!=", "==", "||"};
    const auto two = src.substr(i, 2);
    if (std::find(kTwoChar.begin(), kTwoChar.end(), two) != kTwoChar.end()) {
      out.tokens.push_back({TokenKind::kPunct, std::string(two), start});
      i += 2;
      continue;
    }
    out.tokens.push_back({TokenKind::kPunct, std::string(1, static_cast<char>(c)), start});
    ++i;
  }
  return out;
}

// Splits the token stream on top-level semicolons, dropping empty statements.
inline std::vector<std::vector<Token>> split_statements(const std::vector<Token>& tokens) {
  std::vector<std::vector<Token>> stmts;
  std::vector<Token> cur;
  for (const auto& t : tokens) {
    if (t.is_punct(";")) {
      if (!cur.empty()) stmts.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(t);
  }
  if (!cur.empty()) stmts.push_back(std::move(cur));
  return stmts;
}

inline bool is_keyword(std::string_view word) {
  // SQLite keywords plus the common function names that appear in benchmark
  // queries. Anything listed here is never treated as a schema identifier.
  static const std::vector<std::string_view> kWords = [] {
    std::vector<std::string_view> w = {
        "abort", "action", "add", "after", "all", "alter", "always", "analyze", "and", "as",
        "asc", "attach", "autoincrement", "before", "begin", "between", "by", "cascade",
        "case", "cast", "check", "collate", "column", "commit", "conflict", "constraint",
        "create", "cross", "current", "current_date", "current_time", "current_timestamp",
        "database", "default", "deferrable", "deferred", "delete", "desc", "detach",
        "distinct", "do", "drop", "each", "else", "end", "escape", "except", "exclude",
        "exclusive", "exists", "explain", "fail", "filter", "first", "following", "for",
        "foreign", "from", "full", "generated", "glob", "group", "groups", "having", "if",
        "ignore", "immediate", "in", "index", "indexed", "initially", "inner", "insert",
        "instead", "intersect", "into", "is", "isnull", "join", "key", "last", "left",
        "like", "limit", "match", "materialized", "natural", "no", "not", "nothing",
        "notnull", "null", "nulls", "of", "offset", "on", "or", "order", "others", "outer",
        "over", "partition", "plan", "pragma", "preceding", "primary", "query", "raise",
        "range", "recursive", "references", "regexp", "reindex", "release", "rename",
        "replace", "restrict", "returning", "right", "rollback", "row", "rows", "savepoint",
        "select", "set", "table", "temp", "temporary", "then", "ties", "to", "transaction",
        "trigger", "true", "false", "unbounded", "union", "unique", "update", "using",
        "vacuum", "values", "view", "virtual", "when", "where", "window", "with", "without",
        // types used in CAST
        "integer", "int", "real", "text", "blob", "numeric", "float", "double", "varchar",
        // functions
        "abs", "avg", "count", "max", "min", "sum", "total", "group_concat", "length",
        "lower", "upper", "substr", "substring", "instr", "replace", "round", "coalesce",
        "ifnull", "iif", "nullif", "strftime", "date", "time", "datetime", "julianday",
        "trim", "ltrim", "rtrim", "typeof", "random", "printf", "format", "unicode",
        "char", "hex", "quote", "sign", "julianday", "row_number", "rank", "dense_rank",
        "lag", "lead", "ntile", "first_value", "last_value",
    };
    std::sort(w.begin(), w.end());
    return w;
  }();
  const auto lower = to_lower(word);
  return std::binary_search(kWords.begin(), kWords.end(), std::string_view(lower));
}

}  // namespace sqlharness::sql
