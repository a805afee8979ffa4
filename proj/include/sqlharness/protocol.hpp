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

// The tag-delimited agent interface.
//
// An assistant turn is expected to look like
//
//   <reasoning> ... </reasoning>
//   <sql> SELECT ... </sql>            (probe the database), or
//   <solution> SELECT ... </solution>  (final answer)
//
// and the environment answers with
//
//   <observation>
//   <rendered result, engine error or invalid-action sentence>
//   You have N turns left to complete the task.
//   </observation>

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "sqlharness/sqlenv.hpp"

namespace sqlharness {

// Tag names without angle brackets. The defaults are the wire contract; other
// vocabularies (e.g. "think") can be supplied for foreign fixtures.
struct TagSet {
  std::string reasoning = "reasoning";
  std::string sql = "sql";
  std::string solution = "solution";
  std::string observation = "observation";
};

inline const TagSet& default_tags() {
  static const TagSet tags;
  return tags;
}

inline std::string open_tag(std::string_view name) { return "<" + std::string(name) + ">"; }
inline std::string close_tag(std::string_view name) { return "</" + std::string(name) + ">"; }

enum class Defect {
  kMissingReasoning,
  kUnclosedTag,
  kNoAction,
  kTrailingGarbage,
  kMultipleActions,  // both <sql> and <solution> present
};

inline std::string_view to_string(Defect d) {
  switch (d) {
    case Defect::kMissingReasoning: return "missing_reasoning";
    case Defect::kUnclosedTag: return "unclosed_tag";
    case Defect::kNoAction: return "no_action";
    case Defect::kTrailingGarbage: return "trailing_garbage";
    case Defect::kMultipleActions: return "multiple_actions";
  }
  return "unknown";
}

struct ParsedAction {
  std::optional<std::string> reasoning;
  std::optional<std::string> sql;
  std::optional<std::string> solution;
  bool well_formed = false;
  std::vector<Defect> defects;

  bool is_terminal() const { return solution.has_value(); }
  bool has(Defect d) const {
    for (auto x : defects) {
      if (x == d) return true;
    }
    return false;
  }
  bool operator==(const ParsedAction&) const = default;
};

namespace detail {

struct Block {
  std::string content;
  std::size_t close_end = 0;  // offset one past the closing tag
};

struct TagScan {
  std::optional<Block> last;   // last complete block
  std::size_t complete = 0;    // number of complete blocks
  bool unbalanced = false;     // an opener without closer or a stray closer
};

inline TagScan scan_tag(std::string_view raw, std::string_view name) {
  const auto open = open_tag(name);
  const auto close = close_tag(name);
  TagScan scan;
  std::size_t pos = 0;
  for (;;) {
    const auto o = raw.find(open, pos);
    const auto c = raw.find(close, pos);
    if (o == std::string_view::npos) {
      if (c != std::string_view::npos) scan.unbalanced = true;
      break;
    }
    if (c != std::string_view::npos && c < o) {
      scan.unbalanced = true;  // closer with no opener
      pos = c + close.size();
      continue;
    }
    const auto body = o + open.size();
    const auto end = raw.find(close, body);
    const auto next_open = raw.find(open, body);
    if (end == std::string_view::npos) {
      scan.unbalanced = true;
      break;
    }
    if (next_open != std::string_view::npos && next_open < end) {
      scan.unbalanced = true;  // reopened before closing
      pos = next_open;
      continue;
    }
    scan.last = Block{std::string(raw.substr(body, end - body)), end + close.size()};
    ++scan.complete;
    pos = end + close.size();
  }
  return scan;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

inline ParsedAction parse_action(std::string_view raw, const TagSet& tags = default_tags()) {
  ParsedAction out;
  const auto reasoning = detail::scan_tag(raw, tags.reasoning);
  const auto sql = detail::scan_tag(raw, tags.sql);
  const auto solution = detail::scan_tag(raw, tags.solution);

  if (reasoning.last) out.reasoning = reasoning.last->content;
  if (sql.last) out.sql = detail::trim(sql.last->content);
  if (solution.last) out.solution = detail::trim(solution.last->content);

  auto add = [&](Defect d) {
    if (!out.has(d)) out.defects.push_back(d);
  };
  if (!reasoning.last) add(Defect::kMissingReasoning);
  if (reasoning.unbalanced || sql.unbalanced || solution.unbalanced) add(Defect::kUnclosedTag);
  if (!sql.last && !solution.last) add(Defect::kNoAction);
  if (sql.last && solution.last) add(Defect::kMultipleActions);

  const auto* action = solution.last ? &*solution.last : (sql.last ? &*sql.last : nullptr);
  if (action && !detail::trim(raw.substr(action->close_end)).empty()) add(Defect::kTrailingGarbage);

  out.well_formed = out.defects.empty();
  return out;
}

// Every complete reasoning block in a turn, in order. Used for length analytics.
inline std::vector<std::string> reasoning_blocks(std::string_view raw, const TagSet& tags = default_tags()) {
  std::vector<std::string> blocks;
  const auto open = open_tag(tags.reasoning);
  const auto close = close_tag(tags.reasoning);
  std::size_t pos = 0;
  for (;;) {
    const auto o = raw.find(open, pos);
    if (o == std::string_view::npos) break;
    const auto body = o + open.size();
    const auto c = raw.find(close, body);
    if (c == std::string_view::npos) break;
    blocks.emplace_back(raw.substr(body, c - body));
    pos = c + close.size();
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Observations

enum class ObservationKind { kResult, kError, kInvalidAction };

inline std::string_view to_string(ObservationKind k) {
  switch (k) {
    case ObservationKind::kResult: return "result";
    case ObservationKind::kError: return "error";
    case ObservationKind::kInvalidAction: return "invalid_action";
  }
  return "unknown";
}

struct Observation {
  ObservationKind kind = ObservationKind::kResult;
  std::string text;
  int turns_left = 0;
  bool operator==(const Observation&) const = default;
};

inline constexpr std::string_view kInvalidActionSentence =
    "Your previous action is invalid. Think and try again.";
inline constexpr std::size_t kMaxObservationRows = 50;

inline std::string turns_left_sentence(int turns_left) {
  return "You have " + std::to_string(turns_left) + " turns left to complete the task.";
}

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

// Python-style shortest round-trip float text ("24.75", "3.0", "1e-05").
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific);
  std::string sci(buf, r.ptr);
  const auto epos = sci.find('e');
  const int exponent = std::stoi(sci.substr(epos + 1));
  if (exponent >= -4 && exponent < 16) {
    r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    std::string fixed(buf, r.ptr);
    if (fixed.find('.') == std::string::npos) fixed += ".0";
    return fixed;
  }
  std::string mantissa = sci.substr(0, epos);
  const int mag = std::abs(exponent);
  return mantissa + "e" + (exponent < 0 ? "-" : "+") + (mag < 10 ? "0" : "") + std::to_string(mag);
}

inline std::string format_value(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "None"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return format_real(d); }
    std::string operator()(const std::string& s) const {
      std::string out;
      for (char c : s) {
        if (c == '\n') out += "\\n";
        else if (c == '\r') out += "\\r";
        else if (c == '\t') out += "\\t";
        else out += c;
      }
      return out;
    }
    std::string operator()(const Blob& b) const {
      return "<blob " + std::to_string(b.bytes.size()) + " bytes>";
    }
  };
  return std::visit(Visitor{}, v);
}

// Dataframe-style table: a header row of column names, a 0-based row index
// column, right-aligned fixed-width columns separated by two spaces.
inline std::string render_table(const std::vector<std::string>& columns, const std::vector<Row>& rows,
                                std::size_t max_rows = kMaxObservationRows) {
  if (columns.empty()) return "(statement returned no columns)";
  const std::size_t shown = std::min(rows.size(), max_rows);
  std::vector<std::vector<std::string>> cells(shown);
  std::vector<std::size_t> widths(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) widths[c] = utf8_length(columns[c]);
  for (std::size_t r = 0; r < shown; ++r) {
    cells[r].reserve(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      cells[r].push_back(c < rows[r].size() ? format_value(rows[r][c]) : "None");
      widths[c] = std::max(widths[c], utf8_length(cells[r][c]));
    }
  }
  const std::size_t index_width = shown == 0 ? 0 : std::to_string(shown - 1).size();

  auto pad_left = [](const std::string& s, std::size_t width) {
    const auto len = utf8_length(s);
    return len >= width ? s : std::string(width - len, ' ') + s;
  };
  std::string out(index_width, ' ');
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out += (out.empty() ? "" : "  ") + pad_left(columns[c], widths[c]);
  }
  for (std::size_t r = 0; r < shown; ++r) {
    out += "\n" + pad_left(std::to_string(r), index_width);
    for (std::size_t c = 0; c < columns.size(); ++c) out += "  " + pad_left(cells[r][c], widths[c]);
  }
  return out;
}

inline std::string truncation_notice(std::size_t shown, std::int64_t total) {
  return "[output truncated: showing first " + std::to_string(shown) + " of " + std::to_string(total) +
         " rows]";
}

inline Observation render_observation(const ExecOutcome& outcome, int turns_left) {
  if (turns_left < 0) throw ContractError("render_observation: turns_left must be >= 0");
  Observation obs;
  obs.turns_left = turns_left;
  if (outcome.ok()) {
    obs.kind = ObservationKind::kResult;
    obs.text = render_table(outcome.columns, outcome.rows);
    const auto total = std::max<std::int64_t>(outcome.row_count_total,
                                               static_cast<std::int64_t>(outcome.rows.size()));
    if (total > static_cast<std::int64_t>(kMaxObservationRows)) {
      obs.text += "\n" + truncation_notice(std::min(outcome.rows.size(), kMaxObservationRows), total);
    }
  } else {
    obs.kind = ObservationKind::kError;
    obs.text = outcome.error_message.value_or("unknown error");
  }
  obs.text += "\n" + turns_left_sentence(turns_left);
  return obs;
}

inline Observation render_invalid_action(int turns_left) {
  if (turns_left < 0) throw ContractError("render_invalid_action: turns_left must be >= 0");
  return {ObservationKind::kInvalidAction,
          std::string(kInvalidActionSentence) + "\n" + turns_left_sentence(turns_left), turns_left};
}

// The text injected into the dialogue as the next user message.
inline std::string wrap_observation(const Observation& obs, const TagSet& tags = default_tags()) {
  return open_tag(tags.observation) + "\n" + obs.text + "\n" + close_tag(tags.observation);
}

}  // namespace sqlharness
