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

#pragma once

#include <cstddef>
#include <string>

#include "sqlharness/error.hpp"

namespace sqlharness {

// Exact ratio of two set sizes, as produced by the Jaccard rewards.
struct Fraction {
  std::size_t num = 0;
  std::size_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Fraction& o) const { return num * o.den == o.num * den; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

struct RewardWeights {
  double exec = 5;
  double turns = 2;
  double schema = 1;
  double bigram = 1;
  double syntax = 1;
  double format = 1;

  void validate() const {
    if (exec < 0 || turns < 0 || schema < 0 || bigram < 0 || syntax < 0 || format < 0) {
      throw ConfigError("reward weights must be nonnegative");
    }
  }
  double sum() const { return exec + turns + schema + bigram + syntax + format; }
  bool operator==(const RewardWeights&) const = default;
};

struct RewardBreakdown {
  int r_exec = 0;
  int r_turns = 0;
  double r_schema = 0;
  double r_bigram = 0;
  int r_syntax = 0;
  int r_format = 0;
  double total = 0;

  bool operator==(const RewardBreakdown&) const = default;
};

inline RewardBreakdown total_reward(RewardBreakdown c, const RewardWeights& w = {}) {
  w.validate();
  auto binary = [](int v, const char* name) {
    if (v != 0 && v != 1) throw ContractError(std::string("reward component ") + name + " must be 0 or 1");
  };
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string("reward component ") + name + " must be in [0,1]");
  };
  binary(c.r_exec, "r_exec");
  binary(c.r_turns, "r_turns");
  binary(c.r_syntax, "r_syntax");
  binary(c.r_format, "r_format");
  unit(c.r_schema, "r_schema");
  unit(c.r_bigram, "r_bigram");
  c.total = w.exec * c.r_exec + w.turns * c.r_turns + w.schema * c.r_schema + w.bigram * c.r_bigram +
            w.syntax * c.r_syntax + w.format * c.r_format;
  return c;
}

}  // namespace sqlharness
