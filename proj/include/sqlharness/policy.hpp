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

// Policies: anything that maps a dialogue to the next assistant turn.
// The remote chat-completions client lives in remote_policy.hpp so that only
// code that talks to an endpoint pulls in the HTTP stack.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqlharness/error.hpp"
#include "sqlharness/message.hpp"

namespace sqlharness {

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  std::optional<std::int64_t> seed;

  bool greedy() const { return temperature == 0.0; }

  void validate() const {
    if (!(temperature >= 0.0)) throw ConfigError("sampling: temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sampling: top_p must be in (0, 1]");
    if (max_tokens <= 0) throw ConfigError("sampling: max_tokens must be positive");
  }
};

class Policy {
 public:
  virtual ~Policy() = default;

  // Returns the next assistant turn for `dialogue`. `request_id` is stable per
  // (trajectory, turn) so that retried calls can be deduplicated upstream.
  virtual std::string complete(const Dialogue& dialogue, const SamplingConfig& cfg,
                               std::string_view request_id = {}) = 0;
};

// Builds one independent policy session per trajectory; the argument is the
// trajectory's sampling seed.
using PolicyFactory = std::function<std::unique_ptr<Policy>(std::uint64_t seed)>;

// ---------------------------------------------------------------------------
// Scripted

inline const std::string& scripted_next(const std::vector<std::string>& script, std::size_t call_index) {
  if (script.empty()) throw ConfigError("scripted policy: empty script");
  return script[std::min(call_index, script.size() - 1)];
}

// Replays a fixed list of turns; once exhausted, repeats the last one.
class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::vector<std::string> script) : script_(std::move(script)) {
    if (script_.empty()) throw ConfigError("scripted policy: empty script");
  }

  std::string complete(const Dialogue& dialogue, const SamplingConfig&, std::string_view = {}) override {
    if (dialogue.empty()) throw ContractError("complete: empty dialogue");
    return scripted_next(script_, calls_++);
  }

  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::string> script_;
  std::size_t calls_ = 0;
};

inline PolicyFactory scripted_factory(std::vector<std::string> script) {
  if (script.empty()) throw ConfigError("scripted policy: empty script");
  return [script = std::move(script)](std::uint64_t) { return std::make_unique<ScriptedPolicy>(script); };
}

// ---------------------------------------------------------------------------
// Randomness

// SplitMix64: small, fast and identical on every platform, which keeps runs
// byte-reproducible across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic child seed for (root, key, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view key, std::uint64_t index) {
  SplitMix64 mix(root ^ fnv1a(key));
  SplitMix64 child(mix.next() + index * 0xD1B54A32D192ED03ULL);
  return child.next();
}

// ---------------------------------------------------------------------------
// Softmax over fixed candidate turns

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  if (logits.empty()) return {};
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

// A categorical policy over complete assistant turns. Its logits are the only
// trainable parameters in the harness.
struct TemplatePolicy {
  std::vector<std::string> candidates;
  std::vector<double> logits;

  TemplatePolicy() = default;
  TemplatePolicy(std::vector<std::string> c, std::vector<double> l) : candidates(std::move(c)), logits(std::move(l)) {
    validate();
  }

  static TemplatePolicy uniform(std::vector<std::string> c) {
    std::vector<double> l(c.size(), 0.0);
    return TemplatePolicy(std::move(c), std::move(l));
  }

  void validate() const {
    if (candidates.empty()) throw ConfigError("template policy: no candidates");
    if (candidates.size() != logits.size()) throw ConfigError("template policy: logits/candidates size mismatch");
  }

  std::vector<double> probabilities() const { return softmax(logits); }
  std::vector<double> log_probabilities() const { return log_softmax(logits); }
};

struct TemplateSample {
  std::size_t index = 0;
  double logprob = 0.0;
};

inline TemplateSample template_sample(const TemplatePolicy& policy, SplitMix64& rng) {
  policy.validate();
  const auto lp = policy.log_probabilities();
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    acc += std::exp(lp[i]);
    if (u < acc) return {i, lp[i]};
  }
  return {lp.size() - 1, lp.back()};  // rounding: u landed past the last bucket
}

inline TemplateSample template_sample(const TemplatePolicy& policy, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return template_sample(policy, rng);
}

// Adapter so a TemplatePolicy can drive the rollout loop. Each session draws
// one candidate up front and answers every call with it.
class TemplateChatPolicy final : public Policy {
 public:
  TemplateChatPolicy(const TemplatePolicy& policy, std::uint64_t seed) : chosen_(template_sample(policy, seed)) {
    text_ = policy.candidates[chosen_.index];
  }

  std::string complete(const Dialogue& dialogue, const SamplingConfig&, std::string_view = {}) override {
    if (dialogue.empty()) throw ContractError("complete: empty dialogue");
    return text_;
  }

  const TemplateSample& sample() const { return chosen_; }

 private:
  TemplateSample chosen_;
  std::string text_;
};

}  // namespace sqlharness
