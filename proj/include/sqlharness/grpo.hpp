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

// Group-relative policy optimization with asymmetric ("clip-higher") ratio
// clipping and no KL term:
//
//   J(theta) = mean over groups of  1/G * sum_i min(rho_i A_i, clip(rho_i, 1 - eps_low, 1 + eps_high) A_i)
//   rho_i    = pi_theta(tau_i) / pi_theta_old(tau_i)
//   A_i      = (R_i - mean(R)) / (std(R) + eps_std)        (population std)
//
// The only trainable policy here is TemplatePolicy, a softmax over complete
// assistant turns, so log pi(tau_i) = log_softmax(logits)[index_i] and
// d log pi / d logits = onehot(index_i) - softmax(logits).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sqlharness/error.hpp"
#include "sqlharness/policy.hpp"

namespace sqlharness {

struct ClipConfig {
  double eps_low = 0.2;
  double eps_high = 0.28;

  void validate() const {
    if (!(eps_low > 0.0 && eps_low < 1.0)) throw ConfigError("clip: eps_low must be in (0, 1)");
    if (!(eps_high >= eps_low)) throw ConfigError("clip: eps_high must be >= eps_low");
  }
  double lower() const { return 1.0 - eps_low; }
  double upper() const { return 1.0 + eps_high; }
};

inline constexpr double kAdvantageEpsilon = 1e-8;

inline std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_std = kAdvantageEpsilon) {
  if (rewards.empty()) throw ContractError("group_advantages: empty group");
  if (!(eps_std > 0.0)) throw ContractError("group_advantages: eps_std must be positive");
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return std::vector<double>(rewards.size(), 0.0);
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / (sd + eps_std));
  return out;
}

inline double clipped_term(double rho, double advantage, const ClipConfig& clip) {
  const double clamped = std::clamp(rho, clip.lower(), clip.upper());
  return std::min(rho * advantage, clamped * advantage);
}

// True when the min() selects the clamped, ratio-independent branch, i.e. the
// member contributes no gradient.
inline bool clip_saturated(double rho, double advantage, const ClipConfig& clip) {
  return (advantage > 0.0 && rho > clip.upper()) || (advantage < 0.0 && rho < clip.lower());
}

struct GroupMember {
  std::size_t index = 0;  // candidate index (toy policy) or trajectory position
  double reward = 0.0;
  std::optional<double> old_logprob;  // absent when the serving endpoint gives no logprobs
};

struct RolloutGroup {
  std::string task_id;
  std::vector<GroupMember> members;
  std::vector<double> advantages;  // empty until normalized

  std::size_t size() const { return members.size(); }

  std::vector<double> rewards() const {
    std::vector<double> r;
    for (const auto& m : members) r.push_back(m.reward);
    return r;
  }

  void normalize(double eps_std = kAdvantageEpsilon) { advantages = group_advantages(rewards(), eps_std); }
};

namespace detail {

inline void require_ready(const RolloutGroup& g, std::size_t n_candidates) {
  if (g.members.empty()) throw ContractError("GRPO: empty group for task '" + g.task_id + "'");
  if (g.advantages.size() != g.members.size()) {
    throw ContractError("GRPO: advantages not set for task '" + g.task_id + "'");
  }
  for (const auto& m : g.members) {
    if (!m.old_logprob) throw ContractError("GRPO: member without old logprob in task '" + g.task_id + "'");
    if (m.index >= n_candidates) throw ContractError("GRPO: member index out of range");
  }
}

}  // namespace detail

// Objective at `logits` using the old logprobs stored in each member.
inline double grpo_objective(const std::vector<double>& logits, const std::vector<RolloutGroup>& groups,
                             const ClipConfig& clip) {
  if (groups.empty()) return 0.0;
  const auto lp = log_softmax(logits);
  double total = 0.0;
  for (const auto& g : groups) {
    detail::require_ready(g, logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      const auto& m = g.members[i];
      const double rho = std::exp(lp[m.index] - *m.old_logprob);
      sum += clipped_term(rho, g.advantages[i], clip);
    }
    total += sum / static_cast<double>(g.members.size());
  }
  return total / static_cast<double>(groups.size());
}

// Analytic d objective / d logits.
inline std::vector<double> grpo_gradient(const std::vector<double>& logits, const std::vector<RolloutGroup>& groups,
                                         const ClipConfig& clip) {
  std::vector<double> grad(logits.size(), 0.0);
  if (groups.empty()) return grad;
  const auto lp = log_softmax(logits);
  std::vector<double> p(lp.size());
  for (std::size_t k = 0; k < lp.size(); ++k) p[k] = std::exp(lp[k]);
  const double outer = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    detail::require_ready(g, logits.size());
    const double inner = outer / static_cast<double>(g.members.size());
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      const auto& m = g.members[i];
      const double adv = g.advantages[i];
      if (adv == 0.0) continue;
      const double rho = std::exp(lp[m.index] - *m.old_logprob);
      if (clip_saturated(rho, adv, clip)) continue;
      // d(rho A)/d logit_k = A rho (onehot_k - p_k)
      const double scale = inner * adv * rho;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= scale * p[k];
      grad[m.index] += scale;
    }
  }
  return grad;
}

// Checks that each member's old logprob was computed under `old_logits`.
inline double toy_objective(const TemplatePolicy& policy, const std::vector<RolloutGroup>& groups,
                            const std::vector<double>& old_logits, const ClipConfig& clip) {
  policy.validate();
  if (old_logits.size() != policy.logits.size()) throw ContractError("toy_objective: snapshot size mismatch");
  const auto old_lp = log_softmax(old_logits);
  for (const auto& g : groups) {
    for (const auto& m : g.members) {
      if (!m.old_logprob || m.index >= old_lp.size() || std::fabs(*m.old_logprob - old_lp[m.index]) > 1e-9) {
        throw ContractError("toy_objective: member old logprob does not match the snapshot (task '" + g.task_id +
                            "')");
      }
    }
  }
  return grpo_objective(policy.logits, groups, clip);
}

// Max relative error between the analytic gradient and central differences.
inline double grad_check(const TemplatePolicy& policy, const std::vector<RolloutGroup>& groups, const ClipConfig& clip,
                         double h = 1e-5) {
  if (h < 1e-7 || h > 1e-3) throw ContractError("grad_check: h must be in [1e-7, 1e-3]");
  const auto analytic = grpo_gradient(policy.logits, groups, clip);
  double worst = 0.0;
  auto theta = policy.logits;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const double up = grpo_objective(theta, groups, clip);
    theta[k] = saved - h;
    const double down = grpo_objective(theta, groups, clip);
    theta[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::fabs(analytic[k]), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(analytic[k] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Desk-scale trainer

struct ToyHyper {
  double lr = 0.1;
  int steps = 500;
  int group_size = 6;
  ClipConfig clip;
  int inner_epochs = 2;
  std::uint64_t seed = 0;
  double divergence_bound = 50.0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train-toy: lr must be positive");
    if (steps < 0) throw ConfigError("train-toy: steps must be >= 0");
    if (group_size < 1) throw ConfigError("train-toy: group size must be >= 1");
    if (inner_epochs < 1) throw ConfigError("train-toy: inner_epochs must be >= 1");
    clip.validate();
  }
};

struct StepMetrics {
  int step = 0;
  double objective = 0.0;    // before the last inner update of the step
  double mean_reward = 0.0;  // over the sampled group
  double p_best = 0.0;       // after the step
  double max_ratio = 0.0;    // over members, after the step
  double clip_fraction = 0.0;
};

struct ToyTrainResult {
  TemplatePolicy policy;
  std::vector<StepMetrics> metrics;
  std::size_t best_index = 0;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Trains `policy` against fixed per-candidate rewards. The candidate with the
// highest reward (first on ties) is reported as best.
inline ToyTrainResult toy_train(TemplatePolicy policy, const std::vector<double>& candidate_rewards,
                                const ToyHyper& hyper) {
  policy.validate();
  hyper.validate();
  if (candidate_rewards.size() != policy.candidates.size()) {
    throw ContractError("toy_train: one reward per candidate required");
  }
  ToyTrainResult result;
  result.best_index = static_cast<std::size_t>(
      std::max_element(candidate_rewards.begin(), candidate_rewards.end()) - candidate_rewards.begin());

  for (int step = 0; step < hyper.steps; ++step) {
    const auto old_logits = policy.logits;
    SplitMix64 rng(derive_seed(hyper.seed, "toy-step", static_cast<std::uint64_t>(step)));
    RolloutGroup group;
    group.task_id = "toy";
    for (int i = 0; i < hyper.group_size; ++i) {
      const auto s = template_sample(policy, rng);
      group.members.push_back({s.index, candidate_rewards[s.index], s.logprob});
    }
    group.normalize();
    const std::vector<RolloutGroup> batch{group};

    StepMetrics m;
    m.step = step;
    m.mean_reward = std::accumulate(group.members.begin(), group.members.end(), 0.0,
                                    [](double a, const GroupMember& x) { return a + x.reward; }) /
                    static_cast<double>(group.size());
    for (int epoch = 0; epoch < hyper.inner_epochs; ++epoch) {
      m.objective = grpo_objective(policy.logits, batch, hyper.clip);
      const auto grad = grpo_gradient(policy.logits, batch, hyper.clip);
      for (std::size_t k = 0; k < grad.size(); ++k) policy.logits[k] += hyper.lr * grad[k];
    }
    for (std::size_t k = 0; k < policy.logits.size(); ++k) {
      if (!std::isfinite(policy.logits[k]) || std::fabs(policy.logits[k]) > hyper.divergence_bound) {
        std::ostringstream msg;
        msg << "train-toy diverged at step " << step << ": logit[" << k << "] = " << policy.logits[k]
            << " (bound " << hyper.divergence_bound << ", lr " << hyper.lr << ")";
        throw DivergenceError(msg.str());
      }
    }
    const auto lp = policy.log_probabilities();
    int clipped = 0;
    for (std::size_t i = 0; i < group.members.size(); ++i) {
      const double rho = std::exp(lp[group.members[i].index] - *group.members[i].old_logprob);
      m.max_ratio = std::max(m.max_ratio, rho);
      clipped += clip_saturated(rho, group.advantages[i], hyper.clip) ? 1 : 0;
    }
    m.clip_fraction = static_cast<double>(clipped) / static_cast<double>(group.size());
    m.p_best = std::exp(lp[result.best_index]);
    result.metrics.push_back(m);
  }
  result.policy = std::move(policy);
  return result;
}

inline std::string metrics_csv(const std::vector<StepMetrics>& metrics) {
  std::ostringstream out;
  out.precision(17);
  out << "step,objective,mean_reward,p_best,max_ratio,clip_fraction\n";
  for (const auto& m : metrics) {
    out << m.step << "," << m.objective << "," << m.mean_reward << "," << m.p_best << "," << m.max_ratio << ","
        << m.clip_fraction << "\n";
  }
  return out.str();
}

}  // namespace sqlharness
