#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "cvr/episode.hpp"
#include "cvr/policy.hpp"
#include "cvr/reward.hpp"
#include "cvr/tabular.hpp"

namespace cvr {

// Group-relative policy optimization over the tabular softmax policy.
//
// For a group of G trajectories sampled for one query under theta_old:
//
//   J(theta) = (1/G) sum_i min(r_i A_i, clip(r_i, 1-eps, 1+eps) A_i) - beta KL(theta || ref)
//   r_i      = exp(logp_theta(H_i) - logp_old(H_i))      (whole-trajectory ratio)
//   A_i      = (R_i - mean R) / std R                     (population std)
//
// KL is the exact categorical divergence averaged over the state keys visited
// by the group (with multiplicity).

struct GrpoConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.005;
  double learning_rate = 0.5;
  double sigma_floor = 1e-8;
  int iterations = 500;
  int scripts_per_iteration = 0;  // 0: the whole corpus every iteration
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (group_size < 2) throw Error("grpo config: group_size must be >= 2");
    if (!(clip_eps > 0 && clip_eps < 1)) throw Error("grpo config: clip_eps must be in (0, 1)");
    if (!(kl_beta >= 0)) throw Error("grpo config: kl_beta must be >= 0");
    if (!(learning_rate > 0)) throw Error("grpo config: learning_rate must be > 0");
    if (iterations < 1) throw Error("grpo config: iterations must be >= 1");
  }
};

struct TrajectorySample {
  std::vector<TemplateChoice> steps;
  double reward = 0;
};

struct GroupBatch {
  std::vector<TrajectorySample> trajectories;
  std::vector<double> advantages;
};

using LogitGradient = std::map<StateKey, std::vector<double>>;

// (R_i - mu) / sigma with the population standard deviation; all zeros when
// sigma < sigma_floor.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double sigma_floor = 1e-8) {
  const auto g = rewards.size();
  if (g < 2) throw Error("group_advantages: need at least 2 rewards");
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sigma = std::sqrt(var / static_cast<double>(g));
  std::vector<double> adv(g, 0.0);
  if (!(sigma >= sigma_floor)) return adv;
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sigma;
  return adv;
}

inline double trajectory_log_prob(const PolicyParams& params, const TrajectorySample& traj) {
  double lp = 0;
  for (const auto& step : traj.steps) {
    if (step.index < 0 || step.index >= params.num_templates())
      throw Error("trajectory_log_prob: template index out of range");
    lp += log_softmax(params.row(step.key))[step.index];
  }
  return lp;
}

inline double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

inline std::vector<StateKey> visited_keys(const GroupBatch& batch) {
  std::vector<StateKey> keys;
  for (const auto& t : batch.trajectories)
    for (const auto& s : t.steps) keys.push_back(s.key);
  return keys;
}

inline double kl_to_reference(const PolicyParams& params, const PolicyParams& ref,
                              std::span<const StateKey> visited) {
  if (visited.empty()) return 0.0;
  double sum = 0;
  for (const auto& key : visited) sum += categorical_kl(params.row(key), ref.row(key));
  return sum / static_cast<double>(visited.size());
}

inline double mean_entropy(const PolicyParams& params, std::span<const StateKey> visited) {
  if (visited.empty()) return 0.0;
  double sum = 0;
  for (const auto& key : visited) sum += entropy(params.row(key));
  return sum / static_cast<double>(visited.size());
}

namespace detail {

inline void check_batch(const GroupBatch& batch) {
  if (batch.trajectories.size() < 2) throw Error("grpo: group needs at least 2 trajectories");
  if (batch.advantages.size() != batch.trajectories.size())
    throw Error("grpo: advantages are missing or mis-sized");
}

}  // namespace detail

inline double grpo_objective(const PolicyParams& theta, const PolicyParams& theta_old,
                             const PolicyParams& theta_ref, const GroupBatch& batch,
                             const GrpoConfig& config) {
  detail::check_batch(batch);
  const auto g = static_cast<double>(batch.trajectories.size());
  double surrogate = 0;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const auto& t = batch.trajectories[i];
    const double ratio = std::exp(trajectory_log_prob(theta, t) - trajectory_log_prob(theta_old, t));
    surrogate += clipped_surrogate(ratio, batch.advantages[i], config.clip_eps);
  }
  const auto keys = visited_keys(batch);
  return surrogate / g - config.kl_beta * kl_to_reference(theta, theta_ref, keys);
}

// Exact gradient of grpo_objective over every logit of every visited row.
// Where min() selects the clipped constant the surrogate contributes nothing;
// on ties the unclipped branch is taken.
inline LogitGradient grpo_gradient(const PolicyParams& theta, const PolicyParams& theta_old,
                                   const PolicyParams& theta_ref, const GroupBatch& batch,
                                   const GrpoConfig& config) {
  detail::check_batch(batch);
  const int k = theta.num_templates();
  const auto g = static_cast<double>(batch.trajectories.size());
  LogitGradient grad;
  auto grad_row = [&](const StateKey& key) -> std::vector<double>& {
    auto it = grad.find(key);
    if (it == grad.end()) it = grad.emplace(key, std::vector<double>(k, 0.0)).first;
    return it->second;
  };

  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const auto& t = batch.trajectories[i];
    const double adv = batch.advantages[i];
    const double ratio = std::exp(trajectory_log_prob(theta, t) - trajectory_log_prob(theta_old, t));
    const double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
    for (const auto& s : t.steps) grad_row(s.key);
    if (ratio * adv > clipped * adv || adv == 0.0) continue;
    // d/dtheta [r A] = A r grad logp(H); grad logp = sum_t (onehot(c_t) - p(key_t)).
    const double scale = adv * ratio / g;
    for (const auto& s : t.steps) {
      const auto p = softmax(theta.row(s.key));
      auto& row = grad_row(s.key);
      for (int j = 0; j < k; ++j) row[j] += scale * ((j == s.index ? 1.0 : 0.0) - p[j]);
    }
  }

  if (config.kl_beta > 0) {
    const auto keys = visited_keys(batch);
    const double w = config.kl_beta / static_cast<double>(keys.size());
    for (const auto& key : keys) {
      // d KL(p||q) / dz_j = p_j (log p_j - log q_j - KL)
      const auto lp = log_softmax(theta.row(key));
      const auto lq = log_softmax(theta_ref.row(key));
      double kl = 0;
      for (int j = 0; j < k; ++j) kl += std::exp(lp[j]) * (lp[j] - lq[j]);
      auto& row = grad_row(key);
      for (int j = 0; j < k; ++j) row[j] -= w * std::exp(lp[j]) * (lp[j] - lq[j] - kl);
    }
  }
  return grad;
}

// Gradient ascent step.
inline void apply_gradient(PolicyParams& params, const LogitGradient& grad, double step) {
  for (const auto& [key, g] : grad) {
    auto& row = params.row_mut(key);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += step * g[j];
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct IterationStats {
  int iteration = 0;
  double mean_r_total = 0;
  double mean_r_ans = 0;
  double mean_r_fmt = 0;
  double entropy = 0;
  double kl_to_ref = 0;
};

struct TrainingHistory {
  std::vector<IterationStats> rows;

  void write_csv(std::ostream& os) const {
    os << "iteration,mean_r_total,mean_r_ans,mean_r_fmt,entropy,kl_to_ref\n";
    for (const auto& r : rows)
      os << fmt::format("{},{},{},{},{},{}\n", r.iteration, r.mean_r_total, r.mean_r_ans,
                        r.mean_r_fmt, r.entropy, r.kl_to_ref);
  }
};

struct TrainingResult {
  PolicyParams params;
  TrainingHistory history;
};

inline TrajectorySample to_sample(const Trajectory& t, double reward) {
  return {t.all_choices(), reward};
}

// Per iteration: freeze theta_old, then for each script in the (shuffled)
// batch roll out G trajectories under theta_old in the simulator, score them,
// normalize within the group, and take one ascent step on theta. theta_ref is
// the initial policy.
inline TrainingResult train(const std::vector<SemanticScript>& corpus, const GrpoConfig& config,
                            const EpisodeConfig& episode_config,
                            const RewardConfig& reward_config = {},
                            PolicyParams initial = PolicyParams{},
                            std::string_view system_prompt = {}) {
  config.validate();
  episode_config.validate();
  if (corpus.empty()) throw Error("train: corpus is empty");

  TrainingResult result{std::move(initial), {}};
  PolicyParams& theta = result.params;
  const PolicyParams theta_ref = theta;
  Rng rng(config.seed);

  std::vector<EpisodeTask> tasks;
  std::vector<SimEnvironment> envs;
  tasks.reserve(corpus.size());
  envs.reserve(corpus.size());
  for (const auto& s : corpus) {
    tasks.push_back(make_task(s));
    envs.emplace_back(s);
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_iter =
      config.scripts_per_iteration > 0
          ? std::min<std::size_t>(config.scripts_per_iteration, corpus.size())
          : corpus.size();

  for (int it = 0; it < config.iterations; ++it) {
    const PolicyParams theta_old = theta;
    SoftmaxPolicy policy(theta_old);
    shuffle(order, rng);

    std::vector<EpisodeJob> jobs;
    for (std::size_t b = 0; b < per_iter; ++b)
      for (int g = 0; g < config.group_size; ++g)
        jobs.push_back({&tasks[order[b]], &envs[order[b]], rng()});
    const auto trajectories =
        run_episodes(policy, jobs, episode_config, system_prompt, config.threads);

    IterationStats stats;
    stats.iteration = it;
    std::vector<StateKey> all_keys;
    for (std::size_t b = 0; b < per_iter; ++b) {
      const GoldAnswer& gold = corpus[order[b]].gold;
      GroupBatch batch;
      std::vector<double> rewards;
      for (int g = 0; g < config.group_size; ++g) {
        const auto& t = trajectories[b * config.group_size + g];
        const auto r = total_reward(t, gold, reward_config);
        stats.mean_r_total += r.r_total;
        stats.mean_r_ans += r.r_ans;
        stats.mean_r_fmt += r.r_fmt;
        rewards.push_back(r.r_total);
        batch.trajectories.push_back(to_sample(t, r.r_total));
      }
      batch.advantages = group_advantages(rewards, config.sigma_floor);
      const auto keys = visited_keys(batch);
      all_keys.insert(all_keys.end(), keys.begin(), keys.end());
      apply_gradient(theta, grpo_gradient(theta, theta_old, theta_ref, batch, config),
                     config.learning_rate);
    }
    const double n = static_cast<double>(per_iter * config.group_size);
    stats.mean_r_total /= n;
    stats.mean_r_ans /= n;
    stats.mean_r_fmt /= n;
    stats.entropy = mean_entropy(theta_old, all_keys);
    stats.kl_to_ref = kl_to_reference(theta_old, theta_ref, all_keys);
    if (std::isnan(stats.mean_r_total) || !std::isfinite(stats.kl_to_ref))
      throw Error(fmt::format("train: diverged at iteration {}", it));
    result.history.rows.push_back(stats);
  }
  return result;
}

}  // namespace cvr
