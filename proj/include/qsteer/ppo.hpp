#pragma once

#include <cstdint>
#include <vector>

#include "qsteer/common.hpp"
#include "qsteer/neural.hpp"
#include "qsteer/rng.hpp"

// PPO-Clip actor-critic over discrete and multi-discrete (factored) action
// spaces. The actor emits one logit block per factor; factors are
// independent softmaxes and the joint log-probability is their sum.

namespace qsteer::ppo {

struct PolicySpec {
  nn::Mlp actor;             // logits, concatenated per factor
  nn::Mlp critic;            // scalar state value
  std::vector<int> factors;  // {n} for single-discrete
};

// Hidden layers (64, 64), tanh; critic output 1.
PolicySpec make_policy(int obs_dim, const std::vector<int>& factors,
                       std::uint64_t seed);

// Per-factor categorical probabilities (each sums to 1).
std::vector<VectorXd> actor_distribution(const PolicySpec& spec,
                                         const VectorXd& obs);

struct ActionSample {
  std::vector<int> actions;  // one index per factor
  double log_prob = 0.0;     // joint
};
ActionSample sample_action(const PolicySpec& spec, const VectorXd& obs,
                           Rng& rng);
// Joint log-probability of a given action tuple.
double action_log_prob(const PolicySpec& spec, const VectorXd& obs,
                       const std::vector<int>& actions);
// Per-factor argmax (deterministic evaluation mode).
std::vector<int> greedy_action(const PolicySpec& spec, const VectorXd& obs);

double state_value(const PolicySpec& spec, const VectorXd& obs);

struct Transition {
  VectorXd obs;
  std::vector<int> actions;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;  // V(s) at collection time
  bool done = false;
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(int capacity);
  void add(Transition t);  // throws ContractError when already full
  bool full() const { return int(data_.size()) == capacity_; }
  int size() const { return int(data_.size()); }
  int capacity() const { return capacity_; }
  void clear() { data_.clear(); }
  const Transition& at(int i) const { return data_[size_t(i)]; }

  // V of the state following the last transition; used to bootstrap
  // truncated episodes. Ignored when the last transition is done.
  double bootstrap_value = 0.0;

 private:
  int capacity_;
  std::vector<Transition> data_;
};

struct PpoHyper {
  long total_steps = 50000;  // M
  int minibatch = 64;        // B
  int epochs = 4;            // K
  int k_step = 512;          // rollout length per update
  double gamma = 0.99;
  double epsilon = 0.2;      // clip radius
  double c1 = 0.5;           // value-loss coefficient
  double c2 = 0.01;          // entropy bonus coefficient
  double g_max = 0.5;        // joint gradient-norm cap
  double alpha0 = 4e-4;      // initial learning rate
  double lambda_gae = 0.95;  // 1.0 = rewards-to-go minus value
  bool normalize_advantages = true;
};

// G_t = r_t + gamma * G_{t+1}, restarting after each done.
VectorXd rewards_to_go(const VectorXd& rewards, double gamma,
                       const std::vector<bool>& dones);

// Generalized advantage estimation. values has length T+1 (bootstrap last).
VectorXd gae_advantages(const VectorXd& rewards, const VectorXd& values,
                        double gamma, double lambda_gae,
                        const std::vector<bool>& dones);

// min(ratio * a, clip(ratio, 1-eps, 1+eps) * a).
double ppo_clip_objective(double ratio, double advantage, double epsilon);

// alpha_k = (1 - (k-1)/m_updates) * alpha0, k in [1, m_updates].
double lr_schedule(int k, int m_updates, double alpha0);

// KL(p_old || p_new), natural log.
double kl_divergence_diagnostic(const VectorXd& old_probs,
                                const VectorXd& new_probs);

struct UpdateDiagnostics {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;  // -J_clip
  double value_loss = 0.0;   // mean (V - G)^2, before the c1 factor
  double entropy = 0.0;      // mean summed factor entropy
  double approx_kl = 0.0;    // mean(logp_old - logp_new)
};

// One policy update: K epochs of seeded-shuffled minibatches maximizing
// J_clip - c1 (V-G)^2 + c2 H via Adam, actor and critic gradients jointly
// norm-clipped at g_max. The buffer must hold exactly k_step transitions.
UpdateDiagnostics ppo_update(PolicySpec& spec, const RolloutBuffer& buffer,
                             const PpoHyper& hyper, nn::AdamState& actor_adam,
                             nn::AdamState& critic_adam, double lr, Rng& rng);

}  // namespace qsteer::ppo
