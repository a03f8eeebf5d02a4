#include "qsteer/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qsteer::ppo {

namespace {

int total_logits(const std::vector<int>& factors) {
  int n = 0;
  for (int f : factors) {
    if (f < 2) throw ValidationError("each action factor needs >= 2 options");
    n += f;
  }
  if (n == 0) throw ValidationError("empty action structure");
  return n;
}

// Row-wise softmax of one factor's logit block.
MatrixXd factor_probs(const MatrixXd& logits, int offset, int width) {
  MatrixXd block = logits.middleCols(offset, width);
  const VectorXd rowmax = block.rowwise().maxCoeff();
  block = (block.colwise() - rowmax).array().exp();
  const VectorXd sums = block.rowwise().sum();
  return block.array().colwise() / sums.array();
}

VectorXd rtg_bootstrapped(const VectorXd& rewards, double gamma,
                          const std::vector<bool>& dones, double bootstrap) {
  if (int(dones.size()) != rewards.size())
    throw ValidationError("rewards/dones length mismatch");
  VectorXd g(rewards.size());
  double acc = bootstrap;
  for (int t = int(rewards.size()) - 1; t >= 0; --t) {
    if (dones[size_t(t)]) acc = 0.0;
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

}  // namespace

PolicySpec make_policy(int obs_dim, const std::vector<int>& factors,
                       std::uint64_t seed) {
  if (obs_dim < 1) throw ValidationError("observation dimension must be >= 1");
  PolicySpec spec;
  spec.factors = factors;
  spec.actor = nn::init_mlp({obs_dim, 64, 64, total_logits(factors)},
                            derive_seed(seed, 0x616374),
                            nn::OutputActivation::Identity);
  spec.critic = nn::init_mlp({obs_dim, 64, 64, 1}, derive_seed(seed, 0x637274),
                             nn::OutputActivation::Identity);
  return spec;
}

std::vector<VectorXd> actor_distribution(const PolicySpec& spec,
                                         const VectorXd& obs) {
  if (obs.size() != spec.actor.in_dim())
    throw ValidationError("observation dimension mismatch");
  const MatrixXd logits = nn::mlp_forward(spec.actor, obs.transpose());
  std::vector<VectorXd> probs;
  int at = 0;
  for (int f : spec.factors) {
    probs.push_back(factor_probs(logits, at, f).row(0).transpose());
    at += f;
  }
  return probs;
}

ActionSample sample_action(const PolicySpec& spec, const VectorXd& obs,
                           Rng& rng) {
  ActionSample out;
  for (const VectorXd& p : actor_distribution(spec, obs)) {
    const int a = rng.categorical(p);
    out.actions.push_back(a);
    out.log_prob += std::log(p[a]);
  }
  return out;
}

double action_log_prob(const PolicySpec& spec, const VectorXd& obs,
                       const std::vector<int>& actions) {
  const auto probs = actor_distribution(spec, obs);
  if (actions.size() != probs.size())
    throw ValidationError("action tuple arity mismatch");
  double lp = 0.0;
  for (size_t f = 0; f < probs.size(); ++f) {
    if (actions[f] < 0 || actions[f] >= probs[f].size())
      throw ValidationError("action index out of range");
    lp += std::log(probs[f][actions[f]]);
  }
  return lp;
}

std::vector<int> greedy_action(const PolicySpec& spec, const VectorXd& obs) {
  std::vector<int> out;
  for (const VectorXd& p : actor_distribution(spec, obs)) {
    int a = 0;
    p.maxCoeff(&a);
    out.push_back(a);
  }
  return out;
}

double state_value(const PolicySpec& spec, const VectorXd& obs) {
  if (obs.size() != spec.critic.in_dim())
    throw ValidationError("observation dimension mismatch");
  return nn::mlp_forward_one(spec.critic, obs)[0];
}

RolloutBuffer::RolloutBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ValidationError("buffer capacity must be >= 1");
  data_.reserve(size_t(capacity));
}

void RolloutBuffer::add(Transition t) {
  if (full()) throw ContractError("rollout buffer already holds k_step steps");
  if (!std::isfinite(t.reward)) throw ValidationError("non-finite reward");
  data_.push_back(std::move(t));
}

VectorXd rewards_to_go(const VectorXd& rewards, double gamma,
                       const std::vector<bool>& dones) {
  return rtg_bootstrapped(rewards, gamma, dones, 0.0);
}

VectorXd gae_advantages(const VectorXd& rewards, const VectorXd& values,
                        double gamma, double lambda_gae,
                        const std::vector<bool>& dones) {
  const int t_len = int(rewards.size());
  if (values.size() != t_len + 1)
    throw ValidationError("values must have length T+1 (bootstrap last)");
  if (int(dones.size()) != t_len)
    throw ValidationError("rewards/dones length mismatch");
  VectorXd adv(t_len);
  double acc = 0.0;
  for (int t = t_len - 1; t >= 0; --t) {
    const double mask = dones[size_t(t)] ? 0.0 : 1.0;
    const double delta =
        rewards[t] + gamma * mask * values[t + 1] - values[t];
    acc = delta + gamma * lambda_gae * mask * acc;
    adv[t] = acc;
  }
  return adv;
}

double ppo_clip_objective(double ratio, double advantage, double epsilon) {
  if (ratio <= 0.0) throw ValidationError("probability ratio must be > 0");
  const double clipped =
      std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage;
  return std::min(ratio * advantage, clipped);
}

double lr_schedule(int k, int m_updates, double alpha0) {
  if (m_updates < 1) throw ValidationError("m_updates must be >= 1");
  if (k < 1 || k > m_updates)
    throw ValidationError("update index out of [1, m_updates]");
  return (1.0 - double(k - 1) / double(m_updates)) * alpha0;
}

double kl_divergence_diagnostic(const VectorXd& old_probs,
                                const VectorXd& new_probs) {
  validate_distribution(old_probs);
  validate_distribution(new_probs);
  if (old_probs.size() != new_probs.size())
    throw ValidationError("distribution size mismatch");
  double kl = 0.0;
  for (int i = 0; i < old_probs.size(); ++i) {
    if (old_probs[i] == 0.0) continue;
    if (new_probs[i] <= 0.0)
      throw NumericError("KL undefined: new distribution lacks support");
    kl += old_probs[i] * std::log(old_probs[i] / new_probs[i]);
  }
  return std::max(kl, 0.0);
}

UpdateDiagnostics ppo_update(PolicySpec& spec, const RolloutBuffer& buffer,
                             const PpoHyper& hyper, nn::AdamState& actor_adam,
                             nn::AdamState& critic_adam, double lr, Rng& rng) {
  const int t_len = buffer.size();
  if (t_len != hyper.k_step)
    throw ValidationError("ppo_update needs a full rollout buffer");
  if (hyper.minibatch < 1 || hyper.minibatch > t_len)
    throw ValidationError("minibatch size must be in [1, k_step]");

  const int obs_dim = spec.actor.in_dim();
  const int n_factors = int(spec.factors.size());
  MatrixXd obs(t_len, obs_dim);
  Eigen::MatrixXi actions(t_len, n_factors);
  VectorXd logp_old(t_len), rewards(t_len), values(t_len + 1);
  std::vector<bool> dones(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    const Transition& tr = buffer.at(t);
    if (tr.obs.size() != obs_dim)
      throw ValidationError("transition observation dimension mismatch");
    if (int(tr.actions.size()) != n_factors)
      throw ValidationError("transition action arity mismatch");
    obs.row(t) = tr.obs.transpose();
    for (int f = 0; f < n_factors; ++f) actions(t, f) = tr.actions[size_t(f)];
    logp_old[t] = tr.log_prob;
    rewards[t] = tr.reward;
    values[t] = tr.value;
    dones[size_t(t)] = tr.done;
  }
  values[t_len] = dones[size_t(t_len - 1)] ? 0.0 : buffer.bootstrap_value;

  const VectorXd adv_raw =
      gae_advantages(rewards, values, hyper.gamma, hyper.lambda_gae, dones);
  const VectorXd targets = rtg_bootstrapped(rewards, hyper.gamma, dones,
                                            values[t_len]);
  VectorXd adv = adv_raw;
  if (hyper.normalize_advantages) {
    const double mean = adv.mean();
    const double sd =
        std::sqrt((adv.array() - mean).square().sum() / double(t_len));
    adv = (adv.array() - mean) / (sd + 1e-8);
  }

  nn::Gradients g_actor = nn::zero_like(spec.actor);
  nn::Gradients g_critic = nn::zero_like(spec.critic);
  std::vector<int> order(static_cast<size_t>(t_len));
  std::iota(order.begin(), order.end(), 0);

  UpdateDiagnostics diag;
  long batches = 0, samples = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (int begin = 0; begin < t_len; begin += hyper.minibatch) {
      const int nb = std::min(hyper.minibatch, t_len - begin);
      MatrixXd bobs(nb, obs_dim);
      for (int i = 0; i < nb; ++i)
        bobs.row(i) = obs.row(order[size_t(begin + i)]);

      nn::ForwardCache actor_cache, critic_cache;
      const MatrixXd logits = nn::mlp_forward(spec.actor, bobs, &actor_cache);
      const VectorXd v =
          nn::mlp_forward(spec.critic, bobs, &critic_cache).col(0);

      VectorXd logp_new = VectorXd::Zero(nb);
      VectorXd ent = VectorXd::Zero(nb);
      std::vector<MatrixXd> probs(static_cast<size_t>(n_factors));
      int at = 0;
      for (int f = 0; f < n_factors; ++f) {
        probs[size_t(f)] = factor_probs(logits, at, spec.factors[size_t(f)]);
        const MatrixXd& p = probs[size_t(f)];
        for (int i = 0; i < nb; ++i) {
          const int a = actions(order[size_t(begin + i)], f);
          logp_new[i] += std::log(p(i, a));
          for (int j = 0; j < p.cols(); ++j)
            if (p(i, j) > 0.0) ent[i] -= p(i, j) * std::log(p(i, j));
        }
        at += spec.factors[size_t(f)];
      }

      double policy_loss = 0.0, value_loss = 0.0;
      MatrixXd dlogits = MatrixXd::Zero(nb, logits.cols());
      VectorXd dv(nb);
      for (int i = 0; i < nb; ++i) {
        const int t = order[size_t(begin + i)];
        const double ratio = std::exp(logp_new[i] - logp_old[t]);
        const double a_hat = adv[t];
        const double surr1 = ratio * a_hat;
        const double surr2 =
            std::clamp(ratio, 1.0 - hyper.epsilon, 1.0 + hyper.epsilon) *
            a_hat;
        policy_loss -= std::min(surr1, surr2);
        // d(-J)/dlogp: active only on the unclipped branch.
        const double coeff = (surr1 <= surr2) ? -ratio * a_hat : 0.0;

        diag.mean_ratio += ratio;
        diag.approx_kl += logp_old[t] - logp_new[i];
        diag.entropy += ent[i];
        if (ratio < 1.0 - hyper.epsilon || ratio > 1.0 + hyper.epsilon)
          diag.clip_fraction += 1.0;

        int off = 0;
        for (int f = 0; f < n_factors; ++f) {
          const MatrixXd& p = probs[size_t(f)];
          const int width = spec.factors[size_t(f)];
          const int a = actions(t, f);
          double h_f = 0.0;
          for (int j = 0; j < width; ++j)
            if (p(i, j) > 0.0) h_f -= p(i, j) * std::log(p(i, j));
          for (int j = 0; j < width; ++j) {
            const double pj = p(i, j);
            // dlogp/dz_j = 1[j=a] - p_j; dH/dz_j = -p_j (log p_j + H_f).
            const double dlogp = (j == a ? 1.0 : 0.0) - pj;
            const double dh =
                (pj > 0.0) ? -pj * (std::log(pj) + h_f) : 0.0;
            dlogits(i, off + j) +=
                (coeff * dlogp - hyper.c2 * dh) / double(nb);
          }
          off += width;
        }

        const double err = v[i] - targets[t];
        value_loss += err * err;
        dv[i] = 2.0 * hyper.c1 * err / double(nb);
      }
      policy_loss /= double(nb);
      value_loss /= double(nb);
      diag.policy_loss += policy_loss;
      diag.value_loss += value_loss;
      if (!std::isfinite(policy_loss) || !std::isfinite(value_loss))
        throw NumericError("non-finite PPO loss at minibatch " +
                           std::to_string(batches));

      g_actor.set_zero();
      g_critic.set_zero();
      nn::mlp_backward(spec.actor, actor_cache, dlogits, g_actor);
      nn::mlp_backward(spec.critic, critic_cache, dv, g_critic);
      nn::clip_gradient_norm({&g_actor, &g_critic}, hyper.g_max);
      nn::adam_step(spec.actor, g_actor, actor_adam, lr);
      nn::adam_step(spec.critic, g_critic, critic_adam, lr);
      ++batches;
      samples += nb;
    }
  }

  const double steps = double(samples);
  diag.mean_ratio /= steps;
  diag.approx_kl /= steps;
  diag.entropy /= steps;
  diag.clip_fraction /= steps;
  diag.policy_loss /= double(batches);
  diag.value_loss /= double(batches);
  return diag;
}

}  // namespace qsteer::ppo
