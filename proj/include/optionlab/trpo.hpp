#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "optionlab/linalg.hpp"
#include "optionlab/mdp.hpp"
#include "optionlab/rng.hpp"

namespace optionlab {

struct TrpoConfig {
  double delta = 0.01;          // mean-KL trust radius
  int cg_iters = 10;
  double cg_tol = 1e-10;
  double damping = 1e-8;        // absorbs the softmax shift nullspace
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;
  int rollouts = 20;            // N trajectories per iteration
  int horizon = 256;
  double gamma = 0.99;
  bool normalize_advantages = true;

  void validate() const {
    if (delta <= 0.0 || cg_iters <= 0 || cg_tol <= 0.0 || damping <= 0.0 ||
        rollouts <= 0 || horizon <= 0 || max_backtracks <= 0)
      throw std::invalid_argument("TrpoConfig: all fields must be positive");
    if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0))
      throw std::invalid_argument("TrpoConfig: backtrack_ratio must lie in (0,1)");
  }
};

/// One importance-sampling unit: a visited (s,a) with its advantage
/// estimate, the behavior policy's probability of a at s, and a batch
/// weight (weights sum to 1).
struct BatchSample {
  int state;
  int action;
  double advantage;
  double behavior_prob;
  double weight;
};

struct RolloutBatch {
  std::vector<BatchSample> samples;
  std::vector<double> episode_returns;      // undiscounted, per episode
  std::vector<double> state_weight;         // summed sample weight per state
};

inline void finalize_state_weights(RolloutBatch& batch, int n_states) {
  batch.state_weight.assign(n_states, 0.0);
  for (const auto& s : batch.samples) {
    if (s.behavior_prob <= 0.0)
      throw std::invalid_argument("rollout batch: nonpositive behavior probability");
    batch.state_weight[s.state] += s.weight;
  }
}

/// Discounted returns-to-go minus a per-state least-squares baseline
/// (tabular indicators make that baseline the per-state mean), then
/// optional batch normalization to zero mean / unit variance.
inline std::vector<double> advantages_from_returns(const std::vector<int>& states,
                                                   const std::vector<double>& returns,
                                                   int n_states, bool normalize) {
  std::vector<double> sum(n_states, 0.0);
  std::vector<int> count(n_states, 0);
  for (std::size_t i = 0; i < states.size(); ++i) {
    sum[states[i]] += returns[i];
    ++count[states[i]];
  }
  std::vector<double> adv(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    adv[i] = returns[i] - sum[states[i]] / count[states[i]];
  if (normalize && !adv.empty()) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(adv.size());
    const double scale = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
    for (double& a : adv) a = (a - mean) / scale;
  }
  return adv;
}

/// Samples N rollouts and assembles the batch (uniform sample weights).
inline RolloutBatch collect_rollouts(const Mdp& mdp, const TabularSoftmaxPolicy& policy,
                                     const TrpoConfig& cfg, Rng& rng) {
  RolloutBatch batch;
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> returns;
  for (int rollout = 0; rollout < cfg.rollouts; ++rollout) {
    const Episode ep = sample_episode(mdp, policy, cfg.horizon, rng);
    double undiscounted = 0.0;
    for (const auto& s : ep.steps) undiscounted += s.reward;
    batch.episode_returns.push_back(undiscounted);
    // returns-to-go, discounted inside the episode
    double g = 0.0;
    std::vector<double> togo(ep.steps.size());
    for (int t = static_cast<int>(ep.steps.size()) - 1; t >= 0; --t) {
      g = ep.steps[t].reward + cfg.gamma * g;
      togo[t] = g;
    }
    for (std::size_t t = 0; t < ep.steps.size(); ++t) {
      states.push_back(ep.steps[t].state);
      actions.push_back(ep.steps[t].action);
      returns.push_back(togo[t]);
    }
  }
  const std::vector<double> adv =
      advantages_from_returns(states, returns, mdp.n_states(), cfg.normalize_advantages);
  const double w = states.empty() ? 0.0 : 1.0 / static_cast<double>(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double behavior = policy.probs(states[i])[actions[i]];
    batch.samples.push_back({states[i], actions[i], adv[i], behavior, w});
  }
  finalize_state_weights(batch, mdp.n_states());
  return batch;
}

/// Exact-advantage batch: every (s,a) pair weighted by the normalized
/// discounted density times the policy, advantages from the exact solver.
/// No sampling, no normalization; the surrogate becomes the exact L.
inline RolloutBatch exact_batch(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  RolloutBatch batch;
  const ExactValues values = exact_value(mdp, policy);
  const Vec rho = discounted_density(mdp, policy);
  const double mass = rho.sum();
  for (int s = 0; s < mdp.n_states(); ++s) {
    const Vec pi = policy.probs(s);
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double w = (rho[s] / mass) * pi[a];
      if (w <= 0.0) continue;
      batch.samples.push_back({s, a, values.a(s, a), pi[a], w});
    }
  }
  finalize_state_weights(batch, mdp.n_states());
  return batch;
}

// ---------------------------------------------------------------------------
// Surrogate, KL, Fisher

/// L(theta) = sum_i w_i [pi_theta(a_i|s_i)/behavior_i] A_i and the
/// sample-weighted mean KL(pi_old(.|s) || pi_theta(.|s)). At theta_old the
/// ratio is one and the KL is zero.
inline std::pair<double, double> surrogate_and_kl(const RolloutBatch& batch,
                                                  const TabularSoftmaxPolicy& policy_old,
                                                  const TabularSoftmaxPolicy& policy_new) {
  double surrogate = 0.0;
  for (const auto& s : batch.samples) {
    if (s.behavior_prob <= 0.0)
      throw std::invalid_argument("surrogate: nonpositive behavior probability");
    surrogate += s.weight * (policy_new.probs(s.state)[s.action] / s.behavior_prob) * s.advantage;
  }
  double mean_kl = 0.0;
  for (int s = 0; s < static_cast<int>(batch.state_weight.size()); ++s) {
    if (batch.state_weight[s] == 0.0) continue;
    mean_kl += batch.state_weight[s] * kl_divergence(policy_old.probs(s), policy_new.probs(s));
  }
  return {surrogate, mean_kl};
}

/// Gradient of the surrogate at theta_old, flattened row-major (one row of
/// n_actions per state).
inline Vec surrogate_gradient(const RolloutBatch& batch, const TabularSoftmaxPolicy& policy_old) {
  const int n_actions = policy_old.n_actions();
  Vec grad = Vec::Zero(static_cast<Eigen::Index>(policy_old.n_states()) * n_actions);
  for (const auto& s : batch.samples) {
    const Vec p = policy_old.probs(s.state);
    const double coeff = s.weight * s.advantage;
    for (int a = 0; a < n_actions; ++a) {
      const double indicator = (a == s.action) ? 1.0 : 0.0;
      grad[static_cast<Eigen::Index>(s.state) * n_actions + a] += coeff * (indicator - p[a]);
    }
  }
  return grad;
}

/// Fisher-vector product of a state-weighted mean KL at theta_old:
/// per-state blocks (diag(p) - p p^T) scaled by the weight, plus
/// damping * v. Symmetric positive semidefinite by construction. The
/// vector layout is row-major over (state, action).
inline Vec fisher_vector_product(const std::vector<double>& state_weight,
                                 const TabularSoftmaxPolicy& policy_old, const Vec& v,
                                 double damping) {
  const int n_actions = policy_old.n_actions();
  const Eigen::Index dim = static_cast<Eigen::Index>(policy_old.n_states()) * n_actions;
  if (v.size() != dim) throw std::invalid_argument("fisher_vector_product: shape mismatch");
  Vec out = damping * v;
  for (int s = 0; s < static_cast<int>(state_weight.size()); ++s) {
    const double w = state_weight[s];
    if (w == 0.0) continue;
    const Vec p = policy_old.probs(s);
    const auto block = v.segment(static_cast<Eigen::Index>(s) * n_actions, n_actions);
    const double p_dot_v = p.dot(block);
    for (int a = 0; a < n_actions; ++a)
      out[static_cast<Eigen::Index>(s) * n_actions + a] += w * p[a] * (block[a] - p_dot_v);
  }
  return out;
}

inline Vec fisher_vector_product(const RolloutBatch& batch, const TabularSoftmaxPolicy& policy_old,
                                 const Vec& v, double damping) {
  return fisher_vector_product(batch.state_weight, policy_old, v, damping);
}

// ---------------------------------------------------------------------------
// Generic trust-region update (shared by the flat and hierarchical loops)

struct TrustRegionProblem {
  Vec gradient;                                        // ascent direction source
  std::function<Vec(const Vec&)> fisher_vp;            // damped FVP
  std::function<double(const Vec&)> objective_delta;   // objective(theta_old + step) - objective(theta_old)
  std::function<double(const Vec&)> constraint_kl;     // mean KL of the candidate step
  double delta = 0.01;
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;
  int cg_iters = 10;
  double cg_tol = 1e-10;
};

struct TrustRegionOutcome {
  bool accepted = false;
  Vec step;                 // applied step (zero when rejected)
  double beta = 0.0;        // maximal step scale sqrt(2 delta / s^T A s)
  int backtracks = 0;
  double improvement = 0.0;
  double kl = 0.0;
};

/// Natural-gradient step with exponential backtracking: solve A s = g by
/// conjugate gradient, scale by beta = sqrt(2 delta / s^T A s), then shrink
/// until the objective improves and the KL stays within delta. Leaves the
/// parameters untouched when every backtrack fails.
inline TrustRegionOutcome trust_region_update(const TrustRegionProblem& problem) {
  TrustRegionOutcome out;
  const double grad_norm = problem.gradient.norm();
  if (!(grad_norm > 0.0)) {
    out.step = Vec::Zero(problem.gradient.size());
    return out;  // nothing to ascend
  }
  const Vec direction = conjugate_gradient(problem.fisher_vp, problem.gradient,
                                           problem.cg_iters, problem.cg_tol);
  const double s_a_s = direction.dot(problem.fisher_vp(direction));
  if (s_a_s <= 0.0)
    throw std::runtime_error("trust_region_update: s^T A s <= 0 after damping (internal fault)");
  out.beta = std::sqrt(2.0 * problem.delta / s_a_s);

  double scale = out.beta;
  for (int attempt = 0; attempt <= problem.max_backtracks; ++attempt) {
    const Vec step = scale * direction;
    const double gain = problem.objective_delta(step);
    const double kl = problem.constraint_kl(step);
    if (gain > 0.0 && kl <= problem.delta) {
      out.accepted = true;
      out.step = step;
      out.backtracks = attempt;
      out.improvement = gain;
      out.kl = kl;
      return out;
    }
    scale *= problem.backtrack_ratio;
  }
  out.step = Vec::Zero(problem.gradient.size());
  out.backtracks = problem.max_backtracks + 1;
  return out;
}

// ---------------------------------------------------------------------------
// Flat TRPO step

struct TrpoDiagnostics {
  double mean_return = 0.0;       // undiscounted episode mean (sampled mode)
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double kl = 0.0;
  double beta = 0.0;
  int backtracks = 0;
  bool accepted = false;
};

enum class AdvantageMode { sampled, exact };

/// One TRPO iteration on a tabular softmax policy. In exact mode the batch
/// is the full density-weighted (s,a) grid with solver advantages, so the
/// surrogate is the exact first-order objective and no randomness is used.
inline TrpoDiagnostics trpo_step(const Mdp& mdp, TabularSoftmaxPolicy& policy,
                                 const TrpoConfig& cfg, Rng& rng,
                                 AdvantageMode mode = AdvantageMode::sampled) {
  cfg.validate();
  check_shapes(mdp, policy);
  const RolloutBatch batch = mode == AdvantageMode::sampled
                                 ? collect_rollouts(mdp, policy, cfg, rng)
                                 : exact_batch(mdp, policy);
  TrpoDiagnostics diag;
  if (!batch.episode_returns.empty()) {
    double total = 0.0;
    for (double r : batch.episode_returns) total += r;
    diag.mean_return = total / static_cast<double>(batch.episode_returns.size());
  }
  if (batch.samples.empty()) return diag;

  const TabularSoftmaxPolicy policy_old = policy;
  const int n_actions = mdp.n_actions();
  auto with_step = [&](const Vec& step) {
    TabularSoftmaxPolicy candidate = policy_old;
    for (int s = 0; s < mdp.n_states(); ++s)
      for (int a = 0; a < n_actions; ++a)
        candidate.logits(s, a) += step[static_cast<Eigen::Index>(s) * n_actions + a];
    return candidate;
  };

  const double surrogate_0 = surrogate_and_kl(batch, policy_old, policy_old).first;
  diag.surrogate_before = surrogate_0;

  TrustRegionProblem problem;
  problem.gradient = surrogate_gradient(batch, policy_old);
  problem.fisher_vp = [&](const Vec& v) {
    return fisher_vector_product(batch, policy_old, v, cfg.damping);
  };
  problem.objective_delta = [&](const Vec& step) {
    return surrogate_and_kl(batch, policy_old, with_step(step)).first - surrogate_0;
  };
  problem.constraint_kl = [&](const Vec& step) {
    return surrogate_and_kl(batch, policy_old, with_step(step)).second;
  };
  problem.delta = cfg.delta;
  problem.backtrack_ratio = cfg.backtrack_ratio;
  problem.max_backtracks = cfg.max_backtracks;
  problem.cg_iters = cfg.cg_iters;
  problem.cg_tol = cfg.cg_tol;

  const TrustRegionOutcome outcome = trust_region_update(problem);
  diag.accepted = outcome.accepted;
  diag.beta = outcome.beta;
  diag.backtracks = outcome.backtracks;
  diag.kl = outcome.kl;
  diag.surrogate_after = surrogate_0 + outcome.improvement;
  if (outcome.accepted) policy = with_step(outcome.step);
  return diag;
}

}  // namespace optionlab
