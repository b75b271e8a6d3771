#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "optionlab/mdp.hpp"

namespace optionlab {

/// Step-size / exploration / trace-decay knobs for the sampled learners.
/// The default alpha_fn(n) = 1/n has a divergent sum and convergent square
/// sum by construction.
struct LearningSchedule {
  std::function<double(long)> alpha_fn = [](long n) { return 1.0 / static_cast<double>(n); };
  double epsilon = 0.1;
  double lambda = 0.0;
};

/// One synchronous sweep of the optimal Bellman operator T*.
inline Vec bellman_backup(const Mdp& mdp, const Vec& f) {
  if (f.size() != mdp.n_states()) throw std::invalid_argument("bellman_backup: shape");
  Vec out(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      double ev = 0.0;
      for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * f[t.next];
      best = std::max(best, mdp.reward(s, a) + mdp.gamma() * ev);
    }
    out[s] = best;
  }
  return out;
}

/// One synchronous sweep of the policy Bellman operator T_pi.
inline Vec bellman_backup(const Mdp& mdp, const Vec& f, const TabularSoftmaxPolicy& policy) {
  if (f.size() != mdp.n_states()) throw std::invalid_argument("bellman_backup: shape");
  check_shapes(mdp, policy);
  Vec out(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    const Vec pi = policy.probs(s);
    double acc = 0.0;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      if (pi[a] == 0.0) continue;
      double ev = 0.0;
      for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * f[t.next];
      acc += pi[a] * (mdp.reward(s, a) + mdp.gamma() * ev);
    }
    out[s] = acc;
  }
  return out;
}

/// Greedy actions from a value function; ties go to the lowest action index.
inline std::vector<int> greedy_actions(const Mdp& mdp, const Vec& v) {
  std::vector<int> actions(mdp.n_states(), 0);
  for (int s = 0; s < mdp.n_states(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.n_actions(); ++a) {
      double ev = 0.0;
      for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * v[t.next];
      const double q = mdp.reward(s, a) + mdp.gamma() * ev;
      if (q > best) {
        best = q;
        actions[s] = a;
      }
    }
  }
  return actions;
}

struct ValueIterationResult {
  Vec v;
  std::vector<int> greedy;
  TabularSoftmaxPolicy greedy_policy;
  int iterations = 0;
  std::vector<double> sup_deltas;  // per-sweep sup-norm change
};

inline ValueIterationResult value_iteration(const Mdp& mdp, const Vec& v0,
                                            int max_iters = 100000, double tol = 1e-10) {
  if (tol <= 0.0) throw std::invalid_argument("value_iteration: tol must be positive");
  ValueIterationResult out;
  out.v = v0;
  for (int it = 0; it < max_iters; ++it) {
    Vec next = bellman_backup(mdp, out.v);
    const double delta = (next - out.v).cwiseAbs().maxCoeff();
    out.sup_deltas.push_back(delta);
    out.v = std::move(next);
    out.iterations = it + 1;
    if (delta < tol) break;
  }
  out.greedy = greedy_actions(mdp, out.v);
  out.greedy_policy = TabularSoftmaxPolicy::from_actions(out.greedy, mdp.n_actions());
  return out;
}

struct PolicyIterationResult {
  TabularSoftmaxPolicy policy;
  Vec v;
  int iterations = 0;
  std::vector<double> etas;  // expected return after each evaluation
};

/// Exact policy iteration: linear-solve evaluation alternated with greedy
/// improvement, stopping when the policy is stable.
inline PolicyIterationResult policy_iteration(const Mdp& mdp, const TabularSoftmaxPolicy& pi0,
                                              int max_iters = 1000) {
  PolicyIterationResult out;
  out.policy = pi0;
  std::vector<int> current_actions;
  for (int it = 0; it < max_iters; ++it) {
    const ExactValues values = exact_value(mdp, out.policy);
    out.v = values.v;
    out.etas.push_back(mdp.rho0().dot(values.v));
    out.iterations = it + 1;
    std::vector<int> improved(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) {
      int best = 0;
      for (int a = 1; a < mdp.n_actions(); ++a)
        if (values.q(s, a) > values.q(s, best)) best = a;
      improved[s] = best;
    }
    if (it > 0 && improved == current_actions) break;
    current_actions = improved;
    out.policy = TabularSoftmaxPolicy::from_actions(improved, mdp.n_actions());
  }
  return out;
}

// ---------------------------------------------------------------------------
// TD(lambda)

/// Offline forward view: summed per-state increments from lambda-returns
/// built out of explicit n-step returns, with V held fixed. The tail
/// weight collapses onto the final horizon return.
inline Vec lambda_return_increments(const Episode& ep, const Vec& v, double gamma,
                                    double lambda, double alpha) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must lie in [0,1]");
  const int T = static_cast<int>(ep.steps.size());
  Vec delta_v = Vec::Zero(v.size());
  for (int t = 0; t < T; ++t) {
    double running_reward = 0.0;
    double discount = 1.0;
    double weight = 1.0;  // lambda^(n-1)
    double g_lambda = 0.0;
    for (int n = 1; n <= T - t; ++n) {
      running_reward += discount * ep.steps[t + n - 1].reward;
      discount *= gamma;
      const double g_n = running_reward + discount * v[ep.steps[t + n - 1].next];
      if (n < T - t)
        g_lambda += (1.0 - lambda) * weight * g_n;
      else
        g_lambda += weight * g_n;
      weight *= lambda;
    }
    delta_v[ep.steps[t].state] += alpha * (g_lambda - v[ep.steps[t].state]);
  }
  return delta_v;
}

/// Offline backward view: accumulating eligibility traces, increments
/// summed with V held fixed. Agrees with the forward view exactly.
inline Vec eligibility_trace_increments(const Episode& ep, const Vec& v, double gamma,
                                        double lambda, double alpha) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda must lie in [0,1]");
  Vec delta_v = Vec::Zero(v.size());
  Vec trace = Vec::Zero(v.size());
  for (const StepRecord& step : ep.steps) {
    const double td_error = step.reward + gamma * v[step.next] - v[step.state];
    trace[step.state] += 1.0;
    delta_v += alpha * td_error * trace;
    trace *= gamma * lambda;
  }
  return delta_v;
}

/// Online TD(lambda) with accumulating traces. Step sizes follow the
/// schedule per state visit count. Requires an episodic sampler: a
/// positive horizon caps non-terminating trajectories.
inline Vec td_lambda(const Mdp& mdp, const TabularSoftmaxPolicy& policy,
                     const LearningSchedule& schedule, int episodes, int horizon,
                     std::uint64_t seed) {
  if (schedule.lambda < 0.0 || schedule.lambda > 1.0)
    throw std::invalid_argument("td_lambda: lambda must lie in [0,1]");
  if (horizon <= 0)
    throw std::invalid_argument("td_lambda: non-episodic stream needs a horizon cap");
  Rng rng(seed);
  Vec v = Vec::Zero(mdp.n_states());
  std::vector<long> visits(mdp.n_states(), 0);
  // Sparse trace bookkeeping: only touched states are scanned.
  std::vector<double> trace(mdp.n_states(), 0.0);
  std::vector<int> active;
  const double decay = mdp.gamma() * schedule.lambda;
  for (int episode = 0; episode < episodes; ++episode) {
    int s = rng.categorical(mdp.rho0());
    for (int i : active) trace[i] = 0.0;
    active.clear();
    for (int t = 0; t < horizon && !mdp.is_terminal(s); ++t) {
      const int a = rng.categorical(policy.probs(s));
      const int next = sample_next_state(mdp, s, a, rng);
      const double td_error = mdp.reward(s, a) + mdp.gamma() * v[next] - v[s];
      ++visits[s];
      if (trace[s] == 0.0) active.push_back(s);
      trace[s] += 1.0;
      std::size_t keep = 0;
      for (std::size_t idx = 0; idx < active.size(); ++idx) {
        const int i = active[idx];
        v[i] += schedule.alpha_fn(visits[i] > 0 ? visits[i] : 1) * td_error * trace[i];
        trace[i] *= decay;
        if (trace[i] > 1e-12) active[keep++] = i;
        else trace[i] = 0.0;
      }
      active.resize(keep);
      s = next;
    }
  }
  return v;
}

/// Epsilon-greedy draw from a Q row: greedy (lowest-index ties) with
/// probability 1-epsilon, otherwise uniform over all actions.
inline int epsilon_greedy_action(const Vec& q_row, double epsilon, Rng& rng) {
  if (q_row.size() == 0) throw std::invalid_argument("epsilon_greedy: empty action set");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon_greedy: epsilon must lie in [0,1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon)
    return rng.uniform_int(static_cast<int>(q_row.size()));
  int best = 0;
  for (int a = 1; a < q_row.size(); ++a)
    if (q_row[a] > q_row[best]) best = a;
  return best;
}

}  // namespace optionlab
