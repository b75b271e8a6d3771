#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "optionlab/linalg.hpp"
#include "optionlab/mdp.hpp"
#include "optionlab/rng.hpp"
#include "optionlab/trpo.hpp"

namespace optionlab {

/// Gating logits over k options plus k option policies; options run for a
/// fixed duration tau. The induced flat policy is the mixture
/// pi(a|s) = sum_o pi_g(o|s) pi(a|s,o).
struct HierarchicalPolicy {
  Mat gating_logits;  // n_states x k
  std::vector<TabularSoftmaxPolicy> options;
  int tau = 1;

  int k() const { return static_cast<int>(options.size()); }
  int n_states() const { return static_cast<int>(gating_logits.rows()); }
  int n_actions() const { return options.empty() ? 0 : options.front().n_actions(); }

  Vec gate_probs(int s) const { return softmax(gating_logits.row(s).transpose()); }

  Vec mixture_probs(int s) const {
    const Vec gate = gate_probs(s);
    Vec mix = Vec::Zero(n_actions());
    for (int o = 0; o < k(); ++o) mix += gate[o] * options[o].probs(s);
    return mix;
  }

  double action_prob(int s, int a) const {
    if (s < 0 || s >= n_states() || a < 0 || a >= n_actions())
      throw std::invalid_argument("action_prob: index out of range");
    return mixture_probs(s)[a];
  }

  void validate() const {
    if (options.empty()) throw std::invalid_argument("HierarchicalPolicy: no options");
    if (gating_logits.cols() != k())
      throw std::invalid_argument("HierarchicalPolicy: gate width != option count");
    for (const auto& opt : options)
      if (opt.n_states() != n_states() || opt.n_actions() != options.front().n_actions())
        throw std::invalid_argument("HierarchicalPolicy: option shape mismatch");
    if (tau < 1) throw std::invalid_argument("HierarchicalPolicy: tau must be >= 1");
  }

  static HierarchicalPolicy uniform(int n_states, int n_actions, int k, int tau) {
    HierarchicalPolicy hp;
    hp.gating_logits = Mat::Zero(n_states, k);
    hp.options.assign(k, TabularSoftmaxPolicy::uniform(n_states, n_actions));
    hp.tau = tau;
    hp.validate();
    return hp;
  }
};

struct OptionStep {
  int state;
  int action;
  double reward;
  int next;
  int option;
  int step_in_option;  // 0 on the step right after an option draw
  bool done;
};

struct OptionTrajectory {
  std::vector<OptionStep> steps;
  int start_state = 0;
};

/// Samples one episode under the hierarchy: an option is drawn from the
/// gate at t = 0 and every tau steps after; in between, actions follow the
/// active option. With a single option the gate draw is a point mass and
/// consumes no randomness.
inline OptionTrajectory sample_with_options(const Mdp& mdp, const HierarchicalPolicy& hp,
                                            int horizon, Rng& rng) {
  OptionTrajectory traj;
  int s = rng.categorical(mdp.rho0());
  traj.start_state = s;
  int option = 0;
  int step_in_option = 0;
  for (int t = 0; t < horizon; ++t) {
    if (mdp.is_terminal(s)) break;
    if (t % hp.tau == 0) {
      option = hp.k() == 1 ? 0 : rng.categorical(hp.gate_probs(s));
      step_in_option = 0;
    }
    const int a = rng.categorical(hp.options[option].probs(s));
    const int next = sample_next_state(mdp, s, a, rng);
    traj.steps.push_back(
        {s, a, mdp.reward(s, a), next, option, step_in_option, mdp.is_terminal(next)});
    ++step_in_option;
    s = next;
    if (mdp.is_terminal(s)) break;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Empirical mutual information (RIM estimator)

struct MiResult {
  double i_hat = 0.0;
  double h_o = 0.0;          // entropy of the responsibility marginal
  double h_o_given_x = 0.0;  // mean responsibility entropy
  Mat responsibilities;      // one row per sample
  Vec marginal;              // p_hat(o)
};

/// Responsibilities p(o|s,a) = pi(a|s,o) pi_g(o|s) / p(a|s) for each
/// sample, the marginal p_hat, and I_hat = H(O) - H(O|X). Always lands in
/// [0, log k] up to rounding.
inline MiResult empirical_mi(const HierarchicalPolicy& hp,
                             const std::vector<std::pair<int, int>>& samples) {
  if (samples.empty()) throw std::invalid_argument("empirical_mi: no samples");
  const int k = hp.k();
  const int n = static_cast<int>(samples.size());
  MiResult out;
  out.responsibilities.resize(n, k);
  out.marginal = Vec::Zero(k);
  for (int i = 0; i < n; ++i) {
    const auto [s, a] = samples[i];
    Vec joint(k);
    const Vec gate = hp.gate_probs(s);
    for (int o = 0; o < k; ++o) joint[o] = gate[o] * hp.options[o].probs(s)[a];
    const double mass = joint.sum();
    if (mass <= 0.0)
      throw std::domain_error("empirical_mi: zero mixture probability at a sampled action");
    out.responsibilities.row(i) = (joint / mass).transpose();
    out.marginal += out.responsibilities.row(i).transpose();
  }
  out.marginal /= static_cast<double>(n);

  auto entropy_term = [](double p) { return p > 0.0 ? -p * std::log(p) : 0.0; };
  for (int o = 0; o < k; ++o) out.h_o += entropy_term(out.marginal[o]);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < k; ++o) out.h_o_given_x += entropy_term(out.responsibilities(i, o));
  out.h_o_given_x /= static_cast<double>(n);
  out.i_hat = out.h_o - out.h_o_given_x;
  return out;
}

/// d I_hat / d gating_logits (same shape as the gate table).
inline Mat mi_gradient_gate(const HierarchicalPolicy& hp,
                            const std::vector<std::pair<int, int>>& samples,
                            const MiResult& mi) {
  const int k = hp.k();
  const int n = static_cast<int>(samples.size());
  Mat grad = Mat::Zero(hp.n_states(), k);
  for (int i = 0; i < n; ++i) {
    const int s = samples[i].first;
    Vec c(k);
    for (int o = 0; o < k; ++o) {
      const double r = mi.responsibilities(i, o);
      c[o] = r > 0.0 ? (std::log(r) - std::log(mi.marginal[o])) / n : 0.0;
    }
    const double c_bar = c.dot(mi.responsibilities.row(i).transpose());
    for (int o = 0; o < k; ++o)
      grad(s, o) += mi.responsibilities(i, o) * (c[o] - c_bar);
  }
  return grad;
}

/// d I_hat / d option_m_logits.
inline Mat mi_gradient_option(const HierarchicalPolicy& hp,
                              const std::vector<std::pair<int, int>>& samples,
                              const MiResult& mi, int m) {
  const int k = hp.k();
  const int n = static_cast<int>(samples.size());
  Mat grad = Mat::Zero(hp.n_states(), hp.n_actions());
  for (int i = 0; i < n; ++i) {
    const auto [s, a] = samples[i];
    Vec c(k);
    for (int o = 0; o < k; ++o) {
      const double r = mi.responsibilities(i, o);
      c[o] = r > 0.0 ? (std::log(r) - std::log(mi.marginal[o])) / n : 0.0;
    }
    const double c_bar = c.dot(mi.responsibilities.row(i).transpose());
    const double coeff = mi.responsibilities(i, m) * (c[m] - c_bar);
    const Vec p = hp.options[m].probs(s);
    for (int b = 0; b < hp.n_actions(); ++b)
      grad(s, b) += coeff * ((b == a ? 1.0 : 0.0) - p[b]);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Hierarchical KL bound

struct HierarchicalKlBound {
  double lhs;          // KL(mixture_q || mixture_p) at the state
  double gate_term;    // KL(gate_q || gate_p)
  double option_term;  // sum_o gate_q(o|s) KL(option_q || option_p)
};

/// Evaluates both sides of the mixture KL bound at one state and verifies
/// the conditional-KL chain identity on the joint (a, o) distribution.
/// The bound lhs <= gate_term + option_term holds for any pair with q
/// absolutely continuous w.r.t. p.
inline HierarchicalKlBound hierarchical_kl_bound(const HierarchicalPolicy& p,
                                                 const HierarchicalPolicy& q, int s) {
  if (p.k() != q.k() || p.n_actions() != q.n_actions())
    throw std::invalid_argument("hierarchical_kl_bound: shape mismatch");
  HierarchicalKlBound out{};
  out.lhs = kl_divergence(q.mixture_probs(s), p.mixture_probs(s));
  const Vec gate_q = q.gate_probs(s);
  const Vec gate_p = p.gate_probs(s);
  out.gate_term = kl_divergence(gate_q, gate_p);
  out.option_term = 0.0;
  for (int o = 0; o < p.k(); ++o)
    out.option_term += gate_q[o] * kl_divergence(q.options[o].probs(s), p.options[o].probs(s));

  // Chain rule on the joint: KL(q||p) = KL(q_O||p_O) + sum_o q_O(o) KL(q(.|o)||p(.|o)).
  double joint_kl = 0.0;
  for (int o = 0; o < p.k(); ++o) {
    const Vec qa = q.options[o].probs(s);
    const Vec pa = p.options[o].probs(s);
    for (int a = 0; a < p.n_actions(); ++a) {
      const double qj = gate_q[o] * qa[a];
      if (qj <= 0.0) continue;
      const double pj = gate_p[o] * pa[a];
      if (pj <= 0.0) throw std::domain_error("hierarchical_kl_bound: support violation");
      joint_kl += qj * std::log(qj / pj);
    }
  }
  const double chain = out.gate_term + out.option_term;
  if (std::abs(joint_kl - chain) > 1e-10 * std::max(1.0, std::abs(joint_kl)))
    throw std::runtime_error("hierarchical_kl_bound: chain identity violated (internal fault)");
  return out;
}

/// Distribution over options proportional to exp(advantage); invariant
/// under shifting all advantages by a constant.
inline Vec softmax_advantage_gating(const Vec& option_advantages) {
  if (!option_advantages.allFinite())
    throw std::invalid_argument("softmax_advantage_gating: non-finite advantage");
  return softmax(option_advantages);
}

// ---------------------------------------------------------------------------
// TRHPO step

struct TrhpoDiagnostics {
  double mean_return = 0.0;
  double objective_before = 0.0;
  double objective_after = 0.0;
  double i_hat_before = 0.0;
  double i_hat_after = 0.0;
  bool gate_accepted = false;
  double gate_kl = 0.0;
  int gate_backtracks = 0;
  std::vector<char> option_accepted;
  std::vector<double> option_kls;
  Vec option_usage;       // fraction of batch steps per option
  double usage_entropy = 0.0;
};

/// One TRHPO iteration: sample with options, estimate advantages, then a
/// trust-region update of the gate (gate mean KL <= delta) followed by one
/// per option in index order (gate-weighted option KL <= delta, adaptive
/// bounds). The running objective surrogate + lambda * I_hat is
/// re-evaluated after every sub-update; a sub-update that does not improve
/// it is rejected. Options update only from the steps they generated; the
/// gate sees all steps. Advantage estimates stay fixed across sub-updates,
/// policy ratios are re-evaluated.
inline TrhpoDiagnostics trhpo_step(const Mdp& mdp, HierarchicalPolicy& hp,
                                   const TrpoConfig& cfg, double lambda_mi, Rng& rng,
                                   bool subtract_mi = false) {
  cfg.validate();
  hp.validate();
  if (lambda_mi < 0.0) throw std::invalid_argument("trhpo_step: lambda must be >= 0");
  const double signed_lambda = subtract_mi ? -lambda_mi : lambda_mi;
  const int n_actions = mdp.n_actions();
  const int k = hp.k();

  // --- sample
  std::vector<int> states, actions, options;
  std::vector<double> returns;
  TrhpoDiagnostics diag;
  diag.option_usage = Vec::Zero(k);
  for (int rollout = 0; rollout < cfg.rollouts; ++rollout) {
    const OptionTrajectory traj = sample_with_options(mdp, hp, cfg.horizon, rng);
    double undiscounted = 0.0;
    for (const auto& s : traj.steps) undiscounted += s.reward;
    diag.mean_return += undiscounted;
    double g = 0.0;
    std::vector<double> togo(traj.steps.size());
    for (int t = static_cast<int>(traj.steps.size()) - 1; t >= 0; --t) {
      g = traj.steps[t].reward + cfg.gamma * g;
      togo[t] = g;
    }
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      states.push_back(traj.steps[t].state);
      actions.push_back(traj.steps[t].action);
      options.push_back(traj.steps[t].option);
      returns.push_back(togo[t]);
      diag.option_usage[traj.steps[t].option] += 1.0;
    }
  }
  diag.mean_return /= static_cast<double>(cfg.rollouts);
  if (states.empty()) return diag;
  const int n = static_cast<int>(states.size());
  diag.option_usage /= static_cast<double>(n);
  for (int o = 0; o < k; ++o)
    if (diag.option_usage[o] > 0.0)
      diag.usage_entropy -= diag.option_usage[o] * std::log(diag.option_usage[o]);

  const std::vector<double> adv =
      advantages_from_returns(states, returns, mdp.n_states(), cfg.normalize_advantages);
  std::vector<std::pair<int, int>> mi_samples(n);
  for (int i = 0; i < n; ++i) mi_samples[i] = {states[i], actions[i]};

  std::vector<double> behavior_mix(n);
  for (int i = 0; i < n; ++i) behavior_mix[i] = hp.mixture_probs(states[i])[actions[i]];
  const double w = 1.0 / static_cast<double>(n);
  std::vector<double> state_weight(mdp.n_states(), 0.0);
  for (int i = 0; i < n; ++i) state_weight[states[i]] += w;

  // --- running objective: mixture-ratio surrogate + lambda * I_hat
  auto objective_of = [&](const HierarchicalPolicy& candidate) {
    double surrogate = 0.0;
    for (int i = 0; i < n; ++i) {
      if (behavior_mix[i] <= 0.0)
        throw std::invalid_argument("trhpo_step: nonpositive behavior probability");
      surrogate +=
          w * (candidate.mixture_probs(states[i])[actions[i]] / behavior_mix[i]) * adv[i];
    }
    return surrogate + signed_lambda * empirical_mi(candidate, mi_samples).i_hat;
  };

  diag.i_hat_before = empirical_mi(hp, mi_samples).i_hat;
  double running = objective_of(hp);
  diag.objective_before = running;

  // Row-major flattening (state-major blocks), matching the flat TRPO
  // layout so the k = 1 hierarchy reproduces trpo_step float-for-float.
  auto flatten = [](const Mat& m) {
    Vec v(m.size());
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) v[static_cast<Eigen::Index>(r) * m.cols() + c] = m(r, c);
    return v;
  };
  auto add_flat = [](Mat& m, const Vec& step) {
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) m(r, c) += step[static_cast<Eigen::Index>(r) * m.cols() + c];
  };

  // --- gate update
  {
    const HierarchicalPolicy before = hp;
    const MiResult mi = empirical_mi(before, mi_samples);
    Mat grad = Mat::Zero(hp.n_states(), k);
    for (int i = 0; i < n; ++i) {
      const int s = states[i];
      const Vec gate = before.gate_probs(s);
      const Vec mix = before.mixture_probs(s);
      const double coeff = w * adv[i] / behavior_mix[i];
      for (int o = 0; o < k; ++o)
        grad(s, o) += coeff * gate[o] * (before.options[o].probs(s)[actions[i]] - mix[actions[i]]);
    }
    grad += signed_lambda * mi_gradient_gate(before, mi_samples, mi);
    const TabularSoftmaxPolicy gate_as_policy{before.gating_logits};

    TrustRegionProblem problem;
    problem.gradient = flatten(grad);
    problem.fisher_vp = [&](const Vec& v) {
      return fisher_vector_product(state_weight, gate_as_policy, v, cfg.damping);
    };
    auto candidate_with = [&](const Vec& step) {
      HierarchicalPolicy cand = before;
      add_flat(cand.gating_logits, step);
      return cand;
    };
    problem.objective_delta = [&](const Vec& step) {
      return objective_of(candidate_with(step)) - running;
    };
    problem.constraint_kl = [&](const Vec& step) {
      const HierarchicalPolicy cand = candidate_with(step);
      double kl = 0.0;
      for (int s = 0; s < mdp.n_states(); ++s)
        if (state_weight[s] > 0.0)
          kl += state_weight[s] * kl_divergence(before.gate_probs(s), cand.gate_probs(s));
      return kl;
    };
    problem.delta = cfg.delta;
    problem.backtrack_ratio = cfg.backtrack_ratio;
    problem.max_backtracks = cfg.max_backtracks;
    problem.cg_iters = cfg.cg_iters;
    problem.cg_tol = cfg.cg_tol;

    const TrustRegionOutcome outcome = trust_region_update(problem);
    diag.gate_accepted = outcome.accepted;
    diag.gate_kl = outcome.kl;
    diag.gate_backtracks = outcome.backtracks;
    if (outcome.accepted) {
      hp = candidate_with(outcome.step);
      running += outcome.improvement;
    }
  }

  // --- option updates, index order
  diag.option_accepted.assign(k, 0);
  diag.option_kls.assign(k, 0.0);
  for (int m = 0; m < k; ++m) {
    const HierarchicalPolicy before = hp;
    const MiResult mi = empirical_mi(before, mi_samples);

    long own = 0;
    for (int i = 0; i < n; ++i)
      if (options[i] == m) ++own;
    Mat grad = Mat::Zero(hp.n_states(), n_actions);
    if (own > 0) {
      const double w_own = 1.0 / static_cast<double>(own);
      for (int i = 0; i < n; ++i) {
        if (options[i] != m) continue;
        const Vec p = before.options[m].probs(states[i]);
        const double coeff = w_own * adv[i];
        for (int a = 0; a < n_actions; ++a)
          grad(states[i], a) += coeff * ((a == actions[i] ? 1.0 : 0.0) - p[a]);
      }
    }
    grad += signed_lambda * mi_gradient_option(before, mi_samples, mi, m);

    // adaptive bound: gate-probability-weighted option KL
    std::vector<double> option_weight(mdp.n_states(), 0.0);
    for (int s = 0; s < mdp.n_states(); ++s)
      if (state_weight[s] > 0.0) option_weight[s] = state_weight[s] * before.gate_probs(s)[m];

    TrustRegionProblem problem;
    problem.gradient = flatten(grad);
    problem.fisher_vp = [&](const Vec& v) {
      return fisher_vector_product(option_weight, before.options[m], v, cfg.damping);
    };
    auto candidate_with = [&](const Vec& step) {
      HierarchicalPolicy cand = before;
      add_flat(cand.options[m].logits, step);
      return cand;
    };
    problem.objective_delta = [&](const Vec& step) {
      return objective_of(candidate_with(step)) - running;
    };
    problem.constraint_kl = [&](const Vec& step) {
      const HierarchicalPolicy cand = candidate_with(step);
      double kl = 0.0;
      for (int s = 0; s < mdp.n_states(); ++s)
        if (option_weight[s] > 0.0)
          kl += option_weight[s] *
                kl_divergence(before.options[m].probs(s), cand.options[m].probs(s));
      return kl;
    };
    problem.delta = cfg.delta;
    problem.backtrack_ratio = cfg.backtrack_ratio;
    problem.max_backtracks = cfg.max_backtracks;
    problem.cg_iters = cfg.cg_iters;
    problem.cg_tol = cfg.cg_tol;

    const TrustRegionOutcome outcome = trust_region_update(problem);
    diag.option_accepted[m] = outcome.accepted ? 1 : 0;
    diag.option_kls[m] = outcome.kl;
    if (outcome.accepted) {
      hp = candidate_with(outcome.step);
      running += outcome.improvement;
    }
  }

  diag.objective_after = running;
  diag.i_hat_after = empirical_mi(hp, mi_samples).i_hat;
  return diag;
}

}  // namespace optionlab
