#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "optionlab/linalg.hpp"
#include "optionlab/rng.hpp"

#include "json.hpp"

namespace optionlab {

struct Transition {
  int next;
  double prob;
};

/// Finite MDP: sparse transition rows per (state, action), deterministic
/// reward table r(s,a), discount in (0,1), initial state distribution.
/// Treat instances as frozen once validate() has passed; all solver
/// entry points are pure functions of a const Mdp.
class Mdp {
 public:
  Mdp(int n_states, int n_actions, double gamma)
      : n_states_(n_states),
        n_actions_(n_actions),
        gamma_(gamma),
        rows_(static_cast<std::size_t>(n_states) * n_actions),
        reward_(Mat::Zero(n_states, n_actions)),
        rho0_(Vec::Constant(n_states, 1.0 / n_states)),
        terminal_(n_states, false) {
    if (n_states <= 0 || n_actions <= 0)
      throw std::invalid_argument("Mdp: counts must be positive");
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("Mdp: gamma must lie strictly in (0,1)");
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  const Vec& rho0() const { return rho0_; }
  double reward(int s, int a) const { return reward_(s, a); }
  const Mat& reward_table() const { return reward_; }
  bool is_terminal(int s) const { return terminal_[s]; }
  const std::vector<Transition>& transition_row(int s, int a) const {
    return rows_[static_cast<std::size_t>(s) * n_actions_ + a];
  }

  void set_transition_row(int s, int a, std::vector<Transition> row) {
    rows_[static_cast<std::size_t>(s) * n_actions_ + a] = std::move(row);
  }
  void add_transition(int s, int a, int next, double prob) {
    rows_[static_cast<std::size_t>(s) * n_actions_ + a].push_back({next, prob});
  }
  void set_reward(int s, int a, double r) { reward_(s, a) = r; }
  void set_rho0(Vec rho0) { rho0_ = std::move(rho0); }
  void set_terminal(int s, bool flag = true) { terminal_[s] = flag; }

  /// Checks row-stochasticity, nonnegativity, rho0 mass, finite rewards.
  void validate() const {
    for (int s = 0; s < n_states_; ++s) {
      for (int a = 0; a < n_actions_; ++a) {
        const auto& row = transition_row(s, a);
        if (row.empty())
          throw std::invalid_argument("Mdp: missing transition row at (" +
                                      std::to_string(s) + "," + std::to_string(a) + ")");
        double total = 0.0;
        for (const auto& t : row) {
          if (t.next < 0 || t.next >= n_states_)
            throw std::invalid_argument("Mdp: successor index out of range");
          if (t.prob < 0.0)
            throw std::invalid_argument("Mdp: negative transition probability");
          total += t.prob;
        }
        if (std::abs(total - 1.0) > 1e-12)
          throw std::invalid_argument("Mdp: transition row does not sum to 1");
        if (!std::isfinite(reward_(s, a)))
          throw std::invalid_argument("Mdp: non-finite reward");
      }
    }
    if (rho0_.size() != n_states_)
      throw std::invalid_argument("Mdp: rho0 size mismatch");
    if (rho0_.minCoeff() < 0.0 || std::abs(rho0_.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("Mdp: rho0 is not a distribution");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_states"] = n_states_;
    j["n_actions"] = n_actions_;
    j["gamma"] = gamma_;
    j["rho0"] = std::vector<double>(rho0_.data(), rho0_.data() + rho0_.size());
    std::vector<std::vector<double>> rewards(n_states_);
    for (int s = 0; s < n_states_; ++s)
      for (int a = 0; a < n_actions_; ++a) rewards[s].push_back(reward_(s, a));
    j["rewards"] = rewards;
    nlohmann::json triplets = nlohmann::json::array();
    for (int s = 0; s < n_states_; ++s)
      for (int a = 0; a < n_actions_; ++a)
        for (const auto& t : transition_row(s, a))
          triplets.push_back({s, a, t.next, t.prob});
    j["transitions"] = triplets;
    std::vector<int> terminals;
    for (int s = 0; s < n_states_; ++s)
      if (terminal_[s]) terminals.push_back(s);
    j["terminal"] = terminals;
    return j;
  }

  static Mdp from_json(const nlohmann::json& j) {
    Mdp mdp(j.at("n_states").get<int>(), j.at("n_actions").get<int>(),
            j.at("gamma").get<double>());
    const auto rho = j.at("rho0").get<std::vector<double>>();
    if (static_cast<int>(rho.size()) != mdp.n_states())
      throw std::invalid_argument("Mdp json: rho0 size mismatch");
    Vec rho0(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) rho0[s] = rho[s];
    mdp.set_rho0(rho0);
    const auto rewards = j.at("rewards").get<std::vector<std::vector<double>>>();
    for (int s = 0; s < mdp.n_states(); ++s)
      for (int a = 0; a < mdp.n_actions(); ++a) mdp.set_reward(s, a, rewards.at(s).at(a));
    for (const auto& t : j.at("transitions"))
      mdp.add_transition(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>(),
                         t.at(3).get<double>());
    for (int s : j.at("terminal").get<std::vector<int>>()) mdp.set_terminal(s);
    mdp.validate();
    return mdp;
  }

 private:
  int n_states_;
  int n_actions_;
  double gamma_;
  std::vector<std::vector<Transition>> rows_;
  Mat reward_;
  Vec rho0_;
  std::vector<bool> terminal_;
};

/// Per-state action logits; rows induce softmax distributions. Adding a
/// constant to a logit row leaves the induced probabilities unchanged.
struct TabularSoftmaxPolicy {
  Mat logits;  // n_states x n_actions

  int n_states() const { return static_cast<int>(logits.rows()); }
  int n_actions() const { return static_cast<int>(logits.cols()); }

  Vec probs(int s) const { return softmax(logits.row(s).transpose()); }

  Mat prob_table() const {
    Mat p(logits.rows(), logits.cols());
    for (int s = 0; s < logits.rows(); ++s) p.row(s) = probs(s).transpose();
    return p;
  }

  static TabularSoftmaxPolicy uniform(int n_states, int n_actions) {
    return {Mat::Zero(n_states, n_actions)};
  }

  /// Deterministic policy encoded in the softmax type: the chosen action's
  /// logit is 0, all others are pushed below double underflow.
  static TabularSoftmaxPolicy from_actions(const std::vector<int>& actions,
                                           int n_actions) {
    Mat logits = Mat::Constant(static_cast<int>(actions.size()), n_actions, -1000.0);
    for (std::size_t s = 0; s < actions.size(); ++s) logits(static_cast<int>(s), actions[s]) = 0.0;
    return {logits};
  }

  std::vector<int> greedy_actions() const {
    std::vector<int> out(n_states());
    for (int s = 0; s < n_states(); ++s) {
      int best = 0;
      for (int a = 1; a < n_actions(); ++a)
        if (logits(s, a) > logits(s, best)) best = a;
      out[s] = best;
    }
    return out;
  }
};

inline void check_shapes(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw std::invalid_argument("policy/mdp shape mismatch");
}

namespace detail {
constexpr int kDenseSolveCap = 5000;

inline void check_dense_cap(const Mdp& mdp) {
  if (mdp.n_states() > kDenseSolveCap)
    throw std::invalid_argument(
        "exact evaluation uses a dense factorization and is capped at 5000 states");
}
}  // namespace detail

/// Dense policy transition matrix P_pi with (s, s') entries.
inline Mat policy_transition_matrix(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  check_shapes(mdp, policy);
  detail::check_dense_cap(mdp);
  Mat p = Mat::Zero(mdp.n_states(), mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) {
    const Vec pi = policy.probs(s);
    for (int a = 0; a < mdp.n_actions(); ++a) {
      if (pi[a] == 0.0) continue;
      for (const auto& t : mdp.transition_row(s, a)) p(s, t.next) += pi[a] * t.prob;
    }
  }
  return p;
}

inline Vec policy_reward_vector(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  Vec r(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s) r[s] = policy.probs(s).dot(mdp.reward_table().row(s).transpose());
  return r;
}

struct ExactValues {
  Vec v;  // V_pi
  Mat q;  // Q_pi(s,a)
  Mat a;  // advantage Q - V
};

/// Exact policy evaluation by direct linear solve of (I - gamma P_pi) V = r_pi.
inline ExactValues exact_value(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  const Mat p_pi = policy_transition_matrix(mdp, policy);
  const Vec r_pi = policy_reward_vector(mdp, policy);
  const Mat system = Mat::Identity(mdp.n_states(), mdp.n_states()) - mdp.gamma() * p_pi;
  Eigen::PartialPivLU<Mat> lu(system);
  ExactValues out;
  out.v = lu.solve(r_pi);
  if (!out.v.allFinite())
    throw std::runtime_error("exact_value: singular system (internal fault)");
  out.q.resize(mdp.n_states(), mdp.n_actions());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a) {
      double ev = 0.0;
      for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * out.v[t.next];
      out.q(s, a) = mdp.reward(s, a) + mdp.gamma() * ev;
    }
  out.a = out.q.colwise() - out.v;
  return out;
}

/// Discounted state-visitation density: solves rho = rho0 + gamma P_pi^T rho.
/// Total mass is 1/(1-gamma).
inline Vec discounted_density(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  const Mat p_pi = policy_transition_matrix(mdp, policy);
  const Mat system =
      Mat::Identity(mdp.n_states(), mdp.n_states()) - mdp.gamma() * p_pi.transpose();
  Vec rho = Eigen::PartialPivLU<Mat>(system).solve(mdp.rho0());
  if (!rho.allFinite())
    throw std::runtime_error("discounted_density: singular system (internal fault)");
  // Clamp the tiny negative jitter a factorization can leave behind.
  for (int s = 0; s < rho.size(); ++s)
    if (rho[s] < 0.0 && rho[s] > -1e-12) rho[s] = 0.0;
  return rho;
}

/// Expected return eta(pi). Evaluated both as rho0 . V_pi and as the
/// density-weighted reward sum; the two must agree to 1e-8 and the first
/// is returned.
inline double expected_return(const Mdp& mdp, const TabularSoftmaxPolicy& policy) {
  const double via_value = mdp.rho0().dot(exact_value(mdp, policy).v);
  const Vec rho = discounted_density(mdp, policy);
  const double via_density = rho.dot(policy_reward_vector(mdp, policy));
  if (std::abs(via_value - via_density) > 1e-8 * std::max(1.0, std::abs(via_value)))
    throw std::runtime_error("expected_return: dual formulations disagree");
  return via_value;
}

struct PerformanceDifference {
  double lhs;  // eta(pi_tilde) - eta(pi)
  double rhs;  // sum_s sum_a rho_tilde(s) pi_tilde(a|s) A_pi(s,a)
};

/// Both sides of the performance-difference identity, each computed from
/// its own exact solve so the agreement is a real cross-check.
inline PerformanceDifference performance_difference(const Mdp& mdp,
                                                    const TabularSoftmaxPolicy& pi,
                                                    const TabularSoftmaxPolicy& pi_tilde) {
  PerformanceDifference out;
  out.lhs = expected_return(mdp, pi_tilde) - expected_return(mdp, pi);
  const Mat adv = exact_value(mdp, pi).a;
  const Vec rho_tilde = discounted_density(mdp, pi_tilde);
  double rhs = 0.0;
  for (int s = 0; s < mdp.n_states(); ++s) {
    const Vec probs = pi_tilde.probs(s);
    rhs += rho_tilde[s] * probs.dot(adv.row(s).transpose());
  }
  out.rhs = rhs;
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory sampling

struct StepRecord {
  int state;
  int action;
  double reward;
  int next;
  bool done;  // entered a terminal state
};

struct Episode {
  std::vector<StepRecord> steps;
  int start_state = 0;
};

inline int sample_next_state(const Mdp& mdp, int s, int a, Rng& rng) {
  const auto& row = mdp.transition_row(s, a);
  if (row.size() == 1) return row[0].next;  // deterministic row, no draw
  const double u = rng.uniform();
  double cum = 0.0;
  for (const auto& t : row) {
    cum += t.prob;
    if (u < cum) return t.next;
  }
  return row.back().next;
}

/// Samples one episode: start from rho0, follow the policy, stop on a
/// terminal state or after `horizon` steps.
inline Episode sample_episode(const Mdp& mdp, const TabularSoftmaxPolicy& policy,
                              int horizon, Rng& rng) {
  Episode ep;
  int s = rng.categorical(mdp.rho0());
  ep.start_state = s;
  for (int t = 0; t < horizon; ++t) {
    if (mdp.is_terminal(s)) break;
    const int a = rng.categorical(policy.probs(s));
    const int next = sample_next_state(mdp, s, a, rng);
    ep.steps.push_back({s, a, mdp.reward(s, a), next, mdp.is_terminal(next)});
    s = next;
    if (mdp.is_terminal(s)) break;
  }
  return ep;
}

}  // namespace optionlab
