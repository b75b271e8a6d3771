#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "optionlab/dp.hpp"
#include "optionlab/gridworld.hpp"
#include "optionlab/mdp.hpp"
#include "optionlab/spectral.hpp"

#include "json.hpp"

namespace optionlab {

/// Graph over the non-terminal states of an MDP: one vertex per state in
/// index order, a unit edge wherever some action moves between two
/// distinct non-terminal states with positive probability.
inline GraphAccumulator mdp_state_graph(const Mdp& mdp) {
  GraphAccumulator acc;
  std::vector<int> vertex(mdp.n_states(), -1);
  for (int s = 0; s < mdp.n_states(); ++s)
    if (!mdp.is_terminal(s)) vertex[s] = acc.intern(static_cast<std::uint64_t>(s));
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions(); ++a)
      for (const auto& t : mdp.transition_row(s, a))
        if (t.prob > 0.0 && t.next != s && !mdp.is_terminal(t.next))
          acc.set_edge(vertex[s], vertex[t.next], 1.0);
  }
  return acc;
}

/// Adjacency graph of all free cells of a layout (goal cell included);
/// vertices are interned in row-major cell order.
inline GraphAccumulator cell_graph(const RoomLayout& layout) {
  GraphAccumulator acc;
  const auto cells = layout.free_cells();
  for (const Cell& c : cells) acc.intern(static_cast<std::uint64_t>(layout.cell_index(c)));
  for (const Cell& c : cells) {
    for (int a = 0; a < kGridActions; ++a) {
      const Cell to = move_cell(layout, c, a);
      if (to == c) continue;
      acc.add_transition(static_cast<std::uint64_t>(layout.cell_index(c)),
                         static_cast<std::uint64_t>(layout.cell_index(to)));
    }
  }
  return acc;
}

/// Goal-free navigation MDP over the free cells of a layout: 4 actions,
/// deterministic moves, zero reward, uniform start. The substrate for
/// intrinsic-reward options.
inline Mdp layout_mdp(const RoomLayout& layout, double gamma = 0.99) {
  const auto cells = layout.free_cells();
  const int n = static_cast<int>(cells.size());
  std::vector<int> dense(static_cast<std::size_t>(layout.n) * layout.n, -1);
  for (int i = 0; i < n; ++i) dense[layout.cell_index(cells[i])] = i;
  Mdp mdp(n, kGridActions, gamma);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < kGridActions; ++a) {
      const Cell to = move_cell(layout, cells[i], a);
      mdp.add_transition(i, a, dense[layout.cell_index(to)], 1.0);
    }
  mdp.validate();
  return mdp;
}

/// Bottom-k orthonormal basis taken from a spectrum.
struct PvfBasis {
  Mat columns;  // rows = non-terminal states, k columns

  int k() const { return static_cast<int>(columns.cols()); }
};

inline PvfBasis pvf_basis(const SpectrumBundle& spectrum, int k) {
  if (k < 1 || k > spectrum.eigenvectors.cols())
    throw std::invalid_argument("pvf_basis: k out of range");
  return {spectrum.eigenvectors.leftCols(k)};
}

struct ValueProjection {
  Vec coefficients;
  Vec v_hat;
  double sup_error = 0.0;  // can grow with k; the projection is L2-optimal
  double l2_error = 0.0;   // non-increasing in k (nested subspaces)
};

/// Least-squares projection of V onto an orthonormal basis.
inline ValueProjection project_value(const Vec& v, const PvfBasis& basis) {
  if (v.size() != basis.columns.rows())
    throw std::invalid_argument("project_value: shape mismatch");
  ValueProjection out;
  out.coefficients = basis.columns.transpose() * v;
  out.v_hat = basis.columns * out.coefficients;
  out.sup_error = (out.v_hat - v).cwiseAbs().maxCoeff();
  out.l2_error = (out.v_hat - v).norm();
  return out;
}

struct RpiResult {
  TabularSoftmaxPolicy policy;
  Vec weights;
  int iterations = 0;
  bool ridge_used = false;
};

/// Representation Policy Iteration: least-squares fixed-point evaluation
/// on the feature columns, solving Phi^T (Phi - gamma P_pi Phi) w = Phi^T r_pi
/// over non-terminal states (terminal value pinned at 0), alternated with
/// greedy improvement until the policy is stable.
inline RpiResult representation_policy_iteration(const Mdp& mdp, const Mat& basis,
                                                 int max_iters = 100) {
  std::vector<int> feature_row(mdp.n_states(), -1);
  {
    int r = 0;
    for (int s = 0; s < mdp.n_states(); ++s)
      if (!mdp.is_terminal(s)) feature_row[s] = r++;
    if (r != basis.rows())
      throw std::invalid_argument("representation_policy_iteration: basis rows must match "
                                  "non-terminal state count");
  }
  const int k = static_cast<int>(basis.cols());

  RpiResult out;
  out.policy = TabularSoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
  std::vector<int> actions;

  auto value_of = [&](int state, const Vec& w) {
    return feature_row[state] < 0 ? 0.0 : double(basis.row(feature_row[state]) * w);
  };

  for (int it = 0; it < max_iters; ++it) {
    out.iterations = it + 1;
    // P_pi Phi restricted to non-terminal rows.
    Mat p_phi = Mat::Zero(basis.rows(), k);
    Vec r_pi = Vec::Zero(basis.rows());
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (feature_row[s] < 0) continue;
      const Vec pi = out.policy.probs(s);
      for (int a = 0; a < mdp.n_actions(); ++a) {
        if (pi[a] == 0.0) continue;
        r_pi[feature_row[s]] += pi[a] * mdp.reward(s, a);
        for (const auto& t : mdp.transition_row(s, a))
          if (feature_row[t.next] >= 0)
            p_phi.row(feature_row[s]) += pi[a] * t.prob * basis.row(feature_row[t.next]);
      }
    }
    Mat gram = basis.transpose() * (basis - mdp.gamma() * p_phi);
    const Vec rhs = basis.transpose() * r_pi;
    Eigen::FullPivLU<Mat> lu(gram);
    if (lu.rank() < k) {
      out.ridge_used = true;
      gram += 1e-8 * Mat::Identity(k, k);
      out.weights = Eigen::PartialPivLU<Mat>(gram).solve(rhs);
    } else {
      out.weights = lu.solve(rhs);
    }

    std::vector<int> improved(mdp.n_states(), 0);
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (mdp.is_terminal(s)) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions(); ++a) {
        double ev = 0.0;
        for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * value_of(t.next, out.weights);
        const double q = mdp.reward(s, a) + mdp.gamma() * ev;
        if (q > best) {
          best = q;
          improved[s] = a;
        }
      }
    }
    if (it > 0 && improved == actions) break;
    actions = improved;
    out.policy = TabularSoftmaxPolicy::from_actions(improved, mdp.n_actions());
  }
  return out;
}

/// Intrinsic reward of an eigenvector feature for a transition: the
/// feature increment phi(next) - phi(current). Telescopes along any
/// trajectory to the endpoint difference.
inline double intrinsic_reward(const Vec& phi, int state, int next_state) {
  if (state < 0 || state >= phi.size() || next_state < 0 || next_state >= phi.size())
    throw std::invalid_argument("intrinsic_reward: state outside feature domain");
  return phi[next_state] - phi[state];
}

struct Eigenoption {
  int index = 0;
  Vec phi;
  std::vector<int> policy;          // greedy action per state
  std::vector<char> terminates;     // termination set: max_a Q_i(s,a) <= threshold
  Vec option_values;                // V of the intrinsic MDP

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["index"] = index;
    j["phi"] = std::vector<double>(phi.data(), phi.data() + phi.size());
    j["policy"] = policy;
    std::vector<int> term;
    for (std::size_t s = 0; s < terminates.size(); ++s)
      if (terminates[s]) term.push_back(static_cast<int>(s));
    j["termination_set"] = term;
    return j;
  }
};

/// Same dynamics, rewards swapped for the feature increments.
inline Mdp intrinsic_mdp(const Mdp& dynamics, const Vec& phi, double gamma_option) {
  if (phi.size() != dynamics.n_states())
    throw std::invalid_argument("intrinsic_mdp: feature must cover every state");
  Mdp out(dynamics.n_states(), dynamics.n_actions(), gamma_option);
  out.set_rho0(dynamics.rho0());
  for (int s = 0; s < dynamics.n_states(); ++s)
    for (int a = 0; a < dynamics.n_actions(); ++a) {
      const auto& row = dynamics.transition_row(s, a);
      out.set_transition_row(s, a, row);
      double expected = 0.0;
      for (const auto& t : row) expected += t.prob * intrinsic_reward(phi, s, t.next);
      out.set_reward(s, a, expected);
    }
  out.validate();
  return out;
}

/// Solves the intrinsic-reward MDP by value iteration. The option policy
/// is the greedy policy; a state terminates the option when no action has
/// positive option value (max_a Q_i(s,a) <= threshold).
///
/// gamma_option = 0 selects the steepest-ascent limit: one exact backup,
/// Q(s,a) = r_i(s,a), so the option climbs phi strictly until a local
/// maximum. For gamma_option > 0 the greedy option maximizes the
/// discounted telescoped gain and may cross shallow valleys toward higher
/// peaks, so per-step monotonicity is not guaranteed.
inline Eigenoption learn_eigenoption(const Mdp& dynamics, const Vec& phi,
                                     double gamma_option = 0.99, int index = 0,
                                     double termination_threshold = 0.0) {
  if (gamma_option < 0.0 || gamma_option >= 1.0)
    throw std::invalid_argument("learn_eigenoption: gamma_option must lie in [0,1)");
  Eigenoption out;
  out.index = index;
  out.phi = phi;

  if (gamma_option == 0.0) {
    const int n = dynamics.n_states();
    out.policy.assign(n, 0);
    out.terminates.assign(n, 0);
    out.option_values = Vec::Zero(n);
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < dynamics.n_actions(); ++a) {
        double expected = 0.0;
        for (const auto& t : dynamics.transition_row(s, a))
          expected += t.prob * intrinsic_reward(phi, s, t.next);
        if (expected > best) {
          best = expected;
          out.policy[s] = a;
        }
      }
      out.option_values[s] = best;
      if (best <= termination_threshold) out.terminates[s] = 1;
    }
    return out;
  }

  const Mdp intrinsic = intrinsic_mdp(dynamics, phi, gamma_option);
  const ValueIterationResult vi =
      value_iteration(intrinsic, Vec::Zero(intrinsic.n_states()), 100000, 1e-12);
  out.policy = vi.greedy;
  out.option_values = vi.v;
  out.terminates.assign(intrinsic.n_states(), 0);
  for (int s = 0; s < intrinsic.n_states(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < intrinsic.n_actions(); ++a) {
      double ev = 0.0;
      for (const auto& t : intrinsic.transition_row(s, a)) ev += t.prob * vi.v[t.next];
      best = std::max(best, intrinsic.reward(s, a) + gamma_option * ev);
    }
    if (best <= termination_threshold) out.terminates[s] = 1;
  }
  return out;
}

}  // namespace optionlab
