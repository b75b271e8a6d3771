#pragma once

// Shared test fixtures: seeded random MDPs and policies.

#include <vector>

#include "optionlab/mdp.hpp"
#include "optionlab/rng.hpp"

namespace optionlab::test {

/// Random dense-ish MDP: every row is a normalized positive vector, so the
/// chain is ergodic. Rewards in [-1, 1].
inline Mdp random_mdp(std::uint64_t seed, int n_states, int n_actions, double gamma = 0.9) {
  Rng rng(seed);
  Mdp mdp(n_states, n_actions, gamma);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      std::vector<double> raw(n_states);
      double total = 0.0;
      for (int next = 0; next < n_states; ++next) {
        raw[next] = 0.05 + rng.uniform();
        total += raw[next];
      }
      for (int next = 0; next < n_states; ++next)
        mdp.add_transition(s, a, next, raw[next] / total);
      mdp.set_reward(s, a, 2.0 * rng.uniform() - 1.0);
    }
  }
  Vec rho0(n_states);
  double total = 0.0;
  for (int s = 0; s < n_states; ++s) {
    rho0[s] = 0.05 + rng.uniform();
    total += rho0[s];
  }
  mdp.set_rho0(rho0 / total);
  mdp.validate();
  return mdp;
}

inline TabularSoftmaxPolicy random_policy(std::uint64_t seed, int n_states, int n_actions) {
  Rng rng(seed);
  TabularSoftmaxPolicy policy{Mat(n_states, n_actions)};
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) policy.logits(s, a) = rng.normal();
  return policy;
}

}  // namespace optionlab::test
