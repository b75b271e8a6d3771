#include <catch2/catch_amalgamated.hpp>

#include <queue>

#include "optionlab/dp.hpp"
#include "optionlab/gridworld.hpp"
#include "support.hpp"

using namespace optionlab;

namespace {

// BFS distances (in steps) from every non-terminal state to the terminal.
std::vector<int> bfs_steps_to_goal(const Mdp& mdp, int terminal) {
  std::vector<std::vector<int>> predecessors(mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a)
      for (const auto& t : mdp.transition_row(s, a))
        if (t.prob > 0.0 && t.next != s) predecessors[t.next].push_back(s);
  std::vector<int> dist(mdp.n_states(), -1);
  std::queue<int> frontier;
  dist[terminal] = 0;
  frontier.push(terminal);
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int u : predecessors[v])
      if (dist[u] < 0) {
        dist[u] = dist[v] + 1;
        frontier.push(u);
      }
  }
  return dist;
}

Episode fixed_episode() {
  // hand-built 3-step episode over 3 states
  Episode ep;
  ep.start_state = 0;
  ep.steps.push_back({0, 0, 1.0, 1, false});
  ep.steps.push_back({1, 0, -0.5, 2, false});
  ep.steps.push_back({2, 0, 2.0, 0, false});
  return ep;
}

}  // namespace

TEST_CASE("optimal backup on one state") {
  Mdp mdp(1, 1, 0.9);
  mdp.add_transition(0, 0, 0, 1.0);
  mdp.set_reward(0, 0, 1.0);
  Vec rho(1);
  rho << 1.0;
  mdp.set_rho0(rho);
  mdp.validate();
  const Vec out = bellman_backup(mdp, Vec::Zero(1));
  REQUIRE(out[0] == Catch::Approx(1.0));
}

TEST_CASE("optimal backup dominates every policy backup") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const Mdp mdp = test::random_mdp(seed, 6, 3);
    const auto policy = test::random_policy(seed + 9, 6, 3);
    Rng rng(seed + 77);
    Vec f(6);
    for (int s = 0; s < 6; ++s) f[s] = rng.normal();
    const Vec star = bellman_backup(mdp, f);
    const Vec pol = bellman_backup(mdp, f, policy);
    for (int s = 0; s < 6; ++s) REQUIRE(star[s] >= pol[s] - 1e-12);
  }
}

TEST_CASE("both operators contract with factor gamma") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Mdp mdp = test::random_mdp(100 + seed, 5, 2, 0.85);
    const auto policy = test::random_policy(200 + seed, 5, 2);
    Rng rng(300 + seed);
    Vec f(5), g(5);
    for (int s = 0; s < 5; ++s) {
      f[s] = 3.0 * rng.normal();
      g[s] = 3.0 * rng.normal();
    }
    const double gap = (f - g).cwiseAbs().maxCoeff();
    const double star_gap = (bellman_backup(mdp, f) - bellman_backup(mdp, g)).cwiseAbs().maxCoeff();
    const double pol_gap = (bellman_backup(mdp, f, policy) - bellman_backup(mdp, g, policy))
                               .cwiseAbs()
                               .maxCoeff();
    REQUIRE(star_gap <= mdp.gamma() * gap + 1e-12);
    REQUIRE(pol_gap <= mdp.gamma() * gap + 1e-12);
  }
}

TEST_CASE("optimal value is a fixed point of the optimal backup") {
  const Mdp mdp = test::random_mdp(7, 8, 3);
  const auto vi = value_iteration(mdp, Vec::Zero(8), 100000, 1e-13);
  const ExactValues greedy_values = exact_value(mdp, vi.greedy_policy);
  REQUIRE((bellman_backup(mdp, greedy_values.v) - greedy_values.v).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("value iteration on one state converges immediately") {
  Mdp mdp(1, 1, 0.9);
  mdp.add_transition(0, 0, 0, 1.0);
  mdp.set_reward(0, 0, 1.0);
  Vec rho(1);
  rho << 1.0;
  mdp.set_rho0(rho);
  mdp.validate();
  const auto result = value_iteration(mdp, Vec::Constant(1, 10.0), 100, 1e-12);
  REQUIRE(result.iterations == 1);
  REQUIRE(result.v[0] == Catch::Approx(10.0));
}

TEST_CASE("value iteration on the 4-room equals the shortest-path value") {
  const CompiledGrid grid = build_four_rooms(8, GoalMode::fixed_goal, 0);
  const auto result = value_iteration(grid.mdp, Vec::Zero(grid.mdp.n_states()), 100000, 1e-10);
  const auto dist = bfs_steps_to_goal(grid.mdp, grid.terminal_index);
  for (std::size_t i = 0; i < grid.states.size(); ++i) {
    REQUIRE(dist[i] >= 1);
    const double expected = std::pow(grid.mdp.gamma(), dist[i] - 1);
    REQUIRE(result.v[i] == Catch::Approx(expected).margin(1e-6));
  }
  REQUIRE(result.v[grid.terminal_index] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("value iteration geometric error bound") {
  const Mdp mdp = test::random_mdp(13, 7, 3, 0.8);
  const auto exact = value_iteration(mdp, Vec::Zero(7), 100000, 1e-14);
  Rng rng(5);
  Vec v0(7);
  for (int s = 0; s < 7; ++s) v0[s] = rng.normal();
  const double initial_gap = (v0 - exact.v).cwiseAbs().maxCoeff();
  Vec v = v0;
  double bound = initial_gap;
  for (int nstep = 1; nstep <= 60; ++nstep) {
    v = bellman_backup(mdp, v);
    bound *= mdp.gamma();
    REQUIRE((v - exact.v).cwiseAbs().maxCoeff() <= bound + 1e-9);
  }
}

TEST_CASE("greedy tie break is deterministic") {
  Mdp mdp(2, 3, 0.9);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 3; ++a) {
      mdp.add_transition(s, a, s, 1.0);
      mdp.set_reward(s, a, 1.0);  // all actions tie
    }
  Vec rho(2);
  rho << 0.5, 0.5;
  mdp.set_rho0(rho);
  mdp.validate();
  const auto g1 = greedy_actions(mdp, Vec::Zero(2));
  const auto g2 = greedy_actions(mdp, Vec::Zero(2));
  REQUIRE(g1 == std::vector<int>{0, 0});
  REQUIRE(g1 == g2);
}

TEST_CASE("policy iteration terminates at a fixed point and matches VI") {
  const CompiledGrid grid = build_four_rooms(8, GoalMode::fixed_goal, 0);
  const auto pi_result =
      policy_iteration(grid.mdp, TabularSoftmaxPolicy::uniform(grid.mdp.n_states(), 4));
  const auto vi_result = value_iteration(grid.mdp, Vec::Zero(grid.mdp.n_states()), 100000, 1e-12);
  REQUIRE((pi_result.v - vi_result.v).cwiseAbs().maxCoeff() < 1e-8);

  // starting at the optimum leaves the policy unchanged after one evaluation
  const auto restart = policy_iteration(grid.mdp, pi_result.policy);
  REQUIRE(restart.iterations == 2);  // one evaluation + stability check
  REQUIRE(restart.policy.greedy_actions() == pi_result.policy.greedy_actions());
}

TEST_CASE("policy iteration improves monotonically on random MDPs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Mdp mdp = test::random_mdp(500 + seed, 5, 3);
    const auto result = policy_iteration(mdp, test::random_policy(600 + seed, 5, 3));
    for (std::size_t i = 1; i < result.etas.size(); ++i)
      REQUIRE(result.etas[i] >= result.etas[i - 1] - 1e-12);
  }
}

TEST_CASE("td lambda forward and backward views agree offline") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    // random episode over 4 states
    Episode ep;
    const int len = 1 + rng.uniform_int(12);
    int s = rng.uniform_int(4);
    for (int t = 0; t < len; ++t) {
      const int next = rng.uniform_int(4);
      ep.steps.push_back({s, 0, rng.normal(), next, false});
      s = next;
    }
    Vec v(4);
    for (int i = 0; i < 4; ++i) v[i] = rng.normal();
    for (double lambda : {0.0, 0.3, 0.7, 1.0}) {
      const Vec fwd = lambda_return_increments(ep, v, 0.9, lambda, 0.1);
      const Vec bwd = eligibility_trace_increments(ep, v, 0.9, lambda, 0.1);
      REQUIRE((fwd - bwd).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("lambda one equals the monte carlo return update") {
  const Episode ep = fixed_episode();
  Vec v(3);
  v << 0.25, -1.0, 0.5;
  const double gamma = 0.5;
  const Vec inc = lambda_return_increments(ep, v, gamma, 1.0, 1.0);
  // hand-computed every-visit MC returns with bootstrap at the cap
  const double g2 = 2.0 + gamma * v[0];
  const double g1 = -0.5 + gamma * g2;
  const double g0 = 1.0 + gamma * g1;
  REQUIRE(inc[0] == Catch::Approx(g0 - v[0]).margin(1e-12));
  REQUIRE(inc[1] == Catch::Approx(g1 - v[1]).margin(1e-12));
  REQUIRE(inc[2] == Catch::Approx(g2 - v[2]).margin(1e-12));
}

TEST_CASE("lambda zero reduces to one-step td") {
  const Episode ep = fixed_episode();
  Vec v(3);
  v << 0.25, -1.0, 0.5;
  const Vec inc = lambda_return_increments(ep, v, 0.9, 0.0, 1.0);
  for (int t = 0; t < 3; ++t) {
    const auto& s = ep.steps[t];
    const double delta = s.reward + 0.9 * v[s.next] - v[s.state];
    REQUIRE(inc[s.state] == Catch::Approx(delta).margin(1e-12));
  }
}

TEST_CASE("td(0) approaches the exact value on the 4-room") {
  const CompiledGrid grid = build_four_rooms(8, GoalMode::fixed_goal, 0);
  const auto policy = TabularSoftmaxPolicy::uniform(grid.mdp.n_states(), 4);
  const ExactValues exact = exact_value(grid.mdp, policy);
  LearningSchedule schedule;
  schedule.lambda = 0.0;
  // polynomial Robbins-Monro rate; the 1/n default needs far more episodes
  schedule.alpha_fn = [](long n) { return std::pow(static_cast<double>(n), -0.6); };
  const Vec estimate = td_lambda(grid.mdp, policy, schedule, 20000, default_horizon(8), 11);
  REQUIRE((estimate - exact.v).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("td lambda rejects bad arguments") {
  const CompiledGrid grid = build_four_rooms(8, GoalMode::fixed_goal, 0);
  const auto policy = TabularSoftmaxPolicy::uniform(grid.mdp.n_states(), 4);
  LearningSchedule schedule;
  schedule.lambda = 1.5;
  REQUIRE_THROWS(td_lambda(grid.mdp, policy, schedule, 1, 10, 0));
  schedule.lambda = 0.5;
  REQUIRE_THROWS(td_lambda(grid.mdp, policy, schedule, 1, 0, 0));
}

TEST_CASE("epsilon greedy endpoints and frequencies") {
  Vec q(2);
  q << 1.0, 0.0;
  Rng greedy_rng(1);
  for (int i = 0; i < 100; ++i) REQUIRE(epsilon_greedy_action(q, 0.0, greedy_rng) == 0);
  Rng uniform_rng(2);
  int zeros = 0;
  for (int i = 0; i < 100000; ++i)
    if (epsilon_greedy_action(q, 1.0, uniform_rng) == 0) ++zeros;
  REQUIRE(std::abs(zeros / 100000.0 - 0.5) < 0.01);
  Rng mixed_rng(5);
  int greedy_hits = 0;
  for (int i = 0; i < 100000; ++i)
    if (epsilon_greedy_action(q, 0.3, mixed_rng) == 0) ++greedy_hits;
  // expectation 1 - eps/2 = 0.85
  REQUIRE(std::abs(greedy_hits / 100000.0 - 0.85) < 0.01);
  REQUIRE_THROWS(epsilon_greedy_action(Vec(), 0.5, mixed_rng));
}
