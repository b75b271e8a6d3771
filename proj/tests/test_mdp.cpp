#include <catch2/catch_amalgamated.hpp>

#include "optionlab/mdp.hpp"
#include "support.hpp"

using namespace optionlab;

namespace {

Mdp one_state_mdp(double reward, double gamma) {
  Mdp mdp(1, 1, gamma);
  mdp.add_transition(0, 0, 0, 1.0);
  mdp.set_reward(0, 0, reward);
  Vec rho0(1);
  rho0 << 1.0;
  mdp.set_rho0(rho0);
  mdp.validate();
  return mdp;
}

// s0 -> s1 deterministic with r = 0; s1 absorbing with r = 1.
Mdp two_state_chain(double gamma) {
  Mdp mdp(2, 1, gamma);
  mdp.add_transition(0, 0, 1, 1.0);
  mdp.add_transition(1, 0, 1, 1.0);
  mdp.set_reward(0, 0, 0.0);
  mdp.set_reward(1, 0, 1.0);
  Vec rho0(2);
  rho0 << 1.0, 0.0;
  mdp.set_rho0(rho0);
  mdp.validate();
  return mdp;
}

}  // namespace

TEST_CASE("validation rejects broken models") {
  Mdp mdp(2, 1, 0.9);
  mdp.add_transition(0, 0, 1, 0.5);  // row does not sum to 1
  mdp.add_transition(1, 0, 1, 1.0);
  REQUIRE_THROWS(mdp.validate());
  REQUIRE_THROWS(Mdp(2, 1, 1.0));  // gamma must be < 1
  REQUIRE_THROWS(Mdp(0, 1, 0.9));
}

TEST_CASE("exact value on one state") {
  const Mdp mdp = one_state_mdp(1.0, 0.9);
  const auto policy = TabularSoftmaxPolicy::uniform(1, 1);
  const ExactValues values = exact_value(mdp, policy);
  REQUIRE(values.v[0] == Catch::Approx(10.0).margin(1e-10));
}

TEST_CASE("exact value on the two-state chain") {
  const Mdp mdp = two_state_chain(0.5);
  const auto policy = TabularSoftmaxPolicy::uniform(2, 1);
  const ExactValues values = exact_value(mdp, policy);
  REQUIRE(values.v[1] == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(values.v[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("exact value matches long value-sweep oracle on a random MDP") {
  const Mdp mdp = test::random_mdp(7, 5, 3);
  const auto policy = test::random_policy(17, 5, 3);
  const ExactValues values = exact_value(mdp, policy);
  // oracle: many synchronous policy backups from zero
  Vec v = Vec::Zero(5);
  for (int sweep = 0; sweep < 10000; ++sweep) {
    Vec next(5);
    for (int s = 0; s < 5; ++s) {
      const Vec pi = policy.probs(s);
      double acc = 0.0;
      for (int a = 0; a < 3; ++a) {
        double ev = 0.0;
        for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * v[t.next];
        acc += pi[a] * (mdp.reward(s, a) + mdp.gamma() * ev);
      }
      next[s] = acc;
    }
    v = next;
  }
  REQUIRE((values.v - v).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("bellman residual and advantage identity hold exactly") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    const Mdp mdp = test::random_mdp(seed, 6, 3);
    const auto policy = test::random_policy(seed + 100, 6, 3);
    const ExactValues values = exact_value(mdp, policy);
    for (int s = 0; s < 6; ++s) {
      const Vec pi = policy.probs(s);
      // Bellman residual
      double backup = 0.0;
      for (int a = 0; a < 3; ++a) {
        double ev = 0.0;
        for (const auto& t : mdp.transition_row(s, a)) ev += t.prob * values.v[t.next];
        backup += pi[a] * (mdp.reward(s, a) + mdp.gamma() * ev);
      }
      REQUIRE(std::abs(backup - values.v[s]) < 1e-10);
      // E_pi[A] = 0
      REQUIRE(std::abs(pi.dot(values.a.row(s).transpose())) < 1e-10);
    }
  }
}

TEST_CASE("discounted density trivial cases") {
  const Mdp single = one_state_mdp(1.0, 0.9);
  const auto policy1 = TabularSoftmaxPolicy::uniform(1, 1);
  const Vec rho_single = discounted_density(single, policy1);
  REQUIRE(rho_single[0] == Catch::Approx(10.0).margin(1e-10));

  const Mdp chain = two_state_chain(0.5);
  const auto policy2 = TabularSoftmaxPolicy::uniform(2, 1);
  const Vec rho = discounted_density(chain, policy2);
  REQUIRE(rho[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(rho[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("discounted density matches truncated power iteration") {
  const Mdp mdp = test::random_mdp(3, 6, 2);
  const auto policy = test::random_policy(31, 6, 2);
  const Vec rho = discounted_density(mdp, policy);
  // oracle: sum_t gamma^t Pr(s_t = s) via explicit chain propagation
  const Mat p = policy_transition_matrix(mdp, policy);
  Vec dist = mdp.rho0();
  Vec oracle = Vec::Zero(6);
  double discount = 1.0;
  for (int t = 0; t <= 200; ++t) {
    oracle += discount * dist;
    dist = (p.transpose() * dist).eval();
    discount *= mdp.gamma();
  }
  REQUIRE((rho - oracle).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE(rho.minCoeff() >= 0.0);
  REQUIRE(rho.sum() == Catch::Approx(1.0 / (1.0 - mdp.gamma())).margin(1e-8));
}

TEST_CASE("expected return dual computation") {
  REQUIRE(expected_return(one_state_mdp(1.0, 0.9), TabularSoftmaxPolicy::uniform(1, 1)) ==
          Catch::Approx(10.0).margin(1e-10));
  REQUIRE(expected_return(two_state_chain(0.5), TabularSoftmaxPolicy::uniform(2, 1)) ==
          Catch::Approx(1.0).margin(1e-12));
  // the dual-agreement guard is exercised by every call; a random case:
  const Mdp mdp = test::random_mdp(7, 5, 3);
  REQUIRE_NOTHROW(expected_return(mdp, TabularSoftmaxPolicy::uniform(5, 3)));
}

TEST_CASE("performance difference identity") {
  const Mdp chain = two_state_chain(0.5);
  const auto uniform = TabularSoftmaxPolicy::uniform(2, 1);
  const auto same = performance_difference(chain, uniform, uniform);
  REQUIRE(same.lhs == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(same.rhs == Catch::Approx(0.0).margin(1e-12));

  // randomized sweep
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Mdp mdp = test::random_mdp(1000 + seed, 4, 2);
    const auto pi = test::random_policy(2000 + seed, 4, 2);
    const auto pi_tilde = test::random_policy(3000 + seed, 4, 2);
    const auto diff = performance_difference(mdp, pi, pi_tilde);
    REQUIRE(std::abs(diff.lhs - diff.rhs) < 1e-8);
  }
}

TEST_CASE("policy softmax rows sum to one and shift invariance holds") {
  auto policy = test::random_policy(5, 4, 3);
  for (int s = 0; s < 4; ++s)
    REQUIRE(policy.probs(s).sum() == Catch::Approx(1.0).margin(1e-12));
  auto shifted = policy;
  shifted.logits.row(2).array() += 7.5;
  REQUIRE((shifted.probs(2) - policy.probs(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mdp json round trip preserves solutions") {
  const Mdp mdp = test::random_mdp(9, 5, 2);
  const Mdp back = Mdp::from_json(mdp.to_json());
  const auto policy = test::random_policy(10, 5, 2);
  REQUIRE((exact_value(mdp, policy).v - exact_value(back, policy).v).cwiseAbs().maxCoeff() <
          1e-14);
  REQUIRE(back.to_json() == mdp.to_json());
}
