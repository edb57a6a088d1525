#include "stepfair/core.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "stepfair/datagen.hpp"
#include "test_util.hpp"

using namespace stepfair;
using stepfair::testing::InstanceOptions;
using stepfair::testing::random_policy;
using stepfair::testing::random_problem;

namespace {

// Two exchangeable groups so single-group expectations can be read off the
// first group (proportions put all mass on it).
Problem one_feature_problem(int horizon) {
  Problem p;
  p.space.feature_count = 1;
  p.space.horizon = horizon;
  p.groups.ids = {"a", "b"};
  p.groups.proportions = {1.0, 0.0};
  TransitionKernel k;
  k.feature_count = 1;
  k.init = {0.5, 0.5};
  k.rows.assign(2 * kActions * 2, 0.0);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < kActions; ++a)
      for (int s2 = 0; s2 < 2; ++s2) k.at(s, a, s2) = 0.5;
  RewardModel r;
  r.feature_count = 1;
  r.mean.assign(2 * kActions, 0.0);
  p.kernels = {k, k};
  p.rewards = {r, r};
  validate(p);
  return p;
}

TEST(ForwardOccupancy, OneStepDeterministicPolicy) {
  Problem p = one_feature_problem(1);
  const Policy pi = Policy::constant(2, 1, 1, 1.0);
  const auto occ = forward_occupancy(p, pi);
  for (int y = 0; y < 2; ++y) {
    EXPECT_DOUBLE_EQ(occ.at(0, 0, 0, y, 1), 0.5);
    EXPECT_DOUBLE_EQ(occ.at(0, 0, 0, y, 0), 0.0);
  }
}

TEST(ForwardOccupancy, IdentityKernelKeepsMarginalConstant) {
  Problem p = random_problem(RngStream(7), {.features = 3, .horizon = 5});
  for (auto& k : p.kernels) {
    std::fill(k.rows.begin(), k.rows.end(), 0.0);
    for (int s = 0; s < p.space.state_count(); ++s)
      for (int a = 0; a < kActions; ++a) k.at(s, a, s) = 1.0;
  }
  const Policy pi = Policy::constant(2, 5, 3, 0.37);
  const auto occ = forward_occupancy(p, pi);
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < p.space.state_count(); ++s)
      for (int h = 1; h < 5; ++h) {
        const double m0 = occ.at_state(g, 0, s, 0) + occ.at_state(g, 0, s, 1);
        const double mh = occ.at_state(g, h, s, 0) + occ.at_state(g, h, s, 1);
        EXPECT_NEAR(m0, mh, 1e-12);
      }
}

TEST(ForwardOccupancy, SyntheticKernelMatchesMatrixChainOracle) {
  SyntheticConfig cfg;
  cfg.horizon = 3;
  Problem p = build_synthetic(cfg);
  const Policy pi = Policy::constant(2, 3, 5, 0.5);
  const auto occ = forward_occupancy(p, pi);
  for (int g = 0; g < 2; ++g) {
    const auto oracle = stepfair::testing::matrix_chain_occupancy(p, pi, g);
    for (int h = 0; h < 3; ++h)
      for (int s = 0; s < p.space.state_count(); ++s)
        for (int a = 0; a < kActions; ++a)
          EXPECT_NEAR(occ.at_state(g, h, s, a),
                      oracle[(static_cast<std::size_t>(h) * p.space.state_count() + s) *
                                 kActions +
                             a],
                      1e-12);
  }
}

TEST(ForwardOccupancy, InvariantsHoldOnRandomInstances) {
  for (int trial = 0; trial < 100; ++trial) {
    RngStream rng(1000 + trial);
    const Problem p = random_problem(rng, {.features = 3, .horizon = 4});
    const Policy pi = random_policy(rng.fork(1), p);
    const auto occ = forward_occupancy(p, pi);
    const int S = p.space.state_count();
    for (int g = 0; g < p.group_count(); ++g) {
      for (int h = 0; h < p.space.horizon; ++h) {
        double total = 0.0;
        for (int s = 0; s < S; ++s)
          for (int a = 0; a < kActions; ++a) total += occ.at_state(g, h, s, a);
        EXPECT_NEAR(total, 1.0, 1e-10);
      }
      // flow: sum_a rho(s', a, h+1) = sum_{s,a} rho(s, a, h) p(s'|s,a)
      for (int h = 0; h + 1 < p.space.horizon; ++h)
        for (int s2 = 0; s2 < S; ++s2) {
          double lhs = 0.0, rhs = 0.0;
          for (int a = 0; a < kActions; ++a) lhs += occ.at_state(g, h + 1, s2, a);
          for (int s = 0; s < S; ++s)
            for (int a = 0; a < kActions; ++a)
              rhs += occ.at_state(g, h, s, a) * p.kernels[g].at(s, a, s2);
          EXPECT_NEAR(lhs, rhs, 1e-10);
        }
      // policy consistency: acceptance ratio does not depend on y
      for (int h = 0; h < p.space.horizon; ++h)
        for (int x = 0; x < p.space.feature_count; ++x) {
          const double d1 = occ.at(g, h, x, 1, 0) + occ.at(g, h, x, 1, 1);
          const double d0 = occ.at(g, h, x, 0, 0) + occ.at(g, h, x, 0, 1);
          if (d1 > 1e-12 && d0 > 1e-12) {
            EXPECT_NEAR(occ.at(g, h, x, 1, 1) / d1, occ.at(g, h, x, 0, 1) / d0, 1e-9);
          }
        }
    }
  }
}

TEST(ForwardOccupancy, ZeroMassFeaturesDoNotAffectOccupancy) {
  // feature 2 is unreachable: no initial mass, no transition mass
  RngStream rng(42);
  Problem p = random_problem(rng, {.features = 3, .horizon = 4});
  const int S = p.space.state_count();
  for (auto& k : p.kernels) {
    for (int y = 0; y < 2; ++y) k.init[StateSpace::state(2, y)] = 0.0;
    stepfair::testing::rescale(k.init.data(), S);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < kActions; ++a) {
        for (int y = 0; y < 2; ++y) k.at(s, a, StateSpace::state(2, y)) = 0.0;
        stepfair::testing::rescale(&k.at(s, a, 0), S);
      }
  }
  Policy pi1 = random_policy(rng.fork(2), p);
  Policy pi2 = pi1;
  for (int g = 0; g < 2; ++g)
    for (int h = 0; h < 4; ++h) pi2.at(g, h, 2) = 1.0 - pi2.at(g, h, 2);
  const auto occ1 = forward_occupancy(p, pi1);
  const auto occ2 = forward_occupancy(p, pi2);
  for (int g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < occ1.rho[g].size(); ++i)
      EXPECT_DOUBLE_EQ(occ1.rho[g][i], occ2.rho[g][i]);
}

TEST(ValueFunctions, TerminalLayerEqualsReward) {
  RngStream rng(3);
  const Problem p = random_problem(rng, {.features = 2, .horizon = 1});
  const Policy pi = random_policy(rng.fork(1), p);
  const auto vf = value_functions(p, pi);
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < p.space.state_count(); ++s)
      for (int a = 0; a < kActions; ++a)
        EXPECT_DOUBLE_EQ(vf.q_at(g, 0, s, a), p.rewards[g].at(s, a));
}

TEST(ValueFunctions, ConstantRewardTelescopes) {
  RngStream rng(4);
  Problem p = random_problem(rng, {.features = 2, .horizon = 6});
  for (auto& r : p.rewards) std::fill(r.mean.begin(), r.mean.end(), 1.0);
  const Policy pi = random_policy(rng.fork(1), p);
  const auto vf = value_functions(p, pi);
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < p.space.state_count(); ++s)
      EXPECT_NEAR(vf.v_at(g, 0, s), 6.0, 1e-12);
}

TEST(ValueFunctions, MatchesTrajectoryEnumeration) {
  RngStream rng(5);
  const Problem p = random_problem(rng, {.features = 1, .horizon = 2});
  const Policy pi = random_policy(rng.fork(1), p);
  const auto vf = value_functions(p, pi);
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < 2; ++s)
      EXPECT_NEAR(vf.v_at(g, 0, s),
                  stepfair::testing::enumerate_value(p, pi, g, s, 0), 1e-12);
}

TEST(ValueFunctions, VIsPolicyMixOfQAndBounded) {
  RngStream rng(6);
  const Problem p = random_problem(rng, {.features = 3, .horizon = 5});
  const Policy pi = random_policy(rng.fork(1), p);
  const auto vf = value_functions(p, pi);
  const int H = p.space.horizon;
  for (int g = 0; g < 2; ++g)
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < p.space.state_count(); ++s) {
        double mix = 0.0;
        for (int a = 0; a < kActions; ++a)
          mix += pi.prob(g, h, StateSpace::x_of(s), a) * vf.q_at(g, h, s, a);
        EXPECT_NEAR(vf.v_at(g, h, s), mix, 1e-12);
        EXPECT_GE(vf.v_at(g, h, s), -1e-12);
        EXPECT_LE(vf.v_at(g, h, s), H - h + 1e-9);
      }
}

TEST(ValueFunctions, MonotoneInReward) {
  RngStream rng(8);
  const Problem p = random_problem(rng, {.features = 2, .horizon = 4});
  Problem bigger = p;
  for (auto& r : bigger.rewards)
    for (double& m : r.mean) m = std::min(1.0, m + 0.05);
  const Policy pi = random_policy(rng.fork(1), p);
  const auto lo = value_functions(p, pi);
  const auto hi = value_functions(bigger, pi);
  for (int g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < lo.v[g].size(); ++i)
      EXPECT_GE(hi.v[g][i], lo.v[g][i] - 1e-12);
}

TEST(RewardProfile, ZeroRewardGivesZeroProfile) {
  RngStream rng(9);
  Problem p = random_problem(rng, {.features = 2, .horizon = 4});
  for (auto& r : p.rewards) std::fill(r.mean.begin(), r.mean.end(), 0.0);
  const Policy pi = random_policy(rng.fork(1), p);
  const auto profile = expected_reward_profile(forward_occupancy(p, pi), p);
  for (double v : profile) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(RewardProfile, DirectSumOnOneStepInstance) {
  Problem p = one_feature_problem(1);
  for (auto& r : p.rewards) r.at(StateSpace::state(0, 1), 1) = 1.0;
  const Policy pi = Policy::constant(2, 1, 1, 1.0);
  const auto profile = expected_reward_profile(forward_occupancy(p, pi), p);
  EXPECT_NEAR(profile[0], 0.5, 1e-15);
}

TEST(RewardProfile, SumMatchesPopulationValue) {
  for (int trial = 0; trial < 100; ++trial) {
    RngStream rng(2000 + trial);
    const Problem p = random_problem(rng, {.features = 3, .horizon = 5});
    const Policy pi = random_policy(rng.fork(1), p);
    const auto profile = expected_reward_profile(forward_occupancy(p, pi), p);
    double total = 0.0;
    for (double v : profile) total += v;
    EXPECT_NEAR(total, population_value(p, value_functions(p, pi)), 1e-9);
  }
}

TEST(Marginals, AllAcceptAndAllReject) {
  SyntheticConfig cfg;
  const Problem p = build_synthetic(cfg);
  const auto occ1 = forward_occupancy(p, Policy::constant(2, 8, 5, 1.0));
  const auto occ0 = forward_occupancy(p, Policy::constant(2, 8, 5, 0.0));
  for (int g = 0; g < 2; ++g)
    for (int h = 0; h < 8; ++h) {
      EXPECT_NEAR(action_marginal(occ1, g, h), 1.0, 1e-12);
      EXPECT_DOUBLE_EQ(action_marginal(occ0, g, h), 0.0);
      EXPECT_NEAR(eqopt_conditional(occ1, g, h), 1.0, 1e-15);
    }
}

TEST(Marginals, ConstantPolicySurvivesConditioning) {
  RngStream rng(11);
  const Problem p = random_problem(rng, {.features = 4, .horizon = 5});
  const double c = 0.3125;
  const auto occ = forward_occupancy(p, Policy::constant(2, 5, 4, c));
  for (int g = 0; g < 2; ++g)
    for (int h = 0; h < 5; ++h) {
      EXPECT_NEAR(action_marginal(occ, g, h), c, 1e-12);
      EXPECT_NEAR(eqopt_conditional(occ, g, h), c, 1e-12);
    }
}

TEST(Marginals, SymmetricGroupsAgreeExactly) {
  RngStream rng(12);
  Problem p = random_problem(rng, {.features = 3, .horizon = 4});
  p.kernels[1] = p.kernels[0];
  p.rewards[1] = p.rewards[0];
  Policy pi = random_policy(rng.fork(1), p);
  pi.accept[1] = pi.accept[0];
  const auto occ = forward_occupancy(p, pi);
  for (int h = 0; h < 4; ++h) {
    EXPECT_DOUBLE_EQ(action_marginal(occ, 0, h), action_marginal(occ, 1, h));
    EXPECT_DOUBLE_EQ(eqopt_conditional(occ, 0, h), eqopt_conditional(occ, 1, h));
  }
}

TEST(Marginals, DegenerateConditioningRaises) {
  RngStream rng(13);
  Problem p = random_problem(rng, {.features = 2, .horizon = 3});
  // no qualified mass anywhere
  for (auto& k : p.kernels) {
    const int S = p.space.state_count();
    for (int s = 0; s < S; ++s) {
      if (StateSpace::y_of(s) == 1) k.init[s] = 0.0;
      for (int a = 0; a < kActions; ++a) {
        for (int s2 = 0; s2 < S; ++s2)
          if (StateSpace::y_of(s2) == 1) k.at(s, a, s2) = 0.0;
        stepfair::testing::rescale(&k.at(s, a, 0), S);
      }
    }
    stepfair::testing::rescale(k.init.data(), S);
  }
  const auto occ = forward_occupancy(p, Policy::constant(2, 3, 2, 0.5));
  try {
    eqopt_conditional(occ, 0, 1);
    FAIL() << "expected degenerate_conditioning";
  } catch (const degenerate_conditioning& e) {
    EXPECT_LE(e.denominator, kDenominatorFloor);
  }
}

TEST(Validation, RenormalizesSmallDriftRejectsLarge) {
  RngStream rng(14);
  Problem p = random_problem(rng, {.features = 2, .horizon = 3});
  p.kernels[0].rows[0] += 5e-10;  // tolerable text-file rounding
  Problem q = p;
  EXPECT_NO_THROW(validate(q));
  double sum = 0.0;
  for (int s2 = 0; s2 < q.space.state_count(); ++s2) sum += q.kernels[0].at(0, 0, s2);
  EXPECT_DOUBLE_EQ(sum, 1.0);
  p.kernels[0].rows[0] += 1e-6;  // beyond slack
  EXPECT_THROW(validate(p), validation_error);
}

TEST(Validation, ShapeErrors) {
  RngStream rng(15);
  Problem p = random_problem(rng, {.features = 2, .horizon = 3});
  Policy narrow = Policy::constant(2, 3, 1, 0.5);
  EXPECT_THROW(forward_occupancy(p, narrow), shape_error);
  Problem broken = p;
  broken.kernels.pop_back();
  EXPECT_THROW(validate(broken), shape_error);
  Policy bad = Policy::constant(2, 3, 2, 0.5);
  bad.at(0, 0, 0) = 1.5;
  EXPECT_THROW(forward_occupancy(p, bad), validation_error);
}

TEST(PolicyClass, MembershipChecksBothActions) {
  Policy pi = Policy::constant(2, 2, 2, 0.5);
  EXPECT_TRUE(pi.in_class(0.4));
  pi.at(0, 1, 1) = 0.95;
  EXPECT_TRUE(pi.in_class(0.05));
  EXPECT_FALSE(pi.in_class(0.1));  // 1 - 0.95 < 0.1
}

}  // namespace
