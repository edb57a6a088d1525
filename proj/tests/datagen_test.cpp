#include "stepfair/datagen.hpp"

#include <cstdio>
#include <fstream>

#include <gtest/gtest.h>

#include "stepfair/serialize.hpp"

using namespace stepfair;

namespace {

TEST(BuildSynthetic, KernelFactorizationProductRule) {
  const Problem p = build_synthetic({});
  // row (x=0, y=1, a=1): P(y'=1) = 0.6 spread over x' by [0.3,...]
  const int s = StateSpace::state(0, 1);
  EXPECT_NEAR(p.kernels[0].at(s, 1, StateSpace::state(0, 1)), 0.6 * 0.3, 1e-12);
  EXPECT_NEAR(p.kernels[0].at(s, 1, StateSpace::state(0, 0)), 0.4 * 0.3, 1e-12);
  EXPECT_NEAR(p.kernels[0].at(s, 1, StateSpace::state(4, 1)), 0.6 * 0.1, 1e-12);
  // reject branch flips the qualification probability
  EXPECT_NEAR(p.kernels[0].at(s, 0, StateSpace::state(0, 1)), 0.4 * 0.3, 1e-12);
  // initial: uniform feature given qualification, P(y0=1) = 0.5 default
  EXPECT_NEAR(p.kernels[0].init[StateSpace::state(2, 1)], 0.5 * 0.2, 1e-12);
}

TEST(BuildSynthetic, RowsAreDistributions) {
  const Problem p = build_synthetic({});
  for (int g = 0; g < 2; ++g)
    for (int s = 0; s < 10; ++s)
      for (int a = 0; a < kActions; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < 10; ++s2) sum += p.kernels[g].at(s, a, s2);
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
}

TEST(BuildSynthetic, UniformMovesGiveUniformFeatureMarginal) {
  SyntheticConfig cfg;
  cfg.feature_move.assign(5, std::vector<double>(5, 0.2));
  const Problem p = build_synthetic(cfg);
  for (int s = 0; s < 10; ++s)
    for (int a = 0; a < kActions; ++a)
      for (int x2 = 0; x2 < 5; ++x2) {
        double m = 0.0;
        for (int y2 = 0; y2 < 2; ++y2)
          m += p.kernels[0].at(s, a, StateSpace::state(x2, y2));
        EXPECT_NEAR(m, 0.2, 1e-12);
      }
}

TEST(BuildSynthetic, SymmetricDefaultsMakeGroupsExchangeable) {
  const Problem p = build_synthetic({});
  EXPECT_EQ(p.kernels[0].rows, p.kernels[1].rows);
  EXPECT_EQ(p.rewards[0].mean, p.rewards[1].mean);
}

TEST(BuildFico, DefaultBetasAndZeroRejectRow) {
  ScoreDataConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.beta1[0], 0.1);
  EXPECT_DOUBLE_EQ(cfg.beta1[1], 0.9);
  EXPECT_DOUBLE_EQ(cfg.beta2[0], 0.9);
  EXPECT_DOUBLE_EQ(cfg.beta2[1], 0.1);
  const Problem p = build_fico(cfg, standin_empirical());
  // raw reward bounds shared across groups: [-90, 90]
  for (int g = 0; g < 2; ++g) {
    EXPECT_DOUBLE_EQ(p.rewards[g].raw_lo, -90.0);
    EXPECT_DOUBLE_EQ(p.rewards[g].raw_hi, 90.0);
    // a = 0 pays raw zero everywhere, i.e. 0.5 after normalization
    for (int s = 0; s < 10; ++s) EXPECT_DOUBLE_EQ(p.rewards[g].at(s, 0), 0.5);
  }
  // group 0 accepting qualified top score: (0.1 * 100 + 90) / 180
  EXPECT_NEAR(p.rewards[0].at(StateSpace::state(4, 1), 1), 100.0 / 180.0, 1e-12);
  // group 1 accepting unqualified top score: (-0.1 * 100 + 90) / 180
  EXPECT_NEAR(p.rewards[1].at(StateSpace::state(4, 0), 1), 80.0 / 180.0, 1e-12);
}

TEST(BuildFico, KernelComposesMoveTablesWithQualificationCurve) {
  // uniform stand-in: P(x) = 0.2, P(y=1|x) = 0.5
  EmpiricalTables emp;
  emp.groups.push_back({"u1", std::vector<double>(5, 0.2), std::vector<double>(5, 0.5)});
  emp.groups.push_back({"u2", std::vector<double>(5, 0.2), std::vector<double>(5, 0.5)});
  const Problem p = build_fico({}, emp);
  const int s = StateSpace::state(2, 1);
  const std::vector<double> expect = {0.14, 0.18, 0.27, 0.23, 0.18};
  for (int x2 = 0; x2 < 5; ++x2)
    EXPECT_NEAR(p.kernels[0].at(s, 1, StateSpace::state(x2, 1)), expect[x2] * 0.5, 1e-12);
}

TEST(BuildFico, MidScoreAcceptMovesUpMoreThanDown) {
  // shipped tables: from x=2 under a=1, mass on x'=3 exceeds mass on x'=1
  const Problem p = build_fico({}, standin_empirical());
  for (int g = 0; g < 2; ++g)
    for (int y = 0; y < 2; ++y) {
      const int s = StateSpace::state(2, y);
      double up = 0.0, down = 0.0;
      for (int y2 = 0; y2 < 2; ++y2) {
        up += p.kernels[g].at(s, 1, StateSpace::state(3, y2));
        down += p.kernels[g].at(s, 1, StateSpace::state(1, y2));
      }
      EXPECT_GT(up, down);
    }
}

TEST(BuildFico, GeneratedSpecPassesValidationAndReachabilityReport) {
  Problem p = build_fico({}, standin_empirical());
  EXPECT_NO_THROW(validate(p));
  const auto rep = check_reachability(p);
  EXPECT_TRUE(rep.fully_positive());
  EXPECT_GT(rep.min_kernel_entry, 0.0);

  // a qualification curve hitting 1.0 introduces structural zeros: flagged
  EmpiricalTables emp = standin_empirical();
  emp.groups[0].qualify_given_score[4] = 1.0;
  Problem q = build_fico({}, emp);
  EXPECT_NO_THROW(validate(q));
  const auto rep2 = check_reachability(q);
  EXPECT_FALSE(rep2.fully_positive());
  EXPECT_FALSE(rep2.zero_entries.empty());
}

TEST(ScoreReward, BetaRangeEnforced) {
  EXPECT_THROW(score_reward(5, 0.0, 0.5, -50, 50), validation_error);
  EXPECT_THROW(score_reward(5, 0.5, 1.0, -50, 50), validation_error);
}

TEST(EmpiricalFile, MissingFileErrorsWithSchemaHint) {
  try {
    load_empirical_file("/nonexistent/emp.json");
    FAIL() << "expected validation_error";
  } catch (const validation_error& e) {
    EXPECT_NE(std::string(e.what()).find("score_marginal"), std::string::npos);
  }
}

TEST(EmpiricalFile, InvalidSchemaErrorsWithSchemaHint) {
  const std::string path = ::testing::TempDir() + "bad_emp.json";
  {
    std::ofstream out(path);
    out << "{\"groups\": [{\"id\": \"only\"}]}";
  }
  try {
    load_empirical_file(path);
    FAIL() << "expected validation_error";
  } catch (const validation_error& e) {
    EXPECT_NE(std::string(e.what()).find("qualify_given_score"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(EmpiricalFile, ShippedStandinMatchesBuiltIn) {
  const EmpiricalTables shipped =
      load_empirical_file(std::string(STEPFAIR_DATA_DIR) + "/fico_standin.json");
  const EmpiricalTables builtin = standin_empirical();
  ASSERT_EQ(shipped.groups.size(), builtin.groups.size());
  for (std::size_t g = 0; g < builtin.groups.size(); ++g) {
    EXPECT_EQ(shipped.groups[g].id, builtin.groups[g].id);
    EXPECT_EQ(shipped.groups[g].score_marginal, builtin.groups[g].score_marginal);
    EXPECT_EQ(shipped.groups[g].qualify_given_score,
              builtin.groups[g].qualify_given_score);
  }
}

TEST(EmpiricalFile, RoundTripsThroughJson) {
  const EmpiricalTables t = standin_empirical();
  const EmpiricalTables back = empirical_from_json(to_json(t));
  ASSERT_EQ(back.groups.size(), t.groups.size());
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    EXPECT_EQ(back.groups[g].id, t.groups[g].id);
    EXPECT_EQ(back.groups[g].score_marginal, t.groups[g].score_marginal);
    EXPECT_EQ(back.groups[g].qualify_given_score, t.groups[g].qualify_given_score);
  }
}

TEST(ProblemJson, RoundTripsUpToRenormalization) {
  // parsing re-validates, so rows are renormalized a second time; entries
  // agree to the last couple of bits
  const Problem p = build_fico({}, standin_empirical());
  const Problem back = problem_from_json(to_json(p));
  EXPECT_EQ(back.space.feature_count, p.space.feature_count);
  EXPECT_EQ(back.space.horizon, p.space.horizon);
  for (int g = 0; g < 2; ++g) {
    ASSERT_EQ(back.kernels[g].rows.size(), p.kernels[g].rows.size());
    for (std::size_t i = 0; i < p.kernels[g].rows.size(); ++i)
      EXPECT_NEAR(back.kernels[g].rows[i], p.kernels[g].rows[i], 1e-15);
    for (std::size_t i = 0; i < p.kernels[g].init.size(); ++i)
      EXPECT_NEAR(back.kernels[g].init[i], p.kernels[g].init[i], 1e-15);
    EXPECT_EQ(back.rewards[g].mean, p.rewards[g].mean);
    EXPECT_EQ(back.rewards[g].raw_lo, p.rewards[g].raw_lo);
  }
}

TEST(PolicyJson, RoundTripsThroughGroupKeyedSchema) {
  const Problem p = build_synthetic({});
  Policy pi = Policy::constant(2, 8, 5, 0.5);
  pi.at(0, 3, 2) = 0.125;
  pi.at(1, 7, 4) = 0.875;
  const Policy back = policy_from_json(to_json(pi, p.groups.ids), p.groups.ids);
  EXPECT_EQ(back.accept, pi.accept);
}

}  // namespace
