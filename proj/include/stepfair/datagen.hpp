#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "stepfair/core.hpp"

namespace stepfair {

// Score levels behind feature indices 0..4: the reward scales with the score
// value, not the index.
inline constexpr std::array<double, 5> kScoreLevels = {0.0, 25.0, 50.0, 75.0, 100.0};

// Score-dependent reward, then affinely normalized to [0, 1] with bounds
// shared across groups so the population objective stays comparable:
//   raw = beta1 * score(x) if y=1,a=1;  -beta2 * score(x) if y=0,a=1;  0 if a=0.
inline RewardModel score_reward(int features, double beta1, double beta2,
                                double shared_lo, double shared_hi) {
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw validation_error("score_reward: beta parameters must lie in (0,1)");
  RewardModel r;
  r.feature_count = features;
  r.raw_lo = shared_lo;
  r.raw_hi = shared_hi;
  r.mean.assign(static_cast<std::size_t>(2 * features) * kActions, 0.0);
  const double span = shared_hi - shared_lo;
  for (int x = 0; x < features; ++x) {
    const double score = x < static_cast<int>(kScoreLevels.size())
                             ? kScoreLevels[x]
                             : 100.0 * x / std::max(1, features - 1);
    for (int y = 0; y < 2; ++y) {
      const int s = StateSpace::state(x, y);
      const double raw1 = y == 1 ? beta1 * score : -beta2 * score;
      r.at(s, 1) = (raw1 - shared_lo) / span;
      r.at(s, 0) = (0.0 - shared_lo) / span;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic instance: kernel factorized as p(y'|y,a) * p(x'|x,y') with the
// qualification flip depending only on the decision, and feature moves given
// by per-feature distributions shared across groups.

struct SyntheticConfig {
  int feature_count = 5;
  int horizon = 8;
  int group_count = 2;
  std::vector<double> proportions;            // default uniform
  double qual_up_accept = 0.6;                // p(y'=1 | y, a=1)
  double qual_up_reject = 0.4;                // p(y'=1 | y, a=0)
  std::vector<std::vector<double>> feature_move;  // [x][x'], default tables below
  // P(y_0 = 1); the initial feature is uniform given y_0.  No canonical value
  // exists for this, so it is an explicit config field.
  double init_qual_prob = 0.5;
  // Reward parameters per group; symmetric defaults keep the two groups
  // exchangeable, which is the regime where desk-scale fairness violations
  // can actually shrink with data.
  std::vector<double> beta1, beta2;
};

inline std::vector<std::vector<double>> default_feature_move() {
  return {{0.30, 0.25, 0.20, 0.15, 0.10},
          {0.22, 0.26, 0.22, 0.17, 0.13},
          {0.17, 0.21, 0.24, 0.21, 0.17},
          {0.13, 0.17, 0.22, 0.26, 0.22},
          {0.10, 0.15, 0.20, 0.25, 0.30}};
}

inline Problem build_synthetic(SyntheticConfig cfg) {
  if (cfg.feature_move.empty()) cfg.feature_move = default_feature_move();
  if (cfg.proportions.empty())
    cfg.proportions.assign(cfg.group_count, 1.0 / cfg.group_count);
  if (cfg.beta1.empty()) cfg.beta1.assign(cfg.group_count, 0.5);
  if (cfg.beta2.empty()) cfg.beta2.assign(cfg.group_count, 0.5);
  const int X = cfg.feature_count;
  if (static_cast<int>(cfg.feature_move.size()) != X)
    throw validation_error("build_synthetic: need one feature-move row per feature");
  if (!(cfg.init_qual_prob >= 0.0 && cfg.init_qual_prob <= 1.0))
    throw validation_error("build_synthetic: init_qual_prob outside [0,1]");

  Problem p;
  p.space.feature_count = X;
  p.space.horizon = cfg.horizon;
  p.groups.proportions = cfg.proportions;
  double b1max = 0.0, b2max = 0.0;
  for (int g = 0; g < cfg.group_count; ++g) {
    p.groups.ids.push_back("g" + std::to_string(g));
    b1max = std::max(b1max, cfg.beta1[g]);
    b2max = std::max(b2max, cfg.beta2[g]);
  }
  const double lo = -b2max * 100.0, hi = b1max * 100.0;
  const int S = 2 * X;
  for (int g = 0; g < cfg.group_count; ++g) {
    TransitionKernel k;
    k.feature_count = X;
    k.rows.assign(static_cast<std::size_t>(S) * kActions * S, 0.0);
    k.init.assign(S, 0.0);
    for (int x = 0; x < X; ++x) {
      k.init[StateSpace::state(x, 1)] = cfg.init_qual_prob / X;
      k.init[StateSpace::state(x, 0)] = (1.0 - cfg.init_qual_prob) / X;
    }
    for (int s = 0; s < S; ++s) {
      const int x = StateSpace::x_of(s);
      for (int a = 0; a < kActions; ++a) {
        const double up = a == 1 ? cfg.qual_up_accept : cfg.qual_up_reject;
        for (int x2 = 0; x2 < X; ++x2)
          for (int y2 = 0; y2 < 2; ++y2)
            k.at(s, a, StateSpace::state(x2, y2)) =
                (y2 == 1 ? up : 1.0 - up) * cfg.feature_move[x][x2];
      }
    }
    p.kernels.push_back(std::move(k));
    p.rewards.push_back(score_reward(X, cfg.beta1[g], cfg.beta2[g], lo, hi));
  }
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Score-data instance: empirical score marginal and qualification-given-score
// tables drive both the entry distribution and the y' component of the
// kernel; the x' component comes from decision-dependent move tables.

struct EmpiricalTables {
  struct Group {
    std::string id;
    std::vector<double> score_marginal;       // P(x = j), 5 levels
    std::vector<double> qualify_given_score;  // P(y = 1 | x = j)
  };
  std::vector<Group> groups;
};

// Clearly-labeled synthetic stand-in for the real empirical score tables
// (which are not shipped); the two groups differ in both the score marginal
// and the qualification curve.
inline EmpiricalTables standin_empirical() {
  EmpiricalTables t;
  t.groups.push_back({"standin-a",
                      {0.10, 0.20, 0.30, 0.25, 0.15},
                      {0.15, 0.35, 0.55, 0.75, 0.90}});
  t.groups.push_back({"standin-b",
                      {0.25, 0.30, 0.25, 0.12, 0.08},
                      {0.10, 0.25, 0.45, 0.65, 0.85}});
  return t;
}

// Feature-move vectors G[x][x'] for qualification y and decision a.
inline std::vector<std::vector<double>> score_feature_move(int y, int a) {
  if (a == 1) {
    // under a=1 the y=1 and y=0 tables differ only in the top-score row
    if (y == 1)
      return {{0.30, 0.25, 0.20, 0.15, 0.10},
              {0.18, 0.27, 0.23, 0.18, 0.14},
              {0.14, 0.18, 0.27, 0.23, 0.18},
              {0.10, 0.15, 0.20, 0.30, 0.25},
              {0.06, 0.13, 0.19, 0.24, 0.38}};
    return {{0.30, 0.25, 0.20, 0.15, 0.10},
            {0.18, 0.27, 0.23, 0.18, 0.14},
            {0.14, 0.18, 0.27, 0.23, 0.18},
            {0.10, 0.15, 0.20, 0.30, 0.25},
            {0.10, 0.15, 0.20, 0.25, 0.30}};
  }
  return {{0.38, 0.24, 0.19, 0.13, 0.06},
          {0.25, 0.30, 0.20, 0.15, 0.10},
          {0.18, 0.23, 0.27, 0.18, 0.14},
          {0.14, 0.18, 0.23, 0.27, 0.18},
          {0.10, 0.15, 0.20, 0.25, 0.30}};
}

struct ScoreDataConfig {
  int horizon = 8;
  std::vector<double> proportions;        // default uniform
  std::vector<double> beta1 = {0.1, 0.9};
  std::vector<double> beta2 = {0.9, 0.1};
};

inline Problem build_fico(const ScoreDataConfig& cfg, const EmpiricalTables& emp) {
  const int q = static_cast<int>(emp.groups.size());
  if (q < 2) throw validation_error("build_fico: need at least two groups");
  constexpr int X = 5;
  for (const auto& g : emp.groups)
    if (g.score_marginal.size() != X || g.qualify_given_score.size() != X)
      throw validation_error(
          "build_fico: empirical tables need 5 score levels per group "
          "(score_marginal and qualify_given_score)");
  if (static_cast<int>(cfg.beta1.size()) != q || static_cast<int>(cfg.beta2.size()) != q)
    throw validation_error("build_fico: need beta parameters per group");

  Problem p;
  p.space.feature_count = X;
  p.space.horizon = cfg.horizon;
  p.groups.proportions =
      cfg.proportions.empty() ? std::vector<double>(q, 1.0 / q) : cfg.proportions;
  double b1max = 0.0, b2max = 0.0;
  for (int g = 0; g < q; ++g) {
    p.groups.ids.push_back(emp.groups[g].id);
    b1max = std::max(b1max, cfg.beta1[g]);
    b2max = std::max(b2max, cfg.beta2[g]);
  }
  const double lo = -b2max * 100.0, hi = b1max * 100.0;
  const int S = 2 * X;
  for (int g = 0; g < q; ++g) {
    const auto& eg = emp.groups[g];
    TransitionKernel k;
    k.feature_count = X;
    k.rows.assign(static_cast<std::size_t>(S) * kActions * S, 0.0);
    k.init.assign(S, 0.0);
    for (int x = 0; x < X; ++x) {
      k.init[StateSpace::state(x, 1)] = eg.score_marginal[x] * eg.qualify_given_score[x];
      k.init[StateSpace::state(x, 0)] =
          eg.score_marginal[x] * (1.0 - eg.qualify_given_score[x]);
    }
    for (int s = 0; s < S; ++s) {
      const int x = StateSpace::x_of(s);
      const int y = StateSpace::y_of(s);
      for (int a = 0; a < kActions; ++a) {
        const auto move = score_feature_move(y, a);
        for (int x2 = 0; x2 < X; ++x2) {
          const double qx2 = eg.qualify_given_score[x2];
          k.at(s, a, StateSpace::state(x2, 1)) = move[x][x2] * qx2;
          k.at(s, a, StateSpace::state(x2, 0)) = move[x][x2] * (1.0 - qx2);
        }
      }
    }
    p.kernels.push_back(std::move(k));
    p.rewards.push_back(score_reward(X, cfg.beta1[g], cfg.beta2[g], lo, hi));
  }
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Reachability report: the learning analysis wants every kernel entry
// positive.  Factorized kernels can carry structural zeros when the
// qualification curve hits 0 or 1; those are flagged, not rejected.

struct KernelReport {
  double min_kernel_entry = 1.0;
  double min_init_entry = 1.0;
  struct Zero {
    int group, s, a, s2;
  };
  std::vector<Zero> zero_entries;
  bool fully_positive() const { return zero_entries.empty() && min_init_entry > 0.0; }
};

inline KernelReport check_reachability(const Problem& p) {
  KernelReport rep;
  const int S = p.space.state_count();
  for (int g = 0; g < p.group_count(); ++g) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < kActions; ++a)
        for (int s2 = 0; s2 < S; ++s2) {
          const double v = p.kernels[g].at(s, a, s2);
          rep.min_kernel_entry = std::min(rep.min_kernel_entry, v);
          if (v <= 0.0) rep.zero_entries.push_back({g, s, a, s2});
        }
    for (int s = 0; s < S; ++s)
      rep.min_init_entry = std::min(rep.min_init_entry, p.kernels[g].init[s]);
  }
  return rep;
}

}  // namespace stepfair
