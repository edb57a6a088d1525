#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "stepfair/core.hpp"
#include "stepfair/solve.hpp"

namespace stepfair {

struct StepViolation {
  std::vector<double> per_step;
  double mean = 0.0;
};

namespace metrics_detail {

template <class Gap>
StepViolation pairwise_violation(const Problem& p, const OccupancyMeasure& occ, Gap gap) {
  const int H = p.space.horizon;
  const int q = p.group_count();
  StepViolation v;
  v.per_step.assign(H, 0.0);
  for (int h = 0; h < H; ++h) {
    double worst = 0.0;
    for (int i = 0; i < q; ++i)
      for (int j = i + 1; j < q; ++j)
        worst = std::max(worst, std::abs(gap(occ, i, h) - gap(occ, j, h)));
    v.per_step[h] = worst;
    v.mean += worst / H;
  }
  return v;
}

}  // namespace metrics_detail

// Per-step DP violation of a policy under the TRUE kernel: for each h the
// worst pairwise |P(a=1)| gap; mean over steps is the tracked scalar.
inline StepViolation violation_dp(const Problem& p, const Policy& pi) {
  const auto occ = forward_occupancy(p, pi);
  return metrics_detail::pairwise_violation(
      p, occ, [](const OccupancyMeasure& o, int g, int h) {
        return action_marginal(o, g, h);
      });
}

inline StepViolation violation_eqopt(const Problem& p, const Policy& pi) {
  const auto occ = forward_occupancy(p, pi);
  return metrics_detail::pairwise_violation(
      p, occ, [](const OccupancyMeasure& o, int g, int h) {
        return eqopt_conditional(o, g, h);
      });
}

// Per-episode reward regret (1/H) sum_h (R_h(comparator) - R_h(policy)),
// both evaluated exactly under the true kernel.
inline double reward_regret(const Problem& p, const Policy& pi, const Policy& comparator) {
  const auto r_pi = expected_reward_profile(forward_occupancy(p, pi), p);
  const auto r_star = expected_reward_profile(forward_occupancy(p, comparator), p);
  double acc = 0.0;
  for (int h = 0; h < p.space.horizon; ++h) acc += r_star[h] - r_pi[h];
  return acc / p.space.horizon;
}

// True constrained optimum used as the regret comparator: a tight-tolerance
// multi-start solve against the true kernel with (numerically) zero slack.
inline Policy constrained_comparator(const Problem& p, ConstraintKind kind,
                                     int restarts = 32, std::uint64_t seed = 0) {
  SolveOptions opt;
  opt.restarts = restarts;
  opt.seed = seed;
  opt.inner_tol = 1e-9;
  opt.max_inner = 1200;
  if (kind == ConstraintKind::none)
    return solve_unconstrained(true_solve_model(p), 0.0).policy;
  SolveProblem sp;
  sp.model = true_solve_model(p);
  sp.kind = kind;
  sp.eta = 0.0;
  sp.bound.assign(p.space.horizon, opt.feas_tol);
  return solve_constrained(sp, opt).policy;
}

// Mean, sample sd, and a 95% normal band per checkpoint across seeds.
struct SeriesSummary {
  std::vector<double> mean, sd, ci_lo, ci_hi;
};

inline SeriesSummary aggregate(const std::vector<std::vector<double>>& runs) {
  if (runs.size() < 2) throw precondition_error("aggregate: need at least 2 seeds");
  const std::size_t n = runs.front().size();
  for (const auto& r : runs)
    if (r.size() != n) throw shape_error("aggregate: ragged series");
  const double R = static_cast<double>(runs.size());
  SeriesSummary s;
  s.mean.assign(n, 0.0);
  s.sd.assign(n, 0.0);
  s.ci_lo.assign(n, 0.0);
  s.ci_hi.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (const auto& r : runs) m += r[i];
    m /= R;
    double ss = 0.0;
    for (const auto& r : runs) ss += (r[i] - m) * (r[i] - m);
    const double sd = std::sqrt(ss / (R - 1.0));
    const double half = 1.96 * sd / std::sqrt(R);
    s.mean[i] = m;
    s.sd[i] = sd;
    s.ci_lo[i] = m - half;
    s.ci_hi[i] = m + half;
  }
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw precondition_error("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace stepfair
