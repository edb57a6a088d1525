#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "stepfair/core.hpp"
#include "stepfair/estimate.hpp"
#include "stepfair/rng.hpp"

namespace stepfair {

enum class ConstraintKind { none, dp, eqopt, dp_penalty, eqopt_penalty };

inline bool is_penalty(ConstraintKind k) {
  return k == ConstraintKind::dp_penalty || k == ConstraintKind::eqopt_penalty;
}
inline bool is_eqopt_like(ConstraintKind k) {
  return k == ConstraintKind::eqopt || k == ConstraintKind::eqopt_penalty;
}

inline std::string constraint_kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::none: return "unconstrained";
    case ConstraintKind::dp: return "constrained-DP";
    case ConstraintKind::eqopt: return "constrained-EqOpt";
    case ConstraintKind::dp_penalty: return "penalty-DP";
    case ConstraintKind::eqopt_penalty: return "penalty-EqOpt";
  }
  return "?";
}

// The quantities a solve runs against: kernel and reward may be estimated
// (optimistic) or true; initial distributions and group proportions are
// treated as known.
struct SolveModel {
  StateSpace space;
  std::vector<double> proportions;
  std::vector<std::vector<double>> kernel;  // [g] rows (s, a) -> s'
  std::vector<std::vector<double>> init;    // [g][s]
  std::vector<std::vector<double>> reward;  // [g][s * A + a]

  int group_count() const { return static_cast<int>(kernel.size()); }
  const double* row(int g, int s, int a) const {
    return kernel[g].data() +
           (static_cast<std::size_t>(s) * kActions + a) * space.state_count();
  }
  double reward_at(int g, int s, int a) const {
    return reward[g][static_cast<std::size_t>(s) * kActions + a];
  }
};

inline SolveModel true_solve_model(const Problem& p) {
  SolveModel m;
  m.space = p.space;
  m.proportions = p.groups.proportions;
  m.kernel.reserve(p.group_count());
  m.init.reserve(p.group_count());
  m.reward.reserve(p.group_count());
  for (int g = 0; g < p.group_count(); ++g) {
    m.kernel.push_back(p.kernels[g].rows);
    m.init.push_back(p.kernels[g].init);
    m.reward.push_back(p.rewards[g].mean);
  }
  return m;
}

enum class RewardChoice {
  empirical,  // r_hat: the occupancy-program objective the pipeline solves
  optimistic  // r_hat + bonus: upper-bounds the true value, used for analysis
};

// Estimated kernel plus the chosen reward; initials and proportions come from
// the ground-truth spec (they are treated as known).  The experiment pipeline
// solves under the empirical reward: at small per-episode samples the bonus
// term dwarfs the reward scale and its group-specific noise would dominate
// the solved policies.
inline SolveModel estimated_solve_model(const Problem& p, const EstimatedModel& est,
                                        RewardChoice choice = RewardChoice::empirical) {
  if (est.feature_count != p.space.feature_count || est.group_count() != p.group_count())
    throw shape_error("estimated_solve_model: model shape mismatch");
  SolveModel m = true_solve_model(p);
  m.kernel = est.kernel;
  m.reward = choice == RewardChoice::optimistic ? est.r_opt : est.r_hat;
  return m;
}

struct SolveProblem {
  SolveModel model;
  ConstraintKind kind = ConstraintKind::dp;
  std::vector<double> bound;  // per-step relaxation, constrained kinds only
  double eta = 0.0;           // policy box pi(a|x) in [eta, 1 - eta]
  double lambda = 0.0;        // penalty weight, penalty kinds only
};

struct SolveOptions {
  int restarts = 8;
  int max_outer = 12;
  int max_inner = 400;
  double inner_tol = 1e-7;
  double feas_tol = 1e-5;
  double mu0 = 10.0;
  double mu_growth = 10.0;
  std::uint64_t seed = 0;
  bool keep_traces = false;
};

struct OuterTraceRow {
  int restart = 0;
  int outer = 0;
  double objective = 0.0;
  double max_violation = 0.0;
  double mu = 0.0;
  double multiplier_max = 0.0;
};

struct SolveResult {
  Policy policy;
  double objective = 0.0;      // sum_h R_h under the solve model
  double max_violation = 0.0;  // worst per-step slack in ratio form
  bool feasible = false;
  int selected_restart = 0;
  int restarts_used = 0;
  long iterations = 0;
  double final_mu = 0.0;
  std::vector<double> multipliers;
  std::vector<OuterTraceRow> traces;  // populated when keep_traces
};

inline void write_solve_trace_csv(const SolveResult& res, std::ostream& out,
                                  bool header = true) {
  if (header) out << "restart,outer,objective,max_violation,mu,multiplier_max\n";
  char buf[160];
  for (const auto& row : res.traces) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.12g,%.12g,%.12g,%.12g\n", row.restart,
                  row.outer, row.objective, row.max_violation, row.mu,
                  row.multiplier_max);
    out << buf;
  }
}

namespace solver_detail {

// Values (and optionally adjoint gradients) of everything the programs need
// at one policy iterate, per group: the group objective, the per-step accept
// marginal m_h, and the qualified-accept / qualified masses u_h, w_h.
struct GroupEval {
  std::vector<double> d;  // state marginals, H * S
  double objective = 0.0;
  std::vector<double> obj_grad;             // H * X
  std::vector<double> m;                    // H
  std::vector<double> u, w;                 // H
  std::vector<std::vector<double>> m_grad;  // [h][H * X]
  std::vector<std::vector<double>> u_grad, w_grad;
};

inline std::vector<double> marginals(const SolveModel& M, int g, const double* theta) {
  const int S = M.space.state_count();
  const int X = M.space.feature_count;
  const int H = M.space.horizon;
  std::vector<double> d(static_cast<std::size_t>(H) * S, 0.0);
  for (int s = 0; s < S; ++s) d[s] = M.init[g][s];
  for (int h = 0; h + 1 < H; ++h) {
    const double* dh = d.data() + static_cast<std::size_t>(h) * S;
    double* dn = d.data() + static_cast<std::size_t>(h + 1) * S;
    for (int s = 0; s < S; ++s) {
      if (dh[s] == 0.0) continue;
      const double p1 = theta[static_cast<std::size_t>(h) * X + StateSpace::x_of(s)];
      for (int a = 0; a < kActions; ++a) {
        const double wgt = dh[s] * (a == 1 ? p1 : 1.0 - p1);
        if (wgt == 0.0) continue;
        const double* row = M.row(g, s, a);
        for (int s2 = 0; s2 < S; ++s2) dn[s2] += wgt * row[s2];
      }
    }
  }
  return d;
}

// Adjoint gradient of the linear functional with step weights c(h, s, a):
//   F = sum_h sum_s d_h(s) sum_a pi_h(a|x(s)) c(h, s, a).
// Backward recursion over lambda_h(s); dF/dtheta_{h,x} weights the local
// advantage of a = 1 by the occupancy reaching (h, x).
template <class Weight>
void functional_grad(const SolveModel& M, int g, const double* theta,
                     const std::vector<double>& d, int top_step, Weight c,
                     std::vector<double>& grad) {
  const int S = M.space.state_count();
  const int X = M.space.feature_count;
  const int H = M.space.horizon;
  grad.assign(static_cast<std::size_t>(H) * X, 0.0);
  std::vector<double> lam(S, 0.0), lam_prev(S, 0.0);
  for (int h = std::min(top_step, H - 1); h >= 0; --h) {
    const double* dh = d.data() + static_cast<std::size_t>(h) * S;
    for (int s = 0; s < S; ++s) {
      double qq[kActions];
      for (int a = 0; a < kActions; ++a) {
        double backup = c(h, s, a);
        if (h + 1 < H) {
          const double* row = M.row(g, s, a);
          for (int s2 = 0; s2 < S; ++s2) backup += row[s2] * lam[s2];
        }
        qq[a] = backup;
      }
      const int x = StateSpace::x_of(s);
      grad[static_cast<std::size_t>(h) * X + x] += dh[s] * (qq[1] - qq[0]);
      const double p1 = theta[static_cast<std::size_t>(h) * X + x];
      lam_prev[s] = p1 * qq[1] + (1.0 - p1) * qq[0];
    }
    std::swap(lam, lam_prev);
  }
}

inline GroupEval evaluate_group(const SolveModel& M, int g, const double* theta,
                                ConstraintKind kind, bool with_grad) {
  const int S = M.space.state_count();
  const int X = M.space.feature_count;
  const int H = M.space.horizon;
  GroupEval ev;
  ev.d = marginals(M, g, theta);
  ev.m.assign(H, 0.0);
  ev.u.assign(H, 0.0);
  ev.w.assign(H, 0.0);
  for (int h = 0; h < H; ++h) {
    const double* dh = ev.d.data() + static_cast<std::size_t>(h) * S;
    double obj_h = 0.0;
    for (int s = 0; s < S; ++s) {
      const double p1 = theta[static_cast<std::size_t>(h) * X + StateSpace::x_of(s)];
      obj_h += dh[s] * (p1 * M.reward_at(g, s, 1) + (1.0 - p1) * M.reward_at(g, s, 0));
      ev.m[h] += dh[s] * p1;
      if (StateSpace::y_of(s) == 1) {
        ev.u[h] += dh[s] * p1;
        ev.w[h] += dh[s];
      }
    }
    ev.objective += obj_h;
  }
  if (!with_grad) return ev;

  functional_grad(
      M, g, theta, ev.d, H - 1,
      [&](int, int s, int a) { return M.reward_at(g, s, a); }, ev.obj_grad);
  const bool eq = is_eqopt_like(kind);
  const bool dp = kind == ConstraintKind::dp || kind == ConstraintKind::dp_penalty;
  if (dp) {
    ev.m_grad.resize(H);
    for (int h = 0; h < H; ++h)
      functional_grad(
          M, g, theta, ev.d, h,
          [&](int hh, int, int a) { return (hh == h && a == 1) ? 1.0 : 0.0; },
          ev.m_grad[h]);
  } else if (eq) {
    ev.u_grad.resize(H);
    ev.w_grad.resize(H);
    for (int h = 0; h < H; ++h) {
      functional_grad(
          M, g, theta, ev.d, h,
          [&](int hh, int s, int a) {
            return (hh == h && a == 1 && StateSpace::y_of(s) == 1) ? 1.0 : 0.0;
          },
          ev.u_grad[h]);
      functional_grad(
          M, g, theta, ev.d, h,
          [&](int hh, int s, int) {
            return (hh == h && StateSpace::y_of(s) == 1) ? 1.0 : 0.0;
          },
          ev.w_grad[h]);
    }
  }
  return ev;
}

struct Evaluation {
  double objective = 0.0;  // population objective sum_g prop_g * obj_g
  std::vector<GroupEval> groups;
};

inline Evaluation evaluate(const SolveModel& M, const std::vector<double>& theta,
                           ConstraintKind kind, bool with_grad) {
  const int X = M.space.feature_count;
  const int H = M.space.horizon;
  Evaluation ev;
  ev.groups.reserve(M.group_count());
  for (int g = 0; g < M.group_count(); ++g) {
    ev.groups.push_back(evaluate_group(
        M, g, theta.data() + static_cast<std::size_t>(g) * H * X, kind, with_grad));
    ev.objective += M.proportions[g] * ev.groups.back().objective;
  }
  return ev;
}

inline std::vector<std::pair<int, int>> group_pairs(int q) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) out.emplace_back(i, j);
  return out;
}

struct ViolationReport {
  double slack = 0.0;  // worst per-step gap minus bound, clamped at 0
  double gap = 0.0;    // worst per-step gap against a zero bound
};

// Worst per-step constraint slack of the iterate, in ratio form.
inline ViolationReport report_violation(const Evaluation& ev, ConstraintKind kind,
                                        const std::vector<double>& bound) {
  const int H = static_cast<int>(ev.groups[0].m.size());
  const auto pairs = group_pairs(static_cast<int>(ev.groups.size()));
  ViolationReport rep;
  double worst = -1e300;
  for (int h = 0; h < H; ++h)
    for (const auto& [i, j] : pairs) {
      double gap;
      if (is_eqopt_like(kind)) {
        const double wi = ev.groups[i].w[h], wj = ev.groups[j].w[h];
        if (wi <= kDenominatorFloor || wj <= kDenominatorFloor)
          throw degenerate_conditioning("solver: qualified mass vanished at step " +
                                            std::to_string(h),
                                        std::min(wi, wj));
        gap = std::abs(ev.groups[i].u[h] / wi - ev.groups[j].u[h] / wj);
      } else {
        gap = std::abs(ev.groups[i].m[h] - ev.groups[j].m[h]);
      }
      rep.gap = std::max(rep.gap, gap);
      worst = std::max(worst, gap - (bound.empty() ? 0.0 : bound[h]));
    }
  rep.slack = std::max(worst, 0.0);
  return rep;
}

// One-sided constraints g_j <= 0; for EqOpt in cross-multiplied form scaled
// by a normalizer frozen at the current outer iterate.
struct ConstraintSystem {
  ConstraintKind kind = ConstraintKind::dp;
  std::vector<double> bound;
  std::vector<std::pair<int, int>> pairs;
  int horizon = 0;
  std::vector<std::vector<double>> nu;  // [h][pair], EqOpt scaling

  int count() const {
    return 2 * horizon * static_cast<int>(pairs.size());
  }
  // j = ((h * pairs + p) * 2 + sgn)
  void decode(int j, int& h, int& p, double& sign) const {
    sign = (j & 1) ? -1.0 : 1.0;
    j >>= 1;
    p = j % static_cast<int>(pairs.size());
    h = j / static_cast<int>(pairs.size());
  }

  void refresh_normalizers(const Evaluation& ev) {
    if (!is_eqopt_like(kind)) return;
    nu.assign(horizon, std::vector<double>(pairs.size(), 1.0));
    for (int h = 0; h < horizon; ++h)
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double wi = ev.groups[pairs[p].first].w[h];
        const double wj = ev.groups[pairs[p].second].w[h];
        nu[h][p] = std::max(wi * wj, 1e-12);
      }
  }

  double value(const Evaluation& ev, int j) const {
    int h, p;
    double sign;
    decode(j, h, p, sign);
    const auto& gi = ev.groups[pairs[p].first];
    const auto& gj = ev.groups[pairs[p].second];
    if (is_eqopt_like(kind)) {
      const double cross = gi.u[h] * gj.w[h] - gj.u[h] * gi.w[h];
      return (sign * cross - bound[h] * gi.w[h] * gj.w[h]) / nu[h][p];
    }
    return sign * (gi.m[h] - gj.m[h]) - bound[h];
  }

  // grad += coef * dg_j/dtheta, written into the full parameter vector.
  void add_gradient(const Evaluation& ev, int j, double coef, int block_size,
                    std::vector<double>& grad) const {
    int h, p;
    double sign;
    decode(j, h, p, sign);
    const int gi = pairs[p].first, gj = pairs[p].second;
    const auto& a = ev.groups[gi];
    const auto& b = ev.groups[gj];
    double* ga = grad.data() + static_cast<std::size_t>(gi) * block_size;
    double* gb = grad.data() + static_cast<std::size_t>(gj) * block_size;
    if (is_eqopt_like(kind)) {
      const double scale = coef / nu[h][p];
      for (int t = 0; t < block_size; ++t) {
        ga[t] += scale * (sign * (b.w[h] * a.u_grad[h][t] - b.u[h] * a.w_grad[h][t]) -
                          bound[h] * b.w[h] * a.w_grad[h][t]);
        gb[t] += scale * (sign * (a.u[h] * b.w_grad[h][t] - a.w[h] * b.u_grad[h][t]) -
                          bound[h] * a.w[h] * b.w_grad[h][t]);
      }
    } else {
      for (int t = 0; t < block_size; ++t) {
        ga[t] += coef * sign * a.m_grad[h][t];
        gb[t] -= coef * sign * b.m_grad[h][t];
      }
    }
  }
};

struct AugLagState {
  std::vector<double> lambda;
  double mu = 10.0;
};

// Merit maximized by the inner loop: objective minus the PHR penalty terms
// (augmented-Lagrangian) or minus the squared fairness penalty.
struct Merit {
  const SolveModel* model = nullptr;
  ConstraintKind kind = ConstraintKind::none;
  const ConstraintSystem* cons = nullptr;  // constrained kinds
  const AugLagState* al = nullptr;
  double penalty_lambda = 0.0;  // penalty kinds
  // tie-polish weight: pulls along (near-)flat objective plateaus toward a
  // smaller fairness gap without materially trading objective
  double tie_lambda = 0.0;

  double squared_gap_term(const Evaluation& ev, int h, int i, int j) const {
    const auto& a = ev.groups[i];
    const auto& b = ev.groups[j];
    const double t = is_eqopt_like(kind) ? a.u[h] * b.w[h] - b.u[h] * a.w[h]
                                         : a.m[h] - b.m[h];
    return t;
  }

  double value(const Evaluation& ev) const {
    double L = ev.objective;
    if (cons && al) {
      for (int j = 0; j < cons->count(); ++j) {
        const double gj = cons->value(ev, j);
        const double t = std::max(0.0, al->lambda[j] + al->mu * gj);
        L -= (t * t - al->lambda[j] * al->lambda[j]) / (2.0 * al->mu);
      }
    }
    const double lam = is_penalty(kind) ? penalty_lambda : tie_lambda;
    if (lam > 0.0) {
      const int H = model->space.horizon;
      const auto pairs = group_pairs(model->group_count());
      for (int h = 0; h < H; ++h)
        for (const auto& [i, j] : pairs) {
          const double t = squared_gap_term(ev, h, i, j);
          L -= lam * t * t;
        }
    }
    return L;
  }

  std::vector<double> gradient(const Evaluation& ev) const {
    const int H = model->space.horizon;
    const int X = model->space.feature_count;
    const int block = H * X;
    std::vector<double> grad(static_cast<std::size_t>(model->group_count()) * block, 0.0);
    for (int g = 0; g < model->group_count(); ++g) {
      const double wg = model->proportions[g];
      double* out = grad.data() + static_cast<std::size_t>(g) * block;
      for (int t = 0; t < block; ++t) out[t] = wg * ev.groups[g].obj_grad[t];
    }
    if (cons && al) {
      for (int j = 0; j < cons->count(); ++j) {
        const double y = std::max(0.0, al->lambda[j] + al->mu * cons->value(ev, j));
        if (y != 0.0) cons->add_gradient(ev, j, -y, block, grad);
      }
    }
    const double lam = is_penalty(kind) ? penalty_lambda : tie_lambda;
    if (lam > 0.0) {
      const auto pairs = group_pairs(model->group_count());
      for (int h = 0; h < H; ++h)
        for (const auto& [i, j] : pairs) {
          const auto& a = ev.groups[i];
          const auto& b = ev.groups[j];
          double* ga = grad.data() + static_cast<std::size_t>(i) * block;
          double* gb = grad.data() + static_cast<std::size_t>(j) * block;
          const double c = -2.0 * lam * squared_gap_term(ev, h, i, j);
          if (is_eqopt_like(kind)) {
            for (int p = 0; p < block; ++p) {
              ga[p] += c * (b.w[h] * a.u_grad[h][p] - b.u[h] * a.w_grad[h][p]);
              gb[p] += c * (a.u[h] * b.w_grad[h][p] - a.w[h] * b.u_grad[h][p]);
            }
          } else {
            for (int p = 0; p < block; ++p) {
              ga[p] += c * a.m_grad[h][p];
              gb[p] -= c * b.m_grad[h][p];
            }
          }
        }
    }
    return grad;
  }
};

inline void project_box(std::vector<double>& theta, double eta) {
  for (double& v : theta) v = std::clamp(v, eta, 1.0 - eta);
}

struct InnerResult {
  double merit = 0.0;
  long iterations = 0;
};

// Projected gradient ascent with backtracking line search on the merit.
inline InnerResult inner_maximize(const SolveModel& M, const Merit& merit,
                                  std::vector<double>& theta, double eta,
                                  const SolveOptions& opt) {
  auto value_at = [&](const std::vector<double>& th) {
    return merit.value(evaluate(M, th, merit.kind, false));
  };
  Evaluation ev = evaluate(M, theta, merit.kind, true);
  double L = merit.value(ev);
  double alpha = 1.0;
  InnerResult res;
  for (int it = 0; it < opt.max_inner; ++it) {
    const std::vector<double> grad = merit.gradient(ev);
    double pg = 0.0;
    for (std::size_t t = 0; t < theta.size(); ++t) {
      const double moved = std::clamp(theta[t] + grad[t], eta, 1.0 - eta);
      pg = std::max(pg, std::abs(moved - theta[t]));
    }
    if (pg <= opt.inner_tol) break;
    bool accepted = false;
    std::vector<double> trial(theta.size());
    while (alpha >= 1e-14) {
      double dirderiv = 0.0;
      for (std::size_t t = 0; t < theta.size(); ++t) {
        trial[t] = std::clamp(theta[t] + alpha * grad[t], eta, 1.0 - eta);
        dirderiv += grad[t] * (trial[t] - theta[t]);
      }
      if (dirderiv <= 0.0) break;  // fully blocked by the box
      const double Lt = value_at(trial);
      ++res.iterations;
      if (Lt >= L + 1e-4 * dirderiv) {
        theta = trial;
        L = Lt;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    alpha = std::min(alpha * 2.0, 64.0);
    ev = evaluate(M, theta, merit.kind, true);
  }
  res.merit = L;
  return res;
}

inline void check_eqopt_conditioning(const SolveModel& M) {
  const int S = M.space.state_count();
  for (int g = 0; g < M.group_count(); ++g) {
    double init_y1 = 0.0;
    for (int s = 0; s < S; ++s)
      if (StateSpace::y_of(s) == 1) init_y1 += M.init[g][s];
    double pmin = 1.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < kActions; ++a) {
        const double* row = M.row(g, s, a);
        double y1 = 0.0;
        for (int s2 = 0; s2 < S; ++s2)
          if (StateSpace::y_of(s2) == 1) y1 += row[s2];
        pmin = std::min(pmin, y1);
      }
    const double floor = std::min(init_y1, pmin);
    if (floor <= kDenominatorFloor)
      throw degenerate_conditioning(
          "eqopt solve: qualified-successor mass below floor for group " +
              std::to_string(g),
          floor);
  }
}

inline Policy theta_to_policy(const SolveModel& M, const std::vector<double>& theta) {
  const int H = M.space.horizon;
  const int X = M.space.feature_count;
  Policy pi;
  pi.feature_count = X;
  pi.horizon = H;
  pi.accept.resize(M.group_count());
  for (int g = 0; g < M.group_count(); ++g)
    pi.accept[g].assign(theta.begin() + static_cast<std::ptrdiff_t>(g) * H * X,
                        theta.begin() + static_cast<std::ptrdiff_t>(g + 1) * H * X);
  return pi;
}

}  // namespace solver_detail

// Box-greedy backward induction baseline.  Q and V come from the classic
// per-state recursion with the box mixture; the returned x-measurable policy
// is then read off forward, weighting each (h, x) advantage by the occupancy
// mass over the hidden y.  When the greedy action does not depend on y this
// is the exact box-constrained optimum.
inline SolveResult solve_unconstrained(const SolveModel& M, double eta) {
  if (!(eta >= 0.0 && eta < 0.5))
    throw precondition_error("solve_unconstrained: eta must be in [0, 0.5)");
  const int S = M.space.state_count();
  const int X = M.space.feature_count;
  const int H = M.space.horizon;
  std::vector<double> theta(static_cast<std::size_t>(M.group_count()) * H * X, 0.0);
  for (int g = 0; g < M.group_count(); ++g) {
    std::vector<double> q(static_cast<std::size_t>(H) * S * kActions, 0.0);
    std::vector<double> v(static_cast<std::size_t>(H + 1) * S, 0.0);
    for (int h = H - 1; h >= 0; --h) {
      const double* vnext = v.data() + static_cast<std::size_t>(h + 1) * S;
      for (int s = 0; s < S; ++s) {
        double qa[kActions];
        for (int a = 0; a < kActions; ++a) {
          double backup = M.reward_at(g, s, a);
          const double* row = M.row(g, s, a);
          for (int s2 = 0; s2 < S; ++s2) backup += row[s2] * vnext[s2];
          qa[a] = backup;
          q[(static_cast<std::size_t>(h) * S + s) * kActions + a] = backup;
        }
        v[static_cast<std::size_t>(h) * S + s] =
            (1.0 - eta) * std::max(qa[0], qa[1]) + eta * std::min(qa[0], qa[1]);
      }
    }
    // Forward greedy read-off; exact ties prefer a = 0.
    std::vector<double> d(M.init[g]);
    double* th = theta.data() + static_cast<std::size_t>(g) * H * X;
    for (int h = 0; h < H; ++h) {
      for (int x = 0; x < X; ++x) {
        double adv = 0.0;
        for (int y = 0; y < 2; ++y) {
          const int s = StateSpace::state(x, y);
          adv += d[s] * (q[(static_cast<std::size_t>(h) * S + s) * kActions + 1] -
                         q[(static_cast<std::size_t>(h) * S + s) * kActions + 0]);
        }
        th[static_cast<std::size_t>(h) * X + x] = adv > 0.0 ? 1.0 - eta : eta;
      }
      if (h + 1 < H) {
        std::vector<double> dn(S, 0.0);
        for (int s = 0; s < S; ++s) {
          const double p1 = th[static_cast<std::size_t>(h) * X + StateSpace::x_of(s)];
          for (int a = 0; a < kActions; ++a) {
            const double wgt = d[s] * (a == 1 ? p1 : 1.0 - p1);
            if (wgt == 0.0) continue;
            const double* row = M.row(g, s, a);
            for (int s2 = 0; s2 < S; ++s2) dn[s2] += wgt * row[s2];
          }
        }
        d = std::move(dn);
      }
    }
  }
  const auto ev = solver_detail::evaluate(M, theta, ConstraintKind::none, false);
  SolveResult res;
  res.policy = solver_detail::theta_to_policy(M, theta);
  res.objective = ev.objective;
  res.max_violation = 0.0;
  res.feasible = true;
  res.restarts_used = 1;
  return res;
}

namespace solver_detail {

inline std::vector<std::vector<double>> make_starts(const SolveModel& M, double eta,
                                                    const SolveOptions& opt) {
  const std::size_t n =
      static_cast<std::size_t>(M.group_count()) * M.space.horizon *
      M.space.feature_count;
  std::vector<std::vector<double>> starts;
  starts.emplace_back(n, 0.5);             // midpoint
  starts.emplace_back(n, 1.0 - eta);       // all-accept
  {
    const auto greedy = solve_unconstrained(M, eta);
    std::vector<double> th;
    th.reserve(n);
    for (const auto& g : greedy.policy.accept) th.insert(th.end(), g.begin(), g.end());
    starts.push_back(std::move(th));
  }
  RngStream rng = RngStream(opt.seed).fork(0x57a27ull);
  while (static_cast<int>(starts.size()) < opt.restarts) {
    RngStream sub = rng.fork(starts.size());
    std::vector<double> th(n);
    for (auto& v : th) v = sub.uniform(eta, 1.0 - eta);
    starts.push_back(std::move(th));
  }
  starts.resize(std::max(1, opt.restarts), std::vector<double>(n, 0.5));
  for (auto& th : starts) project_box(th, eta);
  return starts;
}

struct Candidate {
  std::vector<double> theta;
  double objective = -std::numeric_limits<double>::infinity();
  double violation = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  int restart = 0;
};

// Objective ties within this absolute window are broken toward the smaller
// raw fairness gap (the feasible set is often a flat plateau of
// return-maximal policies that differ wildly in their gap).
inline constexpr double kObjectiveTieWindow = 5e-7;

inline bool better(const Candidate& a, const Candidate& b, double feas_tol) {
  const bool fa = a.violation <= feas_tol, fb = b.violation <= feas_tol;
  if (fa != fb) return fa;
  if (fa) {
    if (std::abs(a.objective - b.objective) <= kObjectiveTieWindow)
      return a.gap < b.gap;
    return a.objective > b.objective;
  }
  return a.violation < b.violation;
}

}  // namespace solver_detail

// Maximizes the estimated return over the policy box subject to per-step
// fairness constraints, by multi-start projected-gradient ascent on an
// augmented Lagrangian.  Every |.| <= bound constraint is split into two
// one-sided inequalities; EqOpt constraints are handled in cross-multiplied
// form while feasibility is always judged on the true ratio form.
inline SolveResult solve_constrained(const SolveProblem& sp,
                                     const SolveOptions& opt = {}) {
  using namespace solver_detail;
  if (sp.kind != ConstraintKind::dp && sp.kind != ConstraintKind::eqopt)
    throw precondition_error("solve_constrained: constraint kind must be DP or EqOpt");
  if (!(sp.eta >= 0.0 && sp.eta < 0.5))
    throw precondition_error("solve_constrained: eta must be in [0, 0.5)");
  const int H = sp.model.space.horizon;
  if (static_cast<int>(sp.bound.size()) != H)
    throw shape_error("solve_constrained: need one bound per step");
  for (double b : sp.bound)
    if (b < 0.0) throw precondition_error("solve_constrained: bounds must be >= 0");
  if (sp.kind == ConstraintKind::eqopt) check_eqopt_conditioning(sp.model);

  ConstraintSystem cons;
  cons.kind = sp.kind;
  cons.bound = sp.bound;
  cons.pairs = group_pairs(sp.model.group_count());
  cons.horizon = H;

  SolveResult out;
  Candidate best;
  long total_iters = 0;
  const auto starts = make_starts(sp.model, sp.eta, opt);
  for (int r = 0; r < static_cast<int>(starts.size()); ++r) {
    std::vector<double> theta = starts[r];
    {  // the untouched start is itself a candidate (all-accept and midpoint
       // starts are feasible for any bound >= 0)
      const auto ev0 = evaluate(sp.model, theta, sp.kind, false);
      cons.refresh_normalizers(ev0);
      const auto rep = report_violation(ev0, sp.kind, sp.bound);
      Candidate c{theta, ev0.objective, rep.slack, rep.gap, r};
      if (better(c, best, opt.feas_tol)) best = std::move(c);
    }
    AugLagState al;
    al.lambda.assign(cons.count(), 0.0);
    al.mu = opt.mu0;
    Merit merit;
    merit.model = &sp.model;
    merit.kind = sp.kind;
    merit.cons = &cons;
    merit.al = &al;
    double viol_prev = std::numeric_limits<double>::infinity();
    double raw_objective = -std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < opt.max_outer; ++outer) {
      {
        const auto ev = evaluate(sp.model, theta, sp.kind, false);
        cons.refresh_normalizers(ev);
      }
      total_iters += inner_maximize(sp.model, merit, theta, sp.eta, opt).iterations;
      const auto ev = evaluate(sp.model, theta, sp.kind, false);
      const auto rep = report_violation(ev, sp.kind, sp.bound);
      if (opt.keep_traces) {
        double lmax = 0.0;
        for (double l : al.lambda) lmax = std::max(lmax, l);
        out.traces.push_back({r, outer, ev.objective, rep.slack, al.mu, lmax});
      }
      Candidate c{theta, ev.objective, rep.slack, rep.gap, r};
      raw_objective = ev.objective;
      if (better(c, best, opt.feas_tol)) {
        best = c;
        out.multipliers = al.lambda;
        out.final_mu = al.mu;
      }
      if (rep.slack <= opt.feas_tol) break;
      for (int j = 0; j < cons.count(); ++j)
        al.lambda[j] = std::max(0.0, al.lambda[j] + al.mu * cons.value(ev, j));
      // stiffen when progress stalls, and always in the near-feasible tail so
      // the iterate locks into the constraint band instead of oscillating
      if (rep.slack > 0.5 * viol_prev || rep.slack < 1e-2) al.mu *= opt.mu_growth;
      viol_prev = rep.slack;
    }
    // Tie polish: when the constrained optimum sits on a flat plateau, slide
    // along it toward a smaller fairness gap.  Blend back toward the raw
    // iterate until the objective gives up at most a third of the tie window
    // and feasibility is preserved.
    {
      Merit polish = merit;
      polish.tie_lambda = 1e-3;
      std::vector<double> slid = theta;
      total_iters += inner_maximize(sp.model, polish, slid, sp.eta, opt).iterations;
      for (double t : {1.0, 0.5, 0.25, 0.125}) {
        std::vector<double> blend(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i)
          blend[i] = theta[i] + t * (slid[i] - theta[i]);
        const auto ev = evaluate(sp.model, blend, sp.kind, false);
        if (ev.objective < raw_objective - kObjectiveTieWindow / 3.0) continue;
        const auto rep = report_violation(ev, sp.kind, sp.bound);
        Candidate c{std::move(blend), ev.objective, rep.slack, rep.gap, r};
        if (better(c, best, opt.feas_tol)) {
          best = std::move(c);
          out.multipliers = al.lambda;
          out.final_mu = al.mu;
        }
        break;
      }
    }
  }
  out.policy = theta_to_policy(sp.model, best.theta);
  out.objective = best.objective;
  out.max_violation = best.violation;
  out.feasible = best.violation <= opt.feas_tol;
  out.selected_restart = best.restart;
  out.restarts_used = static_cast<int>(starts.size());
  out.iterations = total_iters;
  return out;
}

// Penalized surrogate: maximizes return minus lambda times the squared
// per-step fairness gap (squared cross-multiplied gap for EqOpt) over the
// policy box.
inline SolveResult solve_penalty(const SolveProblem& sp, const SolveOptions& opt = {}) {
  using namespace solver_detail;
  if (!is_penalty(sp.kind))
    throw precondition_error("solve_penalty: constraint kind must be a penalty kind");
  if (sp.lambda < 0.0) throw precondition_error("solve_penalty: lambda must be >= 0");
  if (!(sp.eta >= 0.0 && sp.eta < 0.5))
    throw precondition_error("solve_penalty: eta must be in [0, 0.5)");
  if (sp.kind == ConstraintKind::eqopt_penalty) check_eqopt_conditioning(sp.model);

  Merit merit;
  merit.model = &sp.model;
  merit.kind = sp.kind;
  merit.penalty_lambda = sp.lambda;
  const std::vector<double> zero_bound(sp.model.space.horizon, 0.0);
  SolveResult out;
  Candidate best;
  long total_iters = 0;
  const auto starts = make_starts(sp.model, sp.eta, opt);
  for (int r = 0; r < static_cast<int>(starts.size()); ++r) {
    std::vector<double> theta = starts[r];
    const auto inner = inner_maximize(sp.model, merit, theta, sp.eta, opt);
    total_iters += inner.iterations;
    const auto ev = evaluate(sp.model, theta, sp.kind, false);
    // Candidates compete on the penalized merit; the fairness gap (slack
    // against a zero bound) is reported for diagnostics.
    const auto rep = report_violation(ev, sp.kind, zero_bound);
    Candidate c{theta, inner.merit, rep.slack, rep.gap, r};
    if (c.objective > best.objective) {
      best = std::move(c);
      best.restart = r;
    }
  }
  const auto ev = evaluate(sp.model, best.theta, sp.kind, false);
  out.policy = theta_to_policy(sp.model, best.theta);
  out.objective = ev.objective;
  out.max_violation = best.violation;
  out.feasible = true;
  out.selected_restart = best.restart;
  out.restarts_used = static_cast<int>(starts.size());
  out.iterations = total_iters;
  return out;
}

// Exhaustive grid search used as a validation oracle.  For two groups the
// objective is additive and the constraints couple the groups only through
// per-step scalar summaries, so each group's grid is enumerated once and
// pairs are scanned best-first with bound pruning.
inline SolveResult brute_force_oracle(const SolveModel& M, ConstraintKind kind,
                                      const std::vector<double>& bound,
                                      double grid_step, double eta) {
  using namespace solver_detail;
  if (kind != ConstraintKind::dp && kind != ConstraintKind::eqopt)
    throw precondition_error("brute_force_oracle: constraint kind must be DP or EqOpt");
  const int H = M.space.horizon;
  const int X = M.space.feature_count;
  const int q = M.group_count();
  const int per_group = H * X;
  if (q * per_group > 8)
    throw budget_error("brute_force_oracle: more than 8 policy parameters");
  if (static_cast<int>(bound.size()) != H)
    throw shape_error("brute_force_oracle: need one bound per step");
  if (kind == ConstraintKind::eqopt) check_eqopt_conditioning(M);

  const int steps = std::max(1, static_cast<int>(std::lround((1.0 - 2.0 * eta) / grid_step)));
  std::vector<double> grid(steps + 1);
  for (int i = 0; i <= steps; ++i)
    grid[i] = eta + (1.0 - 2.0 * eta) * static_cast<double>(i) / steps;

  struct Entry {
    double obj = 0.0;
    std::vector<double> summary;  // per step: m_h, or u_h/w_h ratio
    std::vector<double> theta;
  };

  auto enumerate_group = [&](int g) {
    std::vector<Entry> list;
    std::size_t total = 1;
    for (int t = 0; t < per_group; ++t) {
      total *= grid.size();
      if (total > 20'000'000u)
        throw budget_error("brute_force_oracle: grid too large");
    }
    list.reserve(total);
    std::vector<double> theta(per_group, grid[0]);
    std::vector<int> digit(per_group, 0);
    for (std::size_t idx = 0;; ++idx) {
      const auto d = marginals(M, g, theta.data());
      Entry e;
      e.theta = theta;
      e.obj = 0.0;
      e.summary.resize(H);
      const int S = M.space.state_count();
      bool valid = true;
      for (int h = 0; h < H; ++h) {
        const double* dh = d.data() + static_cast<std::size_t>(h) * S;
        double m = 0.0, u = 0.0, w = 0.0, obj_h = 0.0;
        for (int s = 0; s < S; ++s) {
          const double p1 = theta[static_cast<std::size_t>(h) * X + StateSpace::x_of(s)];
          obj_h += dh[s] * (p1 * M.reward_at(g, s, 1) + (1.0 - p1) * M.reward_at(g, s, 0));
          m += dh[s] * p1;
          if (StateSpace::y_of(s) == 1) {
            u += dh[s] * p1;
            w += dh[s];
          }
        }
        e.obj += obj_h;
        if (kind == ConstraintKind::eqopt) {
          if (w <= kDenominatorFloor) valid = false;
          e.summary[h] = valid ? u / w : 0.0;
        } else {
          e.summary[h] = m;
        }
      }
      if (valid) list.push_back(std::move(e));
      // next mixed-radix digit vector
      int t = 0;
      for (; t < per_group; ++t) {
        if (++digit[t] <= steps) {
          theta[t] = grid[digit[t]];
          break;
        }
        digit[t] = 0;
        theta[t] = grid[0];
      }
      if (t == per_group) break;
    }
    return list;
  };

  auto feasible_pair = [&](const Entry& a, const Entry& b) {
    for (int h = 0; h < H; ++h)
      if (std::abs(a.summary[h] - b.summary[h]) > bound[h] + 1e-12) return false;
    return true;
  };

  SolveResult out;
  if (q == 2) {
    auto la = enumerate_group(0);
    auto lb = enumerate_group(1);
    if (la.empty() || lb.empty())
      throw precondition_error("brute_force_oracle: no valid grid policy");
    auto by_obj = [](const Entry& x, const Entry& y) { return x.obj > y.obj; };
    std::stable_sort(la.begin(), la.end(), by_obj);
    std::stable_sort(lb.begin(), lb.end(), by_obj);
    const double wa = M.proportions[0], wb = M.proportions[1];
    double best = -std::numeric_limits<double>::infinity();
    const Entry* pick_a = nullptr;
    const Entry* pick_b = nullptr;
    for (const auto& a : la) {
      if (wa * a.obj + wb * lb.front().obj <= best) break;
      for (const auto& b : lb) {
        const double total = wa * a.obj + wb * b.obj;
        if (total <= best) break;
        if (feasible_pair(a, b)) {
          best = total;
          pick_a = &a;
          pick_b = &b;
          break;
        }
      }
    }
    if (!pick_a)
      throw precondition_error("brute_force_oracle: no feasible grid policy");
    std::vector<double> theta;
    theta.reserve(2 * per_group);
    theta.insert(theta.end(), pick_a->theta.begin(), pick_a->theta.end());
    theta.insert(theta.end(), pick_b->theta.begin(), pick_b->theta.end());
    out.policy = theta_to_policy(M, theta);
    out.objective = best;
  } else {
    // plain product enumeration over the joint grid
    std::size_t total = 1;
    for (int t = 0; t < q * per_group; ++t) {
      total *= grid.size();
      if (total > 20'000'000u)
        throw budget_error("brute_force_oracle: grid too large");
    }
    std::vector<double> theta(static_cast<std::size_t>(q) * per_group, grid[0]);
    std::vector<int> digit(theta.size(), 0);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> best_theta;
    for (;;) {
      const auto ev = evaluate(M, theta, kind, false);
      double worst = 0.0;
      try {
        worst = report_violation(ev, kind, bound).slack;
      } catch (const degenerate_conditioning&) {
        worst = std::numeric_limits<double>::infinity();
      }
      if (worst <= 1e-12 && ev.objective > best) {
        best = ev.objective;
        best_theta = theta;
      }
      std::size_t t = 0;
      for (; t < theta.size(); ++t) {
        if (++digit[t] <= steps) {
          theta[t] = grid[digit[t]];
          break;
        }
        digit[t] = 0;
        theta[t] = grid[0];
      }
      if (t == theta.size()) break;
    }
    if (best_theta.empty())
      throw precondition_error("brute_force_oracle: no feasible grid policy");
    out.policy = theta_to_policy(M, best_theta);
    out.objective = best;
  }
  const auto ev = evaluate(
      M,
      [&] {
        std::vector<double> th;
        for (const auto& g : out.policy.accept) th.insert(th.end(), g.begin(), g.end());
        return th;
      }(),
      kind, false);
  out.max_violation = report_violation(ev, kind, bound).slack;
  out.feasible = true;
  out.restarts_used = 1;
  return out;
}

}  // namespace stepfair
