#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stepfair/core.hpp"
#include "stepfair/simulate.hpp"

namespace stepfair {

// Cumulative visit / transition / reward tallies across all ingested
// episodes.  Transitions are tallied only when the successor state was
// observed, so last-step visits and opted-out individuals contribute visits
// and rewards but no transition.
struct CountTable {
  int feature_count = 0;
  std::vector<std::vector<std::int64_t>> visits;       // [g][s * A + a]
  std::vector<std::vector<std::int64_t>> transitions;  // [g][(s * A + a) * S + s']
  std::vector<std::vector<double>> reward_sum;         // [g][s * A + a]
  std::int64_t last_episode = 0;

  int state_count() const { return 2 * feature_count; }
  int group_count() const { return static_cast<int>(visits.size()); }

  static CountTable zero(int groups, int features) {
    CountTable c;
    c.feature_count = features;
    const int S = 2 * features;
    c.visits.assign(groups, std::vector<std::int64_t>(S * kActions, 0));
    c.transitions.assign(groups, std::vector<std::int64_t>(
                                     static_cast<std::size_t>(S) * kActions * S, 0));
    c.reward_sum.assign(groups, std::vector<double>(S * kActions, 0.0));
    return c;
  }

  // N(s, a) = max{1, raw visit count}.
  std::int64_t clamped(int g, int s, int a) const {
    return std::max<std::int64_t>(1, visits[g][static_cast<std::size_t>(s) * kActions + a]);
  }
  std::int64_t min_clamped(int g) const {
    std::int64_t m = INT64_MAX;
    for (std::size_t i = 0; i < visits[g].size(); ++i)
      m = std::min(m, std::max<std::int64_t>(1, visits[g][i]));
    return m;
  }
};

inline void update_counts(CountTable& counts, const EpisodeBatch& batch) {
  if (batch.group_count() != counts.group_count())
    throw shape_error("update_counts: group count mismatch");
  if (batch.episode <= counts.last_episode)
    throw sequencing_error("update_counts: episode " + std::to_string(batch.episode) +
                           " not after " + std::to_string(counts.last_episode));
  const int S = counts.state_count();
  for (int g = 0; g < batch.group_count(); ++g) {
    if (batch.count(g) < 1)
      throw precondition_error("update_counts: empty group in batch");
    for (const auto& traj : batch.per_group[g]) {
      for (int h = 0; h < traj.active_until; ++h) {
        const auto& st = traj.steps[h];
        const std::size_t sa = static_cast<std::size_t>(st.state) * kActions + st.action;
        counts.visits[g][sa] += 1;
        counts.reward_sum[g][sa] += st.reward;
        if (h + 1 < traj.active_until)
          counts.transitions[g][sa * S + traj.steps[h + 1].state] += 1;
      }
    }
  }
  counts.last_episode = batch.episode;
}

// Exploration bonus min{2H, 2H sqrt(2 ln(16 S A H k^2 / delta) / N)}.
inline double bonus_value(int horizon, int states, int actions, std::int64_t k,
                          double delta, std::int64_t n) {
  const double H = horizon;
  const double logterm =
      std::log(16.0 * states * actions * H * static_cast<double>(k) *
               static_cast<double>(k) / delta);
  return std::min(2.0 * H, 2.0 * H * std::sqrt(2.0 * logterm / static_cast<double>(n)));
}

// Empirical kernel, empirical mean reward, bonus, and optimistic reward.
// Kernel rows are normalized over observed transitions so every row is a
// distribution; a row with no observed transition falls back to uniform.
struct EstimatedModel {
  int feature_count = 0;
  std::int64_t episode = 1;
  double delta = 0.1;
  std::vector<std::vector<double>> kernel;   // [g] rows (s, a) -> s'
  std::vector<std::vector<double>> r_hat;    // [g][s * A + a]
  std::vector<std::vector<double>> bonus;    // [g][s * A + a]
  std::vector<std::vector<double>> r_opt;    // r_hat + bonus, not clamped above
  std::vector<std::int64_t> n_min;           // per group min_{s,a} N(s,a)
  std::vector<double> p_y1_min;              // per group min_{s,a} p_k(y=1 | s,a)

  int state_count() const { return 2 * feature_count; }
  int group_count() const { return static_cast<int>(kernel.size()); }
  const double* row(int g, int s, int a) const {
    return kernel[g].data() + (static_cast<std::size_t>(s) * kActions + a) * state_count();
  }
};

inline EstimatedModel build_model(const CountTable& counts, std::int64_t k, double delta,
                                  int horizon) {
  if (k < 1) throw precondition_error("build_model: episode index must be >= 1");
  const int S = counts.state_count();
  const int q = counts.group_count();
  EstimatedModel m;
  m.feature_count = counts.feature_count;
  m.episode = k;
  m.delta = delta;
  m.kernel.assign(q, std::vector<double>(static_cast<std::size_t>(S) * kActions * S, 0.0));
  m.r_hat.assign(q, std::vector<double>(S * kActions, 0.0));
  m.bonus.assign(q, std::vector<double>(S * kActions, 0.0));
  m.r_opt.assign(q, std::vector<double>(S * kActions, 0.0));
  m.n_min.assign(q, 0);
  m.p_y1_min.assign(q, 0.0);
  for (int g = 0; g < q; ++g) {
    m.n_min[g] = counts.min_clamped(g);
    double pmin = 1.0;
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < kActions; ++a) {
        const std::size_t sa = static_cast<std::size_t>(s) * kActions + a;
        double* row = m.kernel[g].data() + sa * S;
        std::int64_t observed = 0;
        for (int s2 = 0; s2 < S; ++s2) observed += counts.transitions[g][sa * S + s2];
        if (observed > 0) {
          for (int s2 = 0; s2 < S; ++s2)
            row[s2] = static_cast<double>(counts.transitions[g][sa * S + s2]) /
                      static_cast<double>(observed);
        } else {
          for (int s2 = 0; s2 < S; ++s2) row[s2] = 1.0 / S;
        }
        const std::int64_t n = counts.clamped(g, s, a);
        m.r_hat[g][sa] = counts.visits[g][sa] > 0
                             ? counts.reward_sum[g][sa] / static_cast<double>(n)
                             : 0.0;
        m.bonus[g][sa] = bonus_value(horizon, S, kActions, k, delta, n);
        m.r_opt[g][sa] = m.r_hat[g][sa] + m.bonus[g][sa];
        double y1 = 0.0;
        for (int s2 = 0; s2 < S; ++s2)
          if (StateSpace::y_of(s2) == 1) y1 += row[s2];
        pmin = std::min(pmin, y1);
      }
    m.p_y1_min[g] = pmin;
  }
  return m;
}

inline double epsilon_k(std::int64_t k, int horizon, int states) {
  return 1.0 / (static_cast<double>(k) * horizon * states);
}

// eta_k = k^{-1/3}, capped so the policy box [eta, 1 - eta] stays nonempty.
inline constexpr double kEtaCap = 0.4;
inline double eta_k(std::int64_t k) {
  return std::min(std::pow(static_cast<double>(k), -1.0 / 3.0), kEtaCap);
}

// Compatible DP relaxation, clamped to 1 (the constrained quantity is a
// probability difference, so anything larger is vacuous).
inline double compat_c(const std::vector<std::int64_t>& n_min, std::int64_t k,
                       int horizon, int states, int actions, double delta,
                       double epsilon) {
  const double H = horizon;
  const double S = states;
  double c = 0.0;
  for (std::int64_t n : n_min) {
    if (n < 1) throw precondition_error("compat_c: N_min must be >= 1");
    const double logterm = std::log(16.0 * S * actions * H * static_cast<double>(k) *
                                    static_cast<double>(k) / (epsilon * delta));
    c += H * std::sqrt(2.0 * S * logterm / static_cast<double>(n)) + 2.0 * epsilon * H * S;
  }
  return std::min(c, 1.0);
}

// Compatible EqOpt relaxation; falls back to 1 whenever any group fails the
// qualified-mass gate.
inline double compat_d(const std::vector<std::int64_t>& n_min,
                       const std::vector<double>& p_y1_min, std::int64_t k, int horizon,
                       int states, int actions, double delta, double epsilon) {
  const double H = horizon;
  const double S = states;
  const double k2 = static_cast<double>(k) * static_cast<double>(k);
  double d = 0.0;
  for (std::size_t g = 0; g < n_min.size(); ++g) {
    const double n = static_cast<double>(n_min[g]);
    const double gate =
        std::sqrt((4.0 * std::log(2.0) + 2.0 * std::log(4.0 * S * actions * k2 / delta)) / n);
    if (!(p_y1_min[g] > gate)) return 1.0;
    const double num =
        3.0 * H * std::sqrt(2.0 * S * std::log(32.0 * S * actions * k2 / (epsilon * delta)) / n) +
        3.0 * epsilon * H * S;
    d += num / (p_y1_min[g] * (p_y1_min[g] - gate));
  }
  return std::min(d, 1.0);
}

// Everything the practical programs need at episode k.  The relaxations do
// not depend on the step, so scalars suffice.
struct RelaxationSchedule {
  std::int64_t k = 1;
  double delta = 0.1;
  double epsilon = 0.0;
  double eta = 0.0;
  double c_hat = 1.0;
  double d_hat = 1.0;
};

inline RelaxationSchedule make_schedule(const EstimatedModel& model, int horizon) {
  RelaxationSchedule sched;
  sched.k = model.episode;
  sched.delta = model.delta;
  const int S = model.state_count();
  sched.epsilon = epsilon_k(model.episode, horizon, S);
  sched.eta = eta_k(model.episode);
  sched.c_hat = compat_c(model.n_min, model.episode, horizon, S, kActions, model.delta,
                         sched.epsilon);
  sched.d_hat = compat_d(model.n_min, model.p_y1_min, model.episode, horizon, S, kActions,
                         model.delta, sched.epsilon);
  return sched;
}

}  // namespace stepfair
