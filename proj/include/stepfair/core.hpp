#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepfair {

inline constexpr int kActions = 2;
inline constexpr double kDenominatorFloor = 1e-9;
// Row sums within this slack of 1 are renormalized on construction; larger
// deviations are rejected as malformed input.
inline constexpr double kRowSumSlack = 1e-9;

struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct sequencing_error : std::logic_error {
  using std::logic_error::logic_error;
};

struct budget_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Conditioning event has (numerically) no mass; carries the denominator seen.
struct degenerate_conditioning : std::runtime_error {
  explicit degenerate_conditioning(const std::string& what, double denom)
      : std::runtime_error(what), denominator(denom) {}
  double denominator = 0.0;
};

// State s packs observable feature x and hidden qualification y as s = 2x + y.
struct StateSpace {
  int feature_count = 1;
  int horizon = 1;

  int state_count() const { return 2 * feature_count; }
  static int state(int x, int y) { return 2 * x + y; }
  static int x_of(int s) { return s / 2; }
  static int y_of(int s) { return s % 2; }
};

struct GroupSpec {
  std::vector<std::string> ids;
  std::vector<double> proportions;

  int count() const { return static_cast<int>(ids.size()); }
};

// Time-invariant kernel plus the step-1 entry distribution for one group.
// Rows are indexed (s, a) -> s' with s = 2x + y.
struct TransitionKernel {
  int feature_count = 0;
  std::vector<double> rows;  // [(s * A + a) * S + s']
  std::vector<double> init;  // [s]

  int state_count() const { return 2 * feature_count; }
  double at(int s, int a, int s2) const {
    return rows[(static_cast<std::size_t>(s) * kActions + a) * state_count() + s2];
  }
  double& at(int s, int a, int s2) {
    return rows[(static_cast<std::size_t>(s) * kActions + a) * state_count() + s2];
  }
  const double* row(int s, int a) const {
    return rows.data() + (static_cast<std::size_t>(s) * kActions + a) * state_count();
  }
};

struct RewardModel {
  enum class Sampling { deterministic, bernoulli };

  int feature_count = 0;
  std::vector<double> mean;  // [s * A + a], normalized to [0, 1]
  Sampling sampling = Sampling::deterministic;
  // Pre-normalization bounds; mean = (raw - raw_lo) / (raw_hi - raw_lo).
  double raw_lo = 0.0;
  double raw_hi = 1.0;

  double at(int s, int a) const {
    return mean[static_cast<std::size_t>(s) * kActions + a];
  }
  double& at(int s, int a) {
    return mean[static_cast<std::size_t>(s) * kActions + a];
  }
};

// Environment ground truth: spaces, group mix, kernels and rewards per group.
struct Problem {
  StateSpace space;
  GroupSpec groups;
  std::vector<TransitionKernel> kernels;
  std::vector<RewardModel> rewards;

  int group_count() const { return groups.count(); }
};

// Acceptance probabilities pi(a=1 | x), per group and step; the hidden y is
// structurally invisible to the policy.
struct Policy {
  int feature_count = 0;
  int horizon = 0;
  std::vector<std::vector<double>> accept;  // [group][h * X + x]

  int group_count() const { return static_cast<int>(accept.size()); }
  double at(int g, int h, int x) const {
    return accept[g][static_cast<std::size_t>(h) * feature_count + x];
  }
  double& at(int g, int h, int x) {
    return accept[g][static_cast<std::size_t>(h) * feature_count + x];
  }
  double prob(int g, int h, int x, int a) const {
    const double p1 = at(g, h, x);
    return a == 1 ? p1 : 1.0 - p1;
  }

  static Policy constant(int groups, int horizon, int features, double p) {
    Policy pi;
    pi.feature_count = features;
    pi.horizon = horizon;
    pi.accept.assign(groups, std::vector<double>(
                                 static_cast<std::size_t>(horizon) * features, p));
    return pi;
  }

  // Membership in the reachability class: both action probabilities >= eta.
  bool in_class(double eta) const {
    for (const auto& g : accept)
      for (double p : g)
        if (std::min(p, 1.0 - p) < eta - 1e-12) return false;
    return true;
  }
};

// rho(x, y, a, h) per group: probability of being in (x, y) and receiving a
// at step h.  Steps are 0-based throughout the code.
struct OccupancyMeasure {
  int feature_count = 0;
  int horizon = 0;
  std::vector<std::vector<double>> rho;  // [group][(h * S + s) * A + a]

  int state_count() const { return 2 * feature_count; }
  int group_count() const { return static_cast<int>(rho.size()); }
  double at_state(int g, int h, int s, int a) const {
    return rho[g][(static_cast<std::size_t>(h) * state_count() + s) * kActions + a];
  }
  double at(int g, int h, int x, int y, int a) const {
    return at_state(g, h, StateSpace::state(x, y), a);
  }
};

// Q(s, a, h) and V(s, h) with an explicit zero layer at h = H.
struct ValueFunctions {
  int feature_count = 0;
  int horizon = 0;
  std::vector<std::vector<double>> q;  // [group][(h * S + s) * A + a]
  std::vector<std::vector<double>> v;  // [group][h * S + s], h in [0, H]

  int state_count() const { return 2 * feature_count; }
  double q_at(int g, int h, int s, int a) const {
    return q[g][(static_cast<std::size_t>(h) * state_count() + s) * kActions + a];
  }
  double v_at(int g, int h, int s) const {
    return v[g][static_cast<std::size_t>(h) * state_count() + s];
  }
};

namespace detail {

inline void normalize_row(double* row, int n, const char* what) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (row[i] < -1e-15)
      throw validation_error(std::string(what) + ": negative probability");
    sum += row[i];
  }
  if (std::abs(sum - 1.0) > kRowSumSlack)
    throw validation_error(std::string(what) + ": row sums to " + std::to_string(sum));
  for (int i = 0; i < n; ++i) row[i] = std::max(0.0, row[i]) / sum;
}

}  // namespace detail

// Checks every construction invariant; probability rows within kRowSumSlack of
// stochastic are renormalized in place, anything worse is rejected.
inline void validate(Problem& p) {
  const int S = p.space.state_count();
  if (p.space.feature_count < 1 || p.space.horizon < 1)
    throw validation_error("state space: feature_count and horizon must be >= 1");
  const int q = p.group_count();
  if (q < 2) throw validation_error("groups: need at least two groups");
  if (static_cast<int>(p.groups.proportions.size()) != q ||
      static_cast<int>(p.kernels.size()) != q || static_cast<int>(p.rewards.size()) != q)
    throw shape_error("problem: per-group containers disagree on group count");
  detail::normalize_row(p.groups.proportions.data(), q, "group proportions");
  for (int g = 0; g < q; ++g) {
    auto& k = p.kernels[g];
    if (k.feature_count != p.space.feature_count ||
        static_cast<int>(k.rows.size()) != S * kActions * S ||
        static_cast<int>(k.init.size()) != S)
      throw shape_error("kernel[" + std::to_string(g) + "]: table shape mismatch");
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < kActions; ++a)
        detail::normalize_row(&k.at(s, a, 0), S,
                              ("kernel row (g=" + std::to_string(g) + ",s=" +
                               std::to_string(s) + ",a=" + std::to_string(a) + ")")
                                  .c_str());
    detail::normalize_row(k.init.data(), S, "initial distribution");
    auto& r = p.rewards[g];
    if (r.feature_count != p.space.feature_count ||
        static_cast<int>(r.mean.size()) != S * kActions)
      throw shape_error("reward[" + std::to_string(g) + "]: table shape mismatch");
    for (double& m : r.mean) {
      if (m < -1e-12 || m > 1.0 + 1e-12)
        throw validation_error("reward mean outside [0,1]");
      m = std::clamp(m, 0.0, 1.0);
    }
  }
}

inline void check_policy_shape(const Problem& p, const Policy& pi) {
  if (pi.feature_count != p.space.feature_count || pi.horizon != p.space.horizon ||
      pi.group_count() != p.group_count())
    throw shape_error("policy: shape does not match problem");
  for (const auto& g : pi.accept)
    for (double v : g)
      if (v < -1e-12 || v > 1.0 + 1e-12)
        throw validation_error("policy: acceptance probability outside [0,1]");
}

// State marginals d_h(s) for one group under its kernel and policy slice:
// d_0 = init, d_{h+1}(s') = sum_{s,a} d_h(s) pi_h(a|x(s)) p(s'|s,a).
inline std::vector<double> state_marginals(const TransitionKernel& kernel,
                                           const std::vector<double>& policy_accept,
                                           int horizon) {
  const int S = kernel.state_count();
  const int X = kernel.feature_count;
  std::vector<double> d(static_cast<std::size_t>(horizon) * S, 0.0);
  for (int s = 0; s < S; ++s) d[s] = kernel.init[s];
  for (int h = 0; h + 1 < horizon; ++h) {
    const double* dh = d.data() + static_cast<std::size_t>(h) * S;
    double* dn = d.data() + static_cast<std::size_t>(h + 1) * S;
    for (int s = 0; s < S; ++s) {
      if (dh[s] == 0.0) continue;
      const double p1 = policy_accept[static_cast<std::size_t>(h) * X + StateSpace::x_of(s)];
      for (int a = 0; a < kActions; ++a) {
        const double w = dh[s] * (a == 1 ? p1 : 1.0 - p1);
        if (w == 0.0) continue;
        const double* row = kernel.row(s, a);
        for (int s2 = 0; s2 < S; ++s2) dn[s2] += w * row[s2];
      }
    }
  }
  return d;
}

// rho(x, y, a, h) for every group via the flow recursion.
inline OccupancyMeasure forward_occupancy(const Problem& p, const Policy& pi) {
  check_policy_shape(p, pi);
  const int S = p.space.state_count();
  const int X = p.space.feature_count;
  const int H = p.space.horizon;
  OccupancyMeasure occ;
  occ.feature_count = X;
  occ.horizon = H;
  occ.rho.resize(p.group_count());
  for (int g = 0; g < p.group_count(); ++g) {
    const auto d = state_marginals(p.kernels[g], pi.accept[g], H);
    auto& rho = occ.rho[g];
    rho.assign(static_cast<std::size_t>(H) * S * kActions, 0.0);
    for (int h = 0; h < H; ++h)
      for (int s = 0; s < S; ++s) {
        const double p1 = pi.at(g, h, StateSpace::x_of(s));
        const double ds = d[static_cast<std::size_t>(h) * S + s];
        rho[(static_cast<std::size_t>(h) * S + s) * kActions + 1] = ds * p1;
        rho[(static_cast<std::size_t>(h) * S + s) * kActions + 0] = ds * (1.0 - p1);
      }
  }
  return occ;
}

// Backward recursion Q(s,a,h) = r(s,a) + sum_s' p(s'|s,a) V(s',h+1), V(.,H) = 0.
inline ValueFunctions value_functions(const Problem& p, const Policy& pi) {
  check_policy_shape(p, pi);
  const int S = p.space.state_count();
  const int H = p.space.horizon;
  ValueFunctions vf;
  vf.feature_count = p.space.feature_count;
  vf.horizon = H;
  vf.q.resize(p.group_count());
  vf.v.resize(p.group_count());
  for (int g = 0; g < p.group_count(); ++g) {
    auto& q = vf.q[g];
    auto& v = vf.v[g];
    q.assign(static_cast<std::size_t>(H) * S * kActions, 0.0);
    v.assign(static_cast<std::size_t>(H + 1) * S, 0.0);
    for (int h = H - 1; h >= 0; --h) {
      const double* vnext = v.data() + static_cast<std::size_t>(h + 1) * S;
      for (int s = 0; s < S; ++s) {
        double vs = 0.0;
        for (int a = 0; a < kActions; ++a) {
          double backup = p.rewards[g].at(s, a);
          const double* row = p.kernels[g].row(s, a);
          for (int s2 = 0; s2 < S; ++s2) backup += row[s2] * vnext[s2];
          q[(static_cast<std::size_t>(h) * S + s) * kActions + a] = backup;
          vs += pi.prob(g, h, StateSpace::x_of(s), a) * backup;
        }
        v[static_cast<std::size_t>(h) * S + s] = vs;
      }
    }
  }
  return vf;
}

// R_h = sum_g p_g sum_{x,y,a} rho^g(x,y,a,h) r^g((x,y),a), one entry per step.
inline std::vector<double> expected_reward_profile(const OccupancyMeasure& occ,
                                                   const Problem& p) {
  if (occ.group_count() != p.group_count() || occ.feature_count != p.space.feature_count ||
      occ.horizon != p.space.horizon)
    throw shape_error("occupancy: shape does not match problem");
  const int S = p.space.state_count();
  const int H = p.space.horizon;
  std::vector<double> profile(H, 0.0);
  for (int g = 0; g < p.group_count(); ++g) {
    const double w = p.groups.proportions[g];
    for (int h = 0; h < H; ++h) {
      double acc = 0.0;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < kActions; ++a)
          acc += occ.at_state(g, h, s, a) * p.rewards[g].at(s, a);
      profile[h] += w * acc;
    }
  }
  return profile;
}

// P(a_h = 1) for one group: sum_{x,y} rho(x, y, 1, h).
inline double action_marginal(const OccupancyMeasure& occ, int group, int step) {
  const int S = occ.state_count();
  double m = 0.0;
  for (int s = 0; s < S; ++s) m += occ.at_state(group, step, s, 1);
  return m;
}

// P(a_h = 1 | y_h = 1) for one group; throws when the qualified mass at the
// step is numerically zero (a valid instance never triggers this).
inline double eqopt_conditional(const OccupancyMeasure& occ, int group, int step) {
  const int X = occ.feature_count;
  double num = 0.0, den = 0.0;
  for (int x = 0; x < X; ++x) {
    const double a1 = occ.at(group, step, x, 1, 1);
    num += a1;
    den += a1 + occ.at(group, step, x, 1, 0);
  }
  if (den <= kDenominatorFloor)
    throw degenerate_conditioning(
        "eqopt conditional: qualified mass " + std::to_string(den) + " at step " +
            std::to_string(step) + " for group " + std::to_string(group),
        den);
  return num / den;
}

// Population value sum_g p_g sum_s init(s) V^g(s, 0).
inline double population_value(const Problem& p, const ValueFunctions& vf) {
  double total = 0.0;
  for (int g = 0; g < p.group_count(); ++g) {
    double gv = 0.0;
    for (int s = 0; s < p.space.state_count(); ++s)
      gv += p.kernels[g].init[s] * vf.v_at(g, 0, s);
    total += p.groups.proportions[g] * gv;
  }
  return total;
}

}  // namespace stepfair
