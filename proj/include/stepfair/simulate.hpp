#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <vector>

#include "stepfair/core.hpp"
#include "stepfair/rng.hpp"

namespace stepfair {

// One individual's rollout.  steps[h] exists for h < active_until; an
// individual that opts out after step t has active_until = t < H and the
// successor of its step t is never observed.
struct Trajectory {
  struct Step {
    int state = 0;
    int action = 0;
    double reward = 0.0;
  };
  int group = 0;
  std::vector<Step> steps;
  int active_until = 0;  // == steps.size()
};

struct EpisodeBatch {
  std::int64_t episode = 1;
  std::vector<std::vector<Trajectory>> per_group;

  int group_count() const { return static_cast<int>(per_group.size()); }
  int count(int g) const { return static_cast<int>(per_group[g].size()); }
};

struct SampleConfig {
  std::vector<int> n_per_group;
  // Per-step survival probability in (0, 1]; 1 disables opting out.  Each
  // individual exits before step h+1 with probability 1 - survival,
  // independently per step (geometric lifetime).
  double survival = 1.0;
  int max_resample = 100;
};

inline double sample_reward(const RewardModel& r, int s, int a, RngStream& rng) {
  const double m = r.at(s, a);
  if (r.sampling == RewardModel::Sampling::bernoulli) return rng.bernoulli(m) ? 1.0 : 0.0;
  return m;
}

namespace detail {

inline Trajectory roll_individual(const Problem& p, const Policy& pi, int g,
                                  double survival, RngStream rng) {
  const int H = p.space.horizon;
  const auto& kernel = p.kernels[g];
  Trajectory traj;
  traj.group = g;
  traj.steps.reserve(H);
  int s = rng.categorical(kernel.init.data(), kernel.state_count());
  for (int h = 0; h < H; ++h) {
    Trajectory::Step step;
    step.state = s;
    step.action = rng.bernoulli(pi.at(g, h, StateSpace::x_of(s))) ? 1 : 0;
    step.reward = sample_reward(p.rewards[g], s, step.action, rng);
    traj.steps.push_back(step);
    if (h + 1 < H) {
      if (survival < 1.0 && !rng.bernoulli(survival)) break;
      s = rng.categorical(kernel.row(s, step.action), kernel.state_count());
    }
  }
  traj.active_until = static_cast<int>(traj.steps.size());
  return traj;
}

}  // namespace detail

// Draws cfg.n_per_group[g] independent trajectories per group under the true
// kernel.  Every individual owns an RNG substream keyed by
// (episode, group, individual, attempt), so results do not depend on sampling
// order.  If opting out leaves some group with nobody completing the episode,
// the whole batch is redrawn (the estimators assume a survivor per step).
inline EpisodeBatch sample_episode(const Problem& p, const Policy& pi,
                                   const SampleConfig& cfg, std::int64_t episode,
                                   RngStream root) {
  check_policy_shape(p, pi);
  if (static_cast<int>(cfg.n_per_group.size()) != p.group_count())
    throw shape_error("sample_episode: n_per_group size mismatch");
  for (int n : cfg.n_per_group)
    if (n < 1) throw precondition_error("sample_episode: need n >= 1 per group");
  if (!(cfg.survival > 0.0 && cfg.survival <= 1.0))
    throw precondition_error("sample_episode: survival must be in (0,1]");

  RngStream episode_stream = root.fork(0x0e715'0deull, static_cast<std::uint64_t>(episode));
  for (int attempt = 0; attempt <= cfg.max_resample; ++attempt) {
    EpisodeBatch batch;
    batch.episode = episode;
    batch.per_group.resize(p.group_count());
    bool ok = true;
    for (int g = 0; g < p.group_count(); ++g) {
      auto& list = batch.per_group[g];
      list.reserve(cfg.n_per_group[g]);
      bool survivor = false;
      for (int i = 0; i < cfg.n_per_group[g]; ++i) {
        list.push_back(detail::roll_individual(
            p, pi, g, cfg.survival,
            episode_stream.fork(static_cast<std::uint64_t>(attempt),
                                static_cast<std::uint64_t>(g),
                                static_cast<std::uint64_t>(i))));
        survivor |= list.back().active_until == p.space.horizon;
      }
      ok &= survivor;
    }
    if (ok) return batch;
  }
  throw precondition_error(
      "sample_episode: opt-out emptied a group in every resample attempt");
}

// Columns: episode, group, individual, h (1-based), x, y, a, reward, active.
// active flags whether the step's successor state was observed.
inline void write_trajectories_csv(const EpisodeBatch& batch, std::ostream& out,
                                   bool header = true) {
  if (header) out << "episode,group,individual,h,x,y,a,reward,active\n";
  char buf[64];
  for (int g = 0; g < batch.group_count(); ++g)
    for (int i = 0; i < batch.count(g); ++i) {
      const auto& traj = batch.per_group[g][i];
      for (int h = 0; h < traj.active_until; ++h) {
        const auto& st = traj.steps[h];
        std::snprintf(buf, sizeof buf, "%.12g", st.reward);
        out << batch.episode << ',' << g << ',' << i << ',' << (h + 1) << ','
            << StateSpace::x_of(st.state) << ',' << StateSpace::y_of(st.state) << ','
            << st.action << ',' << buf << ',' << (h + 1 < traj.active_until ? 1 : 0)
            << '\n';
      }
    }
}

}  // namespace stepfair
