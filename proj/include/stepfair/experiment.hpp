#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stepfair/core.hpp"
#include "stepfair/datagen.hpp"
#include "stepfair/estimate.hpp"
#include "stepfair/metrics.hpp"
#include "stepfair/serialize.hpp"
#include "stepfair/simulate.hpp"
#include "stepfair/solve.hpp"
#include "stepfair/svg.hpp"

namespace stepfair {

struct MethodSpec {
  ConstraintKind kind = ConstraintKind::dp;
  double lambda = 0.0;

  std::string name() const { return constraint_kind_name(kind); }
};

struct ExperimentConfig {
  Problem problem;
  std::vector<MethodSpec> methods;
  std::vector<std::int64_t> checkpoints;  // strictly increasing episode indices
  int n_per_group = 4;
  int eval_episodes = 2000;  // 0 disables the Monte-Carlo evaluation pass
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double delta = 0.1;
  double survival = 1.0;
  std::string out_dir = "out";
  int threads = 1;
  bool dump_trajectories = false;
  bool snapshot_models = false;
  SolveOptions solver;
};

inline std::vector<std::int64_t> power_checkpoints(int l_min, int l_max) {
  std::vector<std::int64_t> ck;
  for (int l = l_min; l <= l_max; ++l) ck.push_back(std::int64_t{1} << l);
  return ck;
}

struct CheckpointRow {
  std::string method;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  int update_index = 0;
  std::int64_t episode_k = 0;
  double ret = 0.0, dp = 0.0, eqopt = 0.0, regret = 0.0;
  // diagnostics
  double c_hat = 1.0, d_hat = 1.0, eta = 0.0, epsilon = 0.0;
  double est_dp = 0.0, est_eqopt = 0.0;
  double mc_return = std::numeric_limits<double>::quiet_NaN();
  double mc_dp = std::numeric_limits<double>::quiet_NaN();
  double mc_eqopt = std::numeric_limits<double>::quiet_NaN();
  std::string status;
  int restarts = 0;
  long iterations = 0;
};

namespace experiment_detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// write-temp-then-rename so interrupted runs never leave partial files
inline void atomic_write(const std::filesystem::path& path, const std::string& body) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << body;
  }
  std::filesystem::rename(tmp, path);
}

inline double safe_eqopt(const Problem& p, const Policy& pi) {
  try {
    return violation_eqopt(p, pi).mean;
  } catch (const degenerate_conditioning&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct MonteCarloEval {
  double ret = 0.0, dp = 0.0, eqopt = 0.0;
};

// Empirical counterpart of the exact metrics: one individual per group per
// evaluation episode, rewards as sampled.
inline MonteCarloEval mc_evaluate(const Problem& p, const Policy& pi, int episodes,
                                  RngStream rng) {
  const int H = p.space.horizon;
  const int q = p.group_count();
  std::vector<double> ret(q, 0.0);
  std::vector<std::vector<double>> accept(q, std::vector<double>(H, 0.0));
  std::vector<std::vector<double>> qual_accept(q, std::vector<double>(H, 0.0));
  std::vector<std::vector<double>> qual(q, std::vector<double>(H, 0.0));
  SampleConfig cfg;
  cfg.n_per_group.assign(q, 1);
  for (int e = 0; e < episodes; ++e) {
    const auto batch = sample_episode(p, pi, cfg, e + 1, rng.fork(0x3ca1ull, e));
    for (int g = 0; g < q; ++g) {
      const auto& traj = batch.per_group[g][0];
      for (int h = 0; h < traj.active_until; ++h) {
        const auto& st = traj.steps[h];
        ret[g] += st.reward;
        accept[g][h] += st.action;
        if (StateSpace::y_of(st.state) == 1) {
          qual[g][h] += 1.0;
          qual_accept[g][h] += st.action;
        }
      }
    }
  }
  MonteCarloEval out;
  for (int g = 0; g < q; ++g)
    out.ret += p.groups.proportions[g] * ret[g] / episodes;
  for (int h = 0; h < H; ++h) {
    double worst_dp = 0.0, worst_eq = 0.0;
    for (int i = 0; i < q; ++i)
      for (int j = i + 1; j < q; ++j) {
        worst_dp = std::max(worst_dp,
                            std::abs(accept[i][h] - accept[j][h]) / episodes);
        if (qual[i][h] > 0 && qual[j][h] > 0)
          worst_eq = std::max(worst_eq, std::abs(qual_accept[i][h] / qual[i][h] -
                                                 qual_accept[j][h] / qual[j][h]));
      }
    out.dp += worst_dp / H;
    out.eqopt += worst_eq / H;
  }
  return out;
}

inline ConstraintKind comparator_kind(ConstraintKind method) {
  switch (method) {
    case ConstraintKind::dp:
    case ConstraintKind::dp_penalty: return ConstraintKind::dp;
    case ConstraintKind::eqopt:
    case ConstraintKind::eqopt_penalty: return ConstraintKind::eqopt;
    default: return ConstraintKind::none;
  }
}

struct RunContext {
  const ExperimentConfig* cfg = nullptr;
  const std::map<int, Policy>* comparators = nullptr;  // by comparator kind
  std::filesystem::path out;
};

inline std::vector<CheckpointRow> run_single(const RunContext& ctx, int method_idx,
                                             std::uint64_t seed) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const Problem& prob = cfg.problem;
  const MethodSpec method = cfg.methods[method_idx];
  const int H = prob.space.horizon;
  const Policy comparator =
      ctx.comparators->at(static_cast<int>(comparator_kind(method.kind)));

  Policy policy = Policy::constant(prob.group_count(), H, prob.space.feature_count, 0.5);
  CountTable counts = CountTable::zero(prob.group_count(), prob.space.feature_count);
  SampleConfig sample_cfg;
  sample_cfg.n_per_group.assign(prob.group_count(), cfg.n_per_group);
  sample_cfg.survival = cfg.survival;
  RngStream root(seed);
  RngStream sim_rng = root.fork(0x51ull, static_cast<std::uint64_t>(method_idx));

  std::ostringstream traj_dump;
  bool traj_header = true;

  std::vector<CheckpointRow> rows;
  std::size_t next_ck = 0;
  for (std::int64_t k = 1; next_ck < cfg.checkpoints.size(); ++k) {
    const auto batch = sample_episode(prob, policy, sample_cfg, k, sim_rng);
    update_counts(counts, batch);
    if (cfg.dump_trajectories) {
      write_trajectories_csv(batch, traj_dump, traj_header);
      traj_header = false;
    }
    if (k != cfg.checkpoints[next_ck]) continue;
    ++next_ck;

    const EstimatedModel model = build_model(counts, k, cfg.delta, H);
    const RelaxationSchedule sched = make_schedule(model, H);
    SolveOptions opt = cfg.solver;
    opt.seed = root.fork(0x50ull, method_idx, static_cast<std::uint64_t>(k)).key();

    CheckpointRow row;
    row.method = method.name();
    row.lambda = method.lambda;
    row.seed = seed;
    row.update_index = static_cast<int>(next_ck);
    row.episode_k = k;
    row.c_hat = sched.c_hat;
    row.d_hat = sched.d_hat;
    row.eta = sched.eta;
    row.epsilon = sched.epsilon;

    SolveProblem sp;
    sp.model = estimated_solve_model(prob, model);
    sp.kind = method.kind;
    sp.eta = sched.eta;
    sp.lambda = method.lambda;
    try {
      SolveResult res;
      switch (method.kind) {
        case ConstraintKind::none:
          res = solve_unconstrained(sp.model, sched.eta);
          row.status = "greedy";
          break;
        case ConstraintKind::dp:
        case ConstraintKind::eqopt:
          sp.bound.assign(H, method.kind == ConstraintKind::dp ? sched.c_hat
                                                               : sched.d_hat);
          res = solve_constrained(sp, opt);
          row.status = res.feasible ? "feasible" : "best-effort-infeasible";
          break;
        default:
          res = solve_penalty(sp, opt);
          row.status = "penalty";
          break;
      }
      policy = res.policy;
      row.restarts = res.restarts_used;
      row.iterations = res.iterations;
    } catch (const degenerate_conditioning&) {
      // conditioning too thin to pose the EqOpt program; keep current policy
      row.status = "degenerate-conditioning";
    }

    const auto profile = expected_reward_profile(forward_occupancy(prob, policy), prob);
    row.ret = 0.0;
    for (double r : profile) row.ret += r;
    row.dp = violation_dp(prob, policy).mean;
    row.eqopt = safe_eqopt(prob, policy);
    row.regret = reward_regret(prob, policy, comparator);

    Problem est_view = prob;  // exact evaluation under the estimated kernel
    for (int g = 0; g < prob.group_count(); ++g) est_view.kernels[g].rows = model.kernel[g];
    row.est_dp = violation_dp(est_view, policy).mean;
    row.est_eqopt = safe_eqopt(est_view, policy);

    if (cfg.eval_episodes > 0) {
      const auto mc = mc_evaluate(prob, policy, cfg.eval_episodes,
                                  root.fork(0xe7a1ull, method_idx,
                                            static_cast<std::uint64_t>(k)));
      row.mc_return = mc.ret;
      row.mc_dp = mc.dp;
      row.mc_eqopt = mc.eqopt;
    }
    if (cfg.snapshot_models) {
      const json snap = to_json(model, counts, sched, prob.groups.ids);
      atomic_write(ctx.out / ("model_" + method.name() +
                              (method.lambda > 0 ? "_l" + num(method.lambda) : "") +
                              "_s" + std::to_string(seed) + "_k" + std::to_string(k) +
                              ".json"),
                   snap.dump(2) + "\n");
    }
    rows.push_back(std::move(row));
  }
  if (cfg.dump_trajectories)
    atomic_write(ctx.out / ("trajectories_" + method.name() + "_s" +
                            std::to_string(seed) + ".csv"),
                 traj_dump.str());
  {  // final policy snapshot
    std::string name = "policy_" + method.name();
    if (method.lambda > 0) name += "_l" + num(method.lambda);
    name += "_s" + std::to_string(seed) + ".json";
    atomic_write(ctx.out / name, to_json(policy, prob.groups.ids).dump(2) + "\n");
  }
  return rows;
}

}  // namespace experiment_detail

struct RunOutputs {
  std::filesystem::path metrics_csv;
  std::filesystem::path diagnostics_csv;
  std::filesystem::path summary_json;
  std::vector<CheckpointRow> rows;
};

inline void write_plots_from_rows(const std::vector<CheckpointRow>& rows,
                                  const std::filesystem::path& out_dir);

// Full protocol: per seed and method, simulate episodes under the current
// policy, fold them into the counting estimators, and at each checkpoint
// rebuild the model and relaxations, re-solve, and score the new policy
// against the true kernel.  Seeds x methods run concurrently; outputs are
// merged in configuration order so results are independent of thread count.
inline RunOutputs run_experiment(const ExperimentConfig& cfg) {
  using namespace experiment_detail;
  if (cfg.checkpoints.empty())
    throw precondition_error("run_experiment: need at least one checkpoint");
  for (std::size_t i = 1; i < cfg.checkpoints.size(); ++i)
    if (cfg.checkpoints[i] <= cfg.checkpoints[i - 1])
      throw precondition_error("run_experiment: checkpoints must be strictly increasing");
  if (cfg.seeds.empty()) throw precondition_error("run_experiment: need seeds");

  std::filesystem::create_directories(cfg.out_dir);
  RunContext ctx;
  ctx.cfg = &cfg;
  ctx.out = cfg.out_dir;

  // Regret comparators, one per fairness kind in play, shared by every run.
  std::map<int, Policy> comparators;
  for (const auto& m : cfg.methods) {
    const auto kind = comparator_kind(m.kind);
    if (!comparators.count(static_cast<int>(kind)))
      comparators.emplace(static_cast<int>(kind),
                          constrained_comparator(cfg.problem, kind, 32, 0));
  }
  ctx.comparators = &comparators;

  struct Job {
    int method_idx;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int m = 0; m < static_cast<int>(cfg.methods.size()); ++m)
    for (std::uint64_t s : cfg.seeds) jobs.push_back({m, s});
  std::vector<std::vector<CheckpointRow>> results(jobs.size());

  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(jobs.size())));
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t j = cursor.fetch_add(1);
      if (j >= jobs.size()) return;
      results[j] = run_single(ctx, jobs[j].method_idx, jobs[j].seed);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  RunOutputs out;
  for (auto& r : results) out.rows.insert(out.rows.end(), r.begin(), r.end());

  std::ostringstream metrics;
  metrics << "method,lambda,seed,update_index,episode_k,return,dp_violation,"
             "eqopt_violation,regret\n";
  std::ostringstream diag;
  diag << "method,lambda,seed,update_index,episode_k,c_hat,d_hat,eta_k,epsilon_k,"
          "est_dp_violation,est_eqopt_violation,mc_return,mc_dp_violation,"
          "mc_eqopt_violation,solver_status,solver_restarts,solver_iterations\n";
  for (const auto& r : out.rows) {
    metrics << r.method << ',' << num(r.lambda) << ',' << r.seed << ',' << r.update_index
            << ',' << r.episode_k << ',' << num(r.ret) << ',' << num(r.dp) << ','
            << num(r.eqopt) << ',' << num(r.regret) << '\n';
    diag << r.method << ',' << num(r.lambda) << ',' << r.seed << ',' << r.update_index
         << ',' << r.episode_k << ',' << num(r.c_hat) << ',' << num(r.d_hat) << ','
         << num(r.eta) << ',' << num(r.epsilon) << ',' << num(r.est_dp) << ','
         << num(r.est_eqopt) << ',' << num(r.mc_return) << ',' << num(r.mc_dp) << ','
         << num(r.mc_eqopt) << ',' << r.status << ',' << r.restarts << ','
         << r.iterations << '\n';
  }
  out.metrics_csv = ctx.out / "metrics.csv";
  out.diagnostics_csv = ctx.out / "diagnostics.csv";
  atomic_write(out.metrics_csv, metrics.str());
  atomic_write(out.diagnostics_csv, diag.str());

  // summary: per method, CI bands over seeds per checkpoint + final Pareto points
  json summary;
  json jmethods = json::array();
  std::vector<std::pair<std::string, double>> method_keys;
  for (const auto& m : cfg.methods) method_keys.emplace_back(m.name(), m.lambda);
  for (const auto& [name, lambda] : method_keys) {
    std::vector<std::vector<double>> ret_runs, dp_runs, eq_runs, reg_runs;
    for (std::uint64_t s : cfg.seeds) {
      std::vector<double> ret, dp, eq, reg;
      for (const auto& r : out.rows)
        if (r.method == name && r.lambda == lambda && r.seed == s) {
          ret.push_back(r.ret);
          dp.push_back(r.dp);
          eq.push_back(r.eqopt);
          reg.push_back(r.regret);
        }
      ret_runs.push_back(ret);
      dp_runs.push_back(dp);
      eq_runs.push_back(eq);
      reg_runs.push_back(reg);
    }
    auto band = [&](const std::vector<std::vector<double>>& runs) {
      json j;
      if (runs.size() >= 2) {
        const auto s = aggregate(runs);
        j["mean"] = s.mean;
        j["sd"] = s.sd;
        j["ci_lo"] = s.ci_lo;
        j["ci_hi"] = s.ci_hi;
      } else {
        j["mean"] = runs.front();
        j["sd"] = std::vector<double>(runs.front().size(), 0.0);
        j["ci_lo"] = runs.front();
        j["ci_hi"] = runs.front();
      }
      return j;
    };
    json jm;
    jm["method"] = name;
    jm["lambda"] = lambda;
    jm["episode_k"] = cfg.checkpoints;
    jm["return"] = band(ret_runs);
    jm["dp_violation"] = band(dp_runs);
    jm["eqopt_violation"] = band(eq_runs);
    jm["regret"] = band(reg_runs);
    json pareto;
    pareto["return"] = jm["return"]["mean"].back();
    pareto["dp_violation"] = jm["dp_violation"]["mean"].back();
    pareto["eqopt_violation"] = jm["eqopt_violation"]["mean"].back();
    jm["final"] = std::move(pareto);
    jmethods.push_back(std::move(jm));
  }
  summary["methods"] = std::move(jmethods);
  summary["checkpoints"] = cfg.checkpoints;
  summary["seeds"] = cfg.seeds;
  out.summary_json = ctx.out / "summary.json";
  atomic_write(out.summary_json, summary.dump(2) + "\n");

  write_plots_from_rows(out.rows, ctx.out);
  return out;
}

// ---------------------------------------------------------------------------
// Plotting from the metrics CSV (the CSV is the source of truth; the run
// itself and the `plot` subcommand share this path).

inline std::vector<CheckpointRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open metrics csv: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw validation_error("metrics csv is empty: " + path.string());
  std::vector<CheckpointRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 9) throw validation_error("metrics csv: short row '" + line + "'");
    CheckpointRow r;
    r.method = f[0];
    r.lambda = std::stod(f[1]);
    r.seed = std::stoull(f[2]);
    r.update_index = std::stoi(f[3]);
    r.episode_k = std::stoll(f[4]);
    r.ret = std::stod(f[5]);
    r.dp = std::stod(f[6]);
    r.eqopt = std::stod(f[7]);
    r.regret = std::stod(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_plots_from_rows(const std::vector<CheckpointRow>& rows,
                                  const std::filesystem::path& out_dir) {
  using experiment_detail::atomic_write;
  struct Key {
    std::string method;
    double lambda;
    bool operator<(const Key& o) const {
      return method != o.method ? method < o.method : lambda < o.lambda;
    }
  };
  std::map<Key, std::map<std::int64_t, std::vector<const CheckpointRow*>>> grouped;
  std::vector<Key> order;  // first-appearance order
  for (const auto& r : rows) {
    Key key{r.method, r.lambda};
    if (!grouped.count(key)) order.push_back(key);
    grouped[key][r.episode_k].push_back(&r);
  }
  std::sort(order.begin(), order.end(),
            [&](const Key& a, const Key& b) {
              return a.method != b.method ? a.method < b.method : a.lambda < b.lambda;
            });
  auto label = [](const Key& k) {
    if (k.lambda > 0) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%s (l=%g)", k.method.c_str(), k.lambda);
      return std::string(buf);
    }
    return k.method;
  };

  auto make_series = [&](auto pick, bool band) {
    std::vector<svg::Series> out;
    for (const auto& key : order) {
      svg::Series s;
      s.label = label(key);
      for (const auto& [k, list] : grouped[key]) {
        std::vector<double> vals;
        for (const auto* r : list) {
          const double v = pick(*r);
          if (!std::isnan(v)) vals.push_back(v);
        }
        if (vals.empty()) continue;
        double m = 0.0;
        for (double v : vals) m += v;
        m /= vals.size();
        s.x.push_back(static_cast<double>(k));
        s.y.push_back(m);
        if (band && vals.size() >= 2) {
          double ss = 0.0;
          for (double v : vals) ss += (v - m) * (v - m);
          const double half = 1.96 * std::sqrt(ss / (vals.size() - 1.0)) /
                              std::sqrt(static_cast<double>(vals.size()));
          s.lo.push_back(m - half);
          s.hi.push_back(m + half);
        }
      }
      if (!band) {
        s.lo.clear();
        s.hi.clear();
      }
      if (s.lo.size() != s.x.size()) {
        s.lo.clear();
        s.hi.clear();
      }
      if (!s.x.empty()) out.push_back(std::move(s));
    }
    return out;
  };

  auto emit = [&](const std::string& file, const std::string& title,
                  const std::string& ylab, auto pick) {
    std::ostringstream body;
    svg::write_chart(body, title, "training episode k", ylab, make_series(pick, true),
                     /*logx=*/true);
    atomic_write(out_dir / file, body.str());
  };
  emit("return_vs_k.svg", "Episodic return over training", "episodic return",
       [](const CheckpointRow& r) { return r.ret; });
  emit("dp_violation_vs_k.svg", "DP violation over training", "mean step violation",
       [](const CheckpointRow& r) { return r.dp; });
  emit("eqopt_violation_vs_k.svg", "EqOpt violation over training",
       "mean step violation", [](const CheckpointRow& r) { return r.eqopt; });
  emit("regret_vs_k.svg", "Reward regret over training", "per-episode regret",
       [](const CheckpointRow& r) { return r.regret; });

  // Pareto: checkpoint trajectory in (violation, return) space, final point marked
  auto pareto = [&](const std::string& file, const std::string& title, auto viol) {
    std::vector<svg::Series> series;
    for (const auto& key : order) {
      svg::Series s;
      s.label = label(key);
      s.marker_on_last = true;
      for (const auto& [k, list] : grouped[key]) {
        double mv = 0.0, mr = 0.0;
        int n = 0;
        for (const auto* r : list) {
          const double v = viol(*r);
          if (std::isnan(v)) continue;
          mv += v;
          mr += r->ret;
          ++n;
        }
        if (!n) continue;
        s.x.push_back(mv / n);
        s.y.push_back(mr / n);
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
    std::ostringstream body;
    svg::write_chart(body, title, "mean step violation", "episodic return", series,
                     /*logx=*/false, /*scatter=*/true);
    atomic_write(out_dir / file, body.str());
  };
  pareto("pareto_dp.svg", "Return vs DP violation",
         [](const CheckpointRow& r) { return r.dp; });
  pareto("pareto_eqopt.svg", "Return vs EqOpt violation",
         [](const CheckpointRow& r) { return r.eqopt; });
}

inline void plot_metrics_csv(const std::filesystem::path& csv,
                             const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_plots_from_rows(read_metrics_csv(csv), out_dir);
}

// ---------------------------------------------------------------------------
// Config file parsing.

inline MethodSpec method_from_name(const std::string& name, double lambda) {
  MethodSpec m;
  m.lambda = lambda;
  if (name == "constrained-DP") m.kind = ConstraintKind::dp;
  else if (name == "constrained-EqOpt") m.kind = ConstraintKind::eqopt;
  else if (name == "penalty-DP") m.kind = ConstraintKind::dp_penalty;
  else if (name == "penalty-EqOpt") m.kind = ConstraintKind::eqopt_penalty;
  else if (name == "unconstrained") m.kind = ConstraintKind::none;
  else
    throw validation_error(
        "unknown method '" + name +
        "' (expected constrained-DP, constrained-EqOpt, penalty-DP, penalty-EqOpt, "
        "or unconstrained)");
  return m;
}

// Resolves the instance (inline generator config or spec file) and every
// run parameter.  Paths are relative to base_dir.
inline ExperimentConfig config_from_json(const json& doc,
                                         const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  const auto& inst = doc.at("instance");
  if (inst.contains("spec_file")) {
    cfg.problem = problem_from_json(
        load_json_file((base_dir / inst["spec_file"].get<std::string>()).string(),
                       "problem spec"));
  } else if (inst.contains("synthetic")) {
    SyntheticConfig sc;
    const auto& js = inst["synthetic"];
    if (js.contains("horizon")) sc.horizon = js["horizon"].get<int>();
    if (js.contains("init_qual_prob")) sc.init_qual_prob = js["init_qual_prob"].get<double>();
    if (js.contains("beta1")) sc.beta1 = js["beta1"].get<std::vector<double>>();
    if (js.contains("beta2")) sc.beta2 = js["beta2"].get<std::vector<double>>();
    cfg.problem = build_synthetic(sc);
  } else if (inst.contains("fico")) {
    ScoreDataConfig fc;
    const auto& jf = inst["fico"];
    if (jf.contains("horizon")) fc.horizon = jf["horizon"].get<int>();
    if (jf.contains("beta1")) fc.beta1 = jf["beta1"].get<std::vector<double>>();
    if (jf.contains("beta2")) fc.beta2 = jf["beta2"].get<std::vector<double>>();
    EmpiricalTables emp;
    if (jf.contains("empirical"))
      emp = load_empirical_file((base_dir / jf["empirical"].get<std::string>()).string());
    else if (jf.value("standin", false))
      emp = standin_empirical();
    else
      throw validation_error(
          "fico instance: set \"empirical\": <file> or \"standin\": true; " +
          std::string(kEmpiricalSchemaHint));
    cfg.problem = build_fico(fc, emp);
  } else {
    throw validation_error("instance: expected spec_file, synthetic, or fico");
  }

  for (const auto& jm : doc.at("methods")) {
    const std::string name = jm.at("kind").get<std::string>();
    if (jm.contains("lambdas")) {
      for (double l : jm["lambdas"].get<std::vector<double>>())
        cfg.methods.push_back(method_from_name(name, l));
    } else {
      cfg.methods.push_back(method_from_name(name, jm.value("lambda", 0.0)));
    }
  }
  if (cfg.methods.empty()) throw validation_error("methods: need at least one");

  const std::string profile = doc.value("profile", "desk");
  int l_min = 3, l_max = profile == "full" ? 18 : 12;
  cfg.eval_episodes = profile == "full" ? 8000 : 2000;
  if (doc.contains("checkpoints")) {
    const auto& jc = doc["checkpoints"];
    if (jc.is_array()) {
      cfg.checkpoints = jc.get<std::vector<std::int64_t>>();
    } else {
      l_min = jc.value("l_min", l_min);
      l_max = jc.value("l_max", l_max);
      cfg.checkpoints = power_checkpoints(l_min, l_max);
    }
  } else {
    cfg.checkpoints = power_checkpoints(l_min, l_max);
  }

  cfg.n_per_group = doc.value("n_per_group", cfg.n_per_group);
  cfg.eval_episodes = doc.value("eval_episodes", cfg.eval_episodes);
  if (doc.contains("seed_list")) {
    cfg.seeds = doc["seed_list"].get<std::vector<std::uint64_t>>();
  } else {
    const int n = doc.value("seeds", 5);
    const std::uint64_t base = doc.value("base_seed", 1);
    cfg.seeds.clear();
    for (int i = 0; i < n; ++i) cfg.seeds.push_back(base + i);
  }
  cfg.delta = doc.value("delta", cfg.delta);
  cfg.survival = doc.value("survival", cfg.survival);
  cfg.out_dir = doc.value("out_dir", cfg.out_dir);
  cfg.threads = doc.value("threads", cfg.threads);
  cfg.dump_trajectories = doc.value("dump_trajectories", false);
  cfg.snapshot_models = doc.value("snapshot_models", false);
  if (doc.contains("solver")) {
    const auto& js = doc["solver"];
    cfg.solver.restarts = js.value("restarts", cfg.solver.restarts);
    cfg.solver.max_inner = js.value("max_inner", cfg.solver.max_inner);
    cfg.solver.max_outer = js.value("max_outer", cfg.solver.max_outer);
  }
  return cfg;
}

}  // namespace stepfair
