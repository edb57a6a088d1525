#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stepfair/experiment.hpp"
#include "stepfair/metrics.hpp"
#include "stepfair/serialize.hpp"

namespace fs = std::filesystem;
using namespace stepfair;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override,
            long seed_override, int threads_override) {
  const fs::path cfg_path(config_path);
  ExperimentConfig cfg =
      config_from_json(load_json_file(config_path, "config"), cfg_path.parent_path());
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override >= 0) {
    const std::size_t n = cfg.seeds.size();
    cfg.seeds.clear();
    for (std::size_t i = 0; i < n; ++i)
      cfg.seeds.push_back(static_cast<std::uint64_t>(seed_override) + i);
  }
  if (threads_override > 0) cfg.threads = threads_override;
  const auto out = run_experiment(cfg);
  std::cout << "wrote " << out.metrics_csv.string() << "\n"
            << "wrote " << out.diagnostics_csv.string() << "\n"
            << "wrote " << out.summary_json.string() << "\n";
  return 0;
}

int cmd_datagen(const std::string& variant, const std::string& empirical,
                bool use_standin, int horizon, const std::string& out_path) {
  Problem p;
  if (variant == "synthetic") {
    SyntheticConfig cfg;
    if (horizon > 0) cfg.horizon = horizon;
    p = build_synthetic(cfg);
  } else if (variant == "fico") {
    ScoreDataConfig cfg;
    if (horizon > 0) cfg.horizon = horizon;
    EmpiricalTables emp;
    if (!empirical.empty())
      emp = load_empirical_file(empirical);
    else if (use_standin)
      emp = standin_empirical();
    else
      throw validation_error(std::string("fico: pass --empirical FILE or --standin; ") +
                             kEmpiricalSchemaHint);
    p = build_fico(cfg, emp);
  } else {
    throw validation_error("datagen variant must be 'synthetic' or 'fico'");
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  out << to_json(p).dump(2) << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& spec_path, const std::string& policy_path) {
  const Problem p = problem_from_json(load_json_file(spec_path, "problem spec"));
  const Policy pi =
      policy_from_json(load_json_file(policy_path, "policy"), p.groups.ids);
  check_policy_shape(p, pi);
  const auto profile = expected_reward_profile(forward_occupancy(p, pi), p);
  double ret = 0.0;
  for (double r : profile) ret += r;
  json out;
  out["return"] = ret;
  out["dp_violation"] = violation_dp(p, pi).mean;
  try {
    out["eqopt_violation"] = violation_eqopt(p, pi).mean;
  } catch (const degenerate_conditioning& e) {
    out["eqopt_violation"] = nullptr;
    out["eqopt_error"] = e.what();
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_dir) {
  plot_metrics_csv(csv_path, out_dir);
  std::cout << "wrote plots to " << out_dir << "\n";
  return 0;
}

// Invariant and reachability report; exit 2 when the spec is malformed.
int cmd_verify(const std::string& spec_path) {
  const Problem p = problem_from_json(load_json_file(spec_path, "problem spec"));
  const auto rep = check_reachability(p);
  std::cout << "groups: " << p.group_count() << ", features: " << p.space.feature_count
            << ", horizon: " << p.space.horizon << "\n";
  std::printf("min kernel entry: %.6g\nmin initial entry: %.6g\n", rep.min_kernel_entry,
              rep.min_init_entry);
  if (rep.zero_entries.empty()) {
    std::cout << "all kernel entries positive (reachability assumption holds)\n";
  } else {
    std::cout << rep.zero_entries.size()
              << " zero kernel entries (flagged, not rejected); first few:\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, rep.zero_entries.size()); ++i) {
      const auto& z = rep.zero_entries[i];
      std::cout << "  group=" << z.group << " s=" << z.s << " a=" << z.a
                << " s'=" << z.s2 << "\n";
    }
  }
  std::cout << "spec ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-constrained tabular episodic RL toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, empirical, spec_path, policy_path, csv_path;
  std::string variant;
  long seed = -1;
  int threads = 0, horizon = 0;
  bool use_standin = false;

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config JSON")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--seed", seed, "base seed override");
  run->add_option("--threads", threads, "worker threads override");

  auto* dg = app.add_subcommand("datagen", "Generate a problem instance");
  dg->add_option("variant", variant, "synthetic | fico")->required();
  dg->add_option("--empirical", empirical, "empirical score-table JSON (fico)");
  dg->add_flag("--standin", use_standin,
               "use the built-in clearly-labeled synthetic stand-in tables (fico)");
  dg->add_option("--horizon", horizon, "episode horizon");
  dg->add_option("-o,--out", spec_path, "output spec path")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a policy on a problem spec");
  ev->add_option("spec", spec_path, "problem spec JSON")->required();
  ev->add_option("policy", policy_path, "policy JSON")->required();

  auto* pl = app.add_subcommand("plot", "Render SVG plots from a metrics CSV");
  pl->add_option("csv", csv_path, "metrics.csv path")->required();
  pl->add_option("-o,--out", out_dir, "output directory")->required();

  auto* vf = app.add_subcommand("verify", "Validate a problem spec and report reachability");
  vf->add_option("spec", spec_path, "problem spec JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, seed, threads);
    if (dg->parsed()) return cmd_datagen(variant, empirical, use_standin, horizon, spec_path);
    if (ev->parsed()) return cmd_eval(spec_path, policy_path);
    if (pl->parsed()) return cmd_plot(csv_path, out_dir);
    if (vf->parsed()) return cmd_verify(spec_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
