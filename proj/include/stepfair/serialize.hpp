#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepfair/core.hpp"
#include "stepfair/datagen.hpp"
#include "stepfair/estimate.hpp"

namespace stepfair {

using json = nlohmann::json;

// Problem schema:
// {features, horizon, groups: [{id, proportion, initial: [S],
//  kernel: [[S] x (S*A)], reward_mean: [[A] x S],
//  reward_noise?: "deterministic"|"bernoulli", reward_raw_bounds?: [lo, hi]}]}
// Kernel rows are ordered (s, a) with s = 2x + y, a fastest.
inline json to_json(const Problem& p) {
  json doc;
  doc["features"] = p.space.feature_count;
  doc["horizon"] = p.space.horizon;
  json groups = json::array();
  const int S = p.space.state_count();
  for (int g = 0; g < p.group_count(); ++g) {
    json jg;
    jg["id"] = p.groups.ids[g];
    jg["proportion"] = p.groups.proportions[g];
    jg["initial"] = p.kernels[g].init;
    json rows = json::array();
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < kActions; ++a) {
        json row = json::array();
        for (int s2 = 0; s2 < S; ++s2) row.push_back(p.kernels[g].at(s, a, s2));
        rows.push_back(std::move(row));
      }
    jg["kernel"] = std::move(rows);
    json rmean = json::array();
    for (int s = 0; s < S; ++s) {
      json row = json::array();
      for (int a = 0; a < kActions; ++a) row.push_back(p.rewards[g].at(s, a));
      rmean.push_back(std::move(row));
    }
    jg["reward_mean"] = std::move(rmean);
    jg["reward_noise"] =
        p.rewards[g].sampling == RewardModel::Sampling::bernoulli ? "bernoulli"
                                                                  : "deterministic";
    jg["reward_raw_bounds"] = {p.rewards[g].raw_lo, p.rewards[g].raw_hi};
    groups.push_back(std::move(jg));
  }
  doc["groups"] = std::move(groups);
  return doc;
}

inline Problem problem_from_json(const json& doc) {
  Problem p;
  try {
    p.space.feature_count = doc.at("features").get<int>();
    p.space.horizon = doc.at("horizon").get<int>();
    const int S = p.space.state_count();
    for (const auto& jg : doc.at("groups")) {
      p.groups.ids.push_back(jg.at("id").get<std::string>());
      p.groups.proportions.push_back(jg.at("proportion").get<double>());
      TransitionKernel k;
      k.feature_count = p.space.feature_count;
      k.init = jg.at("initial").get<std::vector<double>>();
      const auto& rows = jg.at("kernel");
      if (static_cast<int>(rows.size()) != S * kActions)
        throw validation_error("problem json: expected " +
                               std::to_string(S * kActions) + " kernel rows");
      k.rows.reserve(static_cast<std::size_t>(S) * kActions * S);
      for (const auto& row : rows)
        for (const auto& v : row) k.rows.push_back(v.get<double>());
      p.kernels.push_back(std::move(k));
      RewardModel r;
      r.feature_count = p.space.feature_count;
      for (const auto& row : jg.at("reward_mean"))
        for (const auto& v : row) r.mean.push_back(v.get<double>());
      if (jg.contains("reward_noise") && jg["reward_noise"] == "bernoulli")
        r.sampling = RewardModel::Sampling::bernoulli;
      if (jg.contains("reward_raw_bounds")) {
        r.raw_lo = jg["reward_raw_bounds"][0].get<double>();
        r.raw_hi = jg["reward_raw_bounds"][1].get<double>();
      }
      p.rewards.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw validation_error(std::string("problem json: ") + e.what());
  }
  validate(p);
  return p;
}

// Policy schema: {features, horizon, groups: {id: [[pi(a=1|x) per x] per h]}}.
inline json to_json(const Policy& pi, const std::vector<std::string>& ids) {
  json doc;
  doc["features"] = pi.feature_count;
  doc["horizon"] = pi.horizon;
  json groups;
  for (int g = 0; g < pi.group_count(); ++g) {
    json steps = json::array();
    for (int h = 0; h < pi.horizon; ++h) {
      json row = json::array();
      for (int x = 0; x < pi.feature_count; ++x) row.push_back(pi.at(g, h, x));
      steps.push_back(std::move(row));
    }
    groups[ids[g]] = std::move(steps);
  }
  doc["groups"] = std::move(groups);
  return doc;
}

// Group order follows ids; the policy file must cover every id.
inline Policy policy_from_json(const json& doc, const std::vector<std::string>& ids) {
  Policy pi;
  try {
    pi.feature_count = doc.at("features").get<int>();
    pi.horizon = doc.at("horizon").get<int>();
    const auto& groups = doc.at("groups");
    for (const auto& id : ids) {
      if (!groups.contains(id))
        throw validation_error("policy json: missing group '" + id + "'");
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(pi.horizon) * pi.feature_count);
      for (const auto& row : groups.at(id))
        for (const auto& v : row) flat.push_back(v.get<double>());
      if (static_cast<int>(flat.size()) != pi.horizon * pi.feature_count)
        throw validation_error("policy json: wrong entry count for group '" + id + "'");
      pi.accept.push_back(std::move(flat));
    }
  } catch (const json::exception& e) {
    throw validation_error(std::string("policy json: ") + e.what());
  }
  return pi;
}

inline constexpr const char* kEmpiricalSchemaHint =
    "expected {\"groups\": [{\"id\": str, \"score_marginal\": [5 numbers], "
    "\"qualify_given_score\": [5 numbers]}, ...]} with at least two groups";

inline json to_json(const EmpiricalTables& t) {
  json doc;
  json groups = json::array();
  for (const auto& g : t.groups)
    groups.push_back({{"id", g.id},
                      {"score_marginal", g.score_marginal},
                      {"qualify_given_score", g.qualify_given_score}});
  doc["groups"] = std::move(groups);
  return doc;
}

inline EmpiricalTables empirical_from_json(const json& doc) {
  EmpiricalTables t;
  try {
    for (const auto& jg : doc.at("groups")) {
      EmpiricalTables::Group g;
      g.id = jg.at("id").get<std::string>();
      g.score_marginal = jg.at("score_marginal").get<std::vector<double>>();
      g.qualify_given_score = jg.at("qualify_given_score").get<std::vector<double>>();
      t.groups.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw validation_error(std::string("empirical file: ") + e.what() + "; " +
                           kEmpiricalSchemaHint);
  }
  if (t.groups.size() < 2)
    throw validation_error(std::string("empirical file: need at least two groups; ") +
                           kEmpiricalSchemaHint);
  return t;
}

// Estimator snapshot tagged by episode.
inline json to_json(const EstimatedModel& m, const CountTable& counts,
                    const RelaxationSchedule& sched,
                    const std::vector<std::string>& ids) {
  json doc;
  doc["episode"] = m.episode;
  doc["delta"] = m.delta;
  doc["epsilon_k"] = sched.epsilon;
  doc["eta_k"] = sched.eta;
  doc["c_hat"] = sched.c_hat;
  doc["d_hat"] = sched.d_hat;
  json groups = json::array();
  for (int g = 0; g < m.group_count(); ++g) {
    json jg;
    jg["id"] = ids[g];
    jg["visits"] = counts.visits[g];
    jg["kernel"] = m.kernel[g];
    jg["r_hat"] = m.r_hat[g];
    jg["bonus"] = m.bonus[g];
    jg["n_min"] = m.n_min[g];
    jg["p_y1_min"] = m.p_y1_min[g];
    groups.push_back(std::move(jg));
  }
  doc["groups"] = std::move(groups);
  return doc;
}

inline json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in)
    throw validation_error(std::string(what) + ": cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw validation_error(std::string(what) + ": '" + path + "' is not valid JSON (" +
                           e.what() + ")");
  }
}

inline EmpiricalTables load_empirical_file(const std::string& path) {
  try {
    return empirical_from_json(load_json_file(path, "empirical file"));
  } catch (const validation_error& e) {
    throw validation_error(std::string(e.what()) + "; " + kEmpiricalSchemaHint);
  }
}

}  // namespace stepfair
