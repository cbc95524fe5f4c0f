#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lanegate/hmdp.hpp"

namespace lanegate {

struct PriorConfig {
  double p_keep = 0.8;
  double p_min = 0.05;
  int k_max = 3;
};

/// Additive longitudinal noise: variance(h) = initial_variance + h * step_sigma^2.
struct NoiseModel {
  double initial_variance = 0.0;
  double step_sigma = 0.5;
};

struct PredictionConfig {
  int horizon = 3;
  double dt = 0.4;
  LaneGeometry geom;
  KinematicParams kin;
  PriorConfig prior;
  NoiseModel noise;
};

struct ActionProbability {
  Action action;
  double probability = 0.0;
};

/// Maneuver prior for a surrounding vehicle. Zero-probability actions are
/// omitted; the result is in canonical action order.
inline std::vector<ActionProbability> sv_action_prior(const ManeuverState& m,
                                                      const LaneGeometry& geom, double p_keep,
                                                      bool lane_change_in_progress = false) {
  const std::vector<Action> feasible = feasible_actions(m, geom, lane_change_in_progress);
  const int alternatives = static_cast<int>(feasible.size()) - 1;
  std::vector<ActionProbability> out;
  if (alternatives <= 0 || p_keep >= 1.0) {
    out.push_back({kKeep, 1.0});
    return out;
  }
  const double share = (1.0 - p_keep) / alternatives;
  for (const Action& a : feasible) {
    const double p = a == kKeep ? p_keep : share;
    if (p > 0.0) out.push_back({a, p});
  }
  return out;
}

struct BranchHypothesis {
  int sv_id = 0;
  std::vector<Action> actions;
  double probability = 1.0;
  std::vector<KinematicState> means;        // h = 1..H
  std::vector<ManeuverState> maneuvers;     // h = 1..H
  std::vector<double> cov_long;             // h = 1..H, longitudinal position variance

  bool all_keep() const {
    return std::all_of(actions.begin(), actions.end(), [](const Action& a) { return a == kKeep; });
  }
};

/// Rolls one maneuver hypothesis forward. Means follow the shared kinematic
/// maps; only the longitudinal variance is tracked.
inline BranchHypothesis propagate_branch(const KinematicState& x0, const ManeuverState& m0,
                                         const std::vector<Action>& actions,
                                         const PredictionConfig& cfg,
                                         bool lane_change_in_progress = false) {
  BranchHypothesis b;
  b.actions = actions;
  ManeuverState m = m0;
  KinematicState x = x0;
  const double step_var = cfg.noise.step_sigma * cfg.noise.step_sigma;
  for (std::size_t h = 0; h < actions.size(); ++h) {
    if (!is_feasible(m, actions[h], cfg.geom, lane_change_in_progress)) {
      throw std::invalid_argument("propagate_branch: infeasible action sequence");
    }
    const StepResult r = hybrid_step(m, x, actions[h], cfg.dt, cfg.kin, cfg.geom);
    m = r.maneuver;
    x = r.state;
    b.means.push_back(x);
    b.maneuvers.push_back(m);
    b.cov_long.push_back(cfg.noise.initial_variance + static_cast<double>(h + 1) * step_var);
  }
  return b;
}

struct SvObservation {
  int id = 0;
  ManeuverState maneuver;
  KinematicState state;
  bool lane_change_in_progress = false;
};

struct SvScenarios {
  int sv_id = 0;
  std::vector<BranchHypothesis> branches;
};

using ScenarioTree = std::vector<SvScenarios>;

/// Every action sequence of length H with its prior probability, before
/// pruning. Sequences come out in lexicographic order.
inline std::vector<BranchHypothesis> enumerate_branches(const SvObservation& sv,
                                                        const PredictionConfig& cfg) {
  std::vector<BranchHypothesis> out;
  std::vector<Action> prefix;
  auto recurse = [&](auto&& self, const ManeuverState& m, double prob, int depth) -> void {
    if (depth == cfg.horizon) {
      BranchHypothesis b =
          propagate_branch(sv.state, sv.maneuver, prefix, cfg, sv.lane_change_in_progress);
      b.sv_id = sv.id;
      b.probability = prob;
      out.push_back(std::move(b));
      return;
    }
    for (const ActionProbability& ap :
         sv_action_prior(m, cfg.geom, cfg.prior.p_keep, sv.lane_change_in_progress)) {
      prefix.push_back(ap.action);
      self(self, maneuver_transition(m, ap.action, cfg.geom), prob * ap.probability, depth + 1);
      prefix.pop_back();
    }
  };
  recurse(recurse, sv.maneuver, 1.0, 0);
  return out;
}

/// Drops branches below p_min, keeps the k_max most probable (ties go to the
/// lexicographically smaller sequence), always retains the all-keep branch and
/// renormalizes per vehicle.
inline ScenarioTree prune_tree(const ScenarioTree& tree, double p_min, int k_max) {
  ScenarioTree out;
  out.reserve(tree.size());
  for (const SvScenarios& sv : tree) {
    std::vector<BranchHypothesis> kept;
    const BranchHypothesis* keep_branch = nullptr;
    for (const BranchHypothesis& b : sv.branches) {
      if (b.all_keep()) keep_branch = &b;
      if (b.probability >= p_min) kept.push_back(b);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.probability != b.probability) return a.probability > b.probability;
      return sequence_less(a.actions, b.actions);
    });
    const std::size_t cap = static_cast<std::size_t>(std::max(k_max, 1));
    if (kept.size() > cap) kept.resize(cap);
    const bool has_keep =
        std::any_of(kept.begin(), kept.end(), [](const auto& b) { return b.all_keep(); });
    if (!has_keep && keep_branch != nullptr) {
      if (kept.size() == cap) kept.pop_back();
      kept.push_back(*keep_branch);
    }
    const double total = std::accumulate(kept.begin(), kept.end(), 0.0,
                                         [](double s, const auto& b) { return s + b.probability; });
    for (auto& b : kept) b.probability /= total;
    out.push_back({sv.sv_id, std::move(kept)});
  }
  return out;
}

inline ScenarioTree build_scenario_tree(const std::vector<SvObservation>& svs,
                                        const PredictionConfig& cfg) {
  if (cfg.horizon < 1) throw std::invalid_argument("build_scenario_tree: horizon must be >= 1");
  ScenarioTree raw;
  raw.reserve(svs.size());
  for (const SvObservation& sv : svs) raw.push_back({sv.id, enumerate_branches(sv, cfg)});
  return prune_tree(raw, cfg.prior.p_min, cfg.prior.k_max);
}

}  // namespace lanegate
