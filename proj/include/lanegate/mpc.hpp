#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "lanegate/hmdp.hpp"
#include "lanegate/prediction.hpp"
#include "lanegate/safety.hpp"

namespace lanegate {

/// Objective weights. selector_table is indexed [lat_action + 1][mode_next + 1].
struct CostWeights {
  double w_slack = 100.0;    // w_s
  double w_global = 1.0e4;   // w_q
  std::array<std::array<double, 3>, 3> selector_table{{
      {6.0, 5.0, 7.0},  // lane change left
      {1.0, 0.0, 2.0},  // lane keep
      {6.0, 5.0, 7.0},  // lane change right
  }};
  double w_speed = 1.0;
  double v_ref = 25.0;

  double selector_weight(const Selector& s) const {
    return selector_table[s.lat_action + 1][s.mode_next + 1];
  }
};

struct PlannerConfig {
  PredictionConfig prediction;
  IdmParams idm;
  RiskParams risk;
  CostWeights weights;
  double perception_range = 100.0;
  double vehicle_length = 5.0;
  bool hysteresis = true;
};

enum class Layer { kNominal, kRelaxed, kFallback };

inline std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::kNominal: return "nominal";
    case Layer::kRelaxed: return "relaxed";
    case Layer::kFallback: return "fallback";
  }
  return "unknown";
}

struct CandidatePlan {
  std::vector<Action> actions;
  std::vector<Selector> selectors;
  std::vector<KinematicState> ev_states;     // h = 1..H
  std::vector<ManeuverState> maneuvers;      // h = 1..H
};

/// Depth-first enumeration of all feasible EV action sequences of length
/// `horizon`, in lexicographic order.
inline std::vector<CandidatePlan> enumerate_plans(const ManeuverState& m0, const KinematicState& x0,
                                                  const PredictionConfig& cfg,
                                                  bool lane_change_in_progress = false) {
  std::vector<CandidatePlan> out;
  CandidatePlan cur;
  auto recurse = [&](auto&& self, const ManeuverState& m, const KinematicState& x) -> void {
    if (static_cast<int>(cur.actions.size()) == cfg.horizon) {
      out.push_back(cur);
      return;
    }
    for (const Action& a : feasible_actions(m, cfg.geom, lane_change_in_progress)) {
      const StepResult r = hybrid_step(m, x, a, cfg.dt, cfg.kin, cfg.geom);
      cur.actions.push_back(a);
      cur.selectors.push_back(r.selector);
      cur.ev_states.push_back(r.state);
      cur.maneuvers.push_back(r.maneuver);
      self(self, r.maneuver, r.state);
      cur.actions.pop_back();
      cur.selectors.pop_back();
      cur.ev_states.pop_back();
      cur.maneuvers.pop_back();
    }
  };
  recurse(recurse, m0, x0);
  return out;
}

/// Threshold and slack caps for one (branch, step) safety constraint.
struct GapRequirement {
  double threshold = 0.0;
  double hysteresis_cap = 0.0;
  double global_cap = 0.0;
  bool hysteresis_form = false;  // frozen-release form with bounded slack
};

/// `corridor_source` marks a vehicle that is only constrained because the EV
/// is still leaving its lane; those keep the plain chance-constraint form.
inline GapRequirement required_gap(double d_idm, double gap_variance, const HysteresisEntry& hyst,
                                   int sign, Layer layer, const RiskParams& risk, double z_eps,
                                   bool corridor_source = false) {
  GapRequirement r;
  r.hysteresis_form = hyst.corrective && sign > 0 && !corridor_source;
  const double d_hc = hard_margin(d_idm, gap_variance, z_eps);
  if (!r.hysteresis_form) {
    r.threshold = d_hc;
  } else if (layer == Layer::kNominal) {
    r.threshold = *hyst.frozen_release;
    r.hysteresis_cap = *hyst.frozen_bandwidth;
  } else {
    // The relaxed layer measures the corrective buffer from the current
    // release threshold; the frozen one may carry a stale closing-speed term.
    r.threshold = thresholds(d_hc, bandwidth(d_idm, risk), risk).release;
    r.hysteresis_cap = *hyst.frozen_bandwidth;
  }
  if (layer == Layer::kRelaxed) r.global_cap = risk.relax_ratio * d_idm;
  return r;
}

struct SlackEntry {
  int sv_id = 0;
  int step = 0;  // 0-based horizon index
  double hysteresis = 0.0;
  double global = 0.0;
  double hysteresis_cap = 0.0;
  double global_cap = 0.0;
};

struct SlackAssignment {
  std::vector<SlackEntry> entries;  // only nonzero slacks are listed

  double total_hysteresis() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.hysteresis;
    return s;
  }
  double total_global() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.global;
    return s;
  }
  double total() const { return total_hysteresis() + total_global(); }
};

/// Per-vehicle quantities fixed for one decision.
struct SvConstraint {
  int sv_id = 0;
  int sign = 1;
  double d_idm = 0.0;
  HysteresisEntry hysteresis;
  std::vector<BranchHypothesis> branches;
};

struct EgoSnapshot {
  ManeuverState maneuver;
  KinematicState state;
  bool lane_change_in_progress = false;
  int source_lane = 0;                 // lane being left while a change executes
  int last_lat = 0;                    // lateral command of the previous decision
  std::vector<Action> committed_plan;  // previous decision's plan
};

struct Snapshot {
  EgoSnapshot ev;
  std::vector<SvObservation> svs;
};

/// Speed cap while the EV follows a vehicle it has had to correct for.
struct FollowCap {
  int lane = 0;
  double speed = 0.0;
};

/// Everything the inner search needs for one decision.
struct DecisionProblem {
  EgoSnapshot ev;
  std::vector<SvConstraint> constraints;
  std::optional<FollowCap> follow;
  double z_eps = 0.0;
};

/// Smallest slacks that make `plan` satisfy every active constraint, or
/// nothing when the caps cannot close the deficit. Per (vehicle, step) the
/// cheaper hysteresis slack absorbs what it can before global slack is used.
inline std::optional<SlackAssignment> minimal_slacks(const CandidatePlan& plan,
                                                     const DecisionProblem& problem,
                                                     const PlannerConfig& cfg, Layer layer) {
  SlackAssignment out;
  const int horizon = static_cast<int>(plan.actions.size());
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  for (const SvConstraint& sv : problem.constraints) {
    for (int h = 0; h < horizon; ++h) {
      const int ev_lane = plan.maneuvers[h].lane;
      const double ev_x = plan.ev_states[h].x;
      double hyst_deficit = kNone;
      double hard_deficit = kNone;
      double hyst_cap = 0.0;
      double global_cap = 0.0;
      for (const BranchHypothesis& b : sv.branches) {
        const int sv_lane = b.maneuvers[h].lane;
        bool corridor_source = false;
        if (sv_lane != ev_lane) {
          if (!problem.ev.lane_change_in_progress || sv_lane != problem.ev.source_lane) continue;
          corridor_source = true;
        }
        const GapRequirement req = required_gap(sv.d_idm, b.cov_long[h], sv.hysteresis, sv.sign,
                                                layer, cfg.risk, problem.z_eps, corridor_source);
        const double gap = signed_gap(ev_x, b.means[h].x, sv.sign) - cfg.vehicle_length;
        const double deficit = req.threshold - gap;
        if (req.hysteresis_form) {
          hyst_deficit = std::max(hyst_deficit, deficit);
          hyst_cap = req.hysteresis_cap;
        } else {
          hard_deficit = std::max(hard_deficit, deficit);
        }
        global_cap = req.global_cap;
      }
      if (hyst_deficit <= 0.0 && hard_deficit <= 0.0) continue;
      // Global slack is the expensive one: use the least that still lets the
      // capped hysteresis slack close the remaining frozen-release deficit.
      const double global_needed = std::max({0.0, hard_deficit, hyst_deficit - hyst_cap});
      if (global_needed > global_cap) return std::nullopt;
      SlackEntry e;
      e.sv_id = sv.sv_id;
      e.step = h;
      e.global = global_needed;
      e.hysteresis = std::clamp(hyst_deficit - global_needed, 0.0, hyst_cap);
      e.hysteresis_cap = hyst_cap;
      e.global_cap = global_cap;
      if (e.global > 0.0 || e.hysteresis > 0.0) out.entries.push_back(e);
    }
  }
  return out;
}

/// Slack penalties, selector weights and speed tracking. On steps spent in a
/// followed vehicle's lane the tracked speed is capped at that vehicle's
/// speed; the progress given up, v_ref minus the cap, is still charged.
inline double plan_cost(const CandidatePlan& plan, const SlackAssignment& slacks,
                        const CostWeights& w, const std::optional<FollowCap>& follow = std::nullopt) {
  double cost = 0.0;
  for (const SlackEntry& e : slacks.entries) cost += w.w_slack * e.hysteresis + w.w_global * e.global;
  for (std::size_t h = 0; h < plan.selectors.size(); ++h) {
    cost += w.selector_weight(plan.selectors[h]);
    double ref = w.v_ref;
    if (follow && plan.maneuvers[h].lane == follow->lane) ref = std::min(ref, follow->speed);
    cost += w.w_speed * (std::abs(plan.ev_states[h].v - ref) + (w.v_ref - ref));
  }
  return cost;
}

struct Decision {
  Action first_action;
  ManeuverState next_maneuver;
  CandidatePlan plan;
  SlackAssignment slacks;
  double cost = 0.0;
  Layer layer = Layer::kNominal;
  std::vector<int> corrective_ids;
};

/// Exhaustive search over `plans` at the given layer. Strict improvement is
/// required to replace the incumbent, so equal costs keep the earlier
/// (lexicographically smaller) plan.
inline std::optional<Decision> solve_layer(const std::vector<CandidatePlan>& plans,
                                           const DecisionProblem& problem,
                                           const PlannerConfig& cfg, Layer layer) {
  std::optional<Decision> best;
  for (const CandidatePlan& plan : plans) {
    std::optional<SlackAssignment> slacks = minimal_slacks(plan, problem, cfg, layer);
    if (!slacks) continue;
    const double cost = plan_cost(plan, *slacks, cfg.weights, problem.follow);
    if (best && !(cost < best->cost)) continue;
    Decision d;
    d.first_action = plan.actions.front();
    d.next_maneuver = plan.maneuvers.front();
    d.plan = plan;
    d.slacks = std::move(*slacks);
    d.cost = cost;
    d.layer = layer;
    best = std::move(d);
  }
  return best;
}

inline std::vector<CandidatePlan> plans_for(const DecisionProblem& problem, const PlannerConfig& cfg) {
  return enumerate_plans(problem.ev.maneuver, problem.ev.state, cfg.prediction,
                         problem.ev.lane_change_in_progress);
}

inline std::optional<Decision> solve_nominal(const DecisionProblem& problem, const PlannerConfig& cfg) {
  return solve_layer(plans_for(problem, cfg), problem, cfg, Layer::kNominal);
}

inline std::optional<Decision> solve_relaxed(const DecisionProblem& problem, const PlannerConfig& cfg) {
  return solve_layer(plans_for(problem, cfg), problem, cfg, Layer::kRelaxed);
}

enum class Threat { kFront, kRear, kLateral };

inline std::string_view to_string(Threat t) {
  switch (t) {
    case Threat::kFront: return "front";
    case Threat::kRear: return "rear";
    case Threat::kLateral: return "lateral";
  }
  return "unknown";
}

/// Lateral if the nearest vehicle is abreast in an adjacent lane, otherwise
/// front or rear by the nearest same-lane vehicle. Defaults to front.
/// `source_lane` is the lane the EV is still leaving (0 if none); vehicles in
/// it count as same-lane, as they do for the corridor constraints.
inline Threat classify_threat(const ManeuverState& ev_m, const KinematicState& ev_x,
                              const std::vector<SvObservation>& active, double vehicle_length,
                              int source_lane = 0) {
  const SvObservation* nearest = nullptr;
  const SvObservation* nearest_same = nullptr;
  for (const SvObservation& sv : active) {
    const double dx = std::abs(sv.state.x - ev_x.x);
    if (nearest == nullptr || dx < std::abs(nearest->state.x - ev_x.x)) nearest = &sv;
    const bool same = sv.maneuver.lane == ev_m.lane || (source_lane != 0 && sv.maneuver.lane == source_lane);
    if (same && (nearest_same == nullptr || dx < std::abs(nearest_same->state.x - ev_x.x))) {
      nearest_same = &sv;
    }
  }
  if (nearest != nullptr && std::abs(nearest->maneuver.lane - ev_m.lane) == 1 &&
      std::abs(nearest->state.x - ev_x.x) <= vehicle_length) {
    return Threat::kLateral;
  }
  if (nearest_same == nullptr) return Threat::kFront;
  return nearest_same->state.x >= ev_x.x ? Threat::kFront : Threat::kRear;
}

/// Rule-based last resort. The lateral command is left to whatever is already
/// executing; the longitudinal mode is set directly.
inline Decision fallback_action(Threat threat, const EgoSnapshot& ev, const PlannerConfig& cfg) {
  int target_mode = 0;
  switch (threat) {
    case Threat::kFront: target_mode = -1; break;
    case Threat::kRear: target_mode = 1; break;
    case Threat::kLateral: target_mode = 0; break;
  }
  Decision d;
  d.layer = Layer::kFallback;
  d.first_action = {0, std::clamp(target_mode - ev.maneuver.mode, -1, 1)};
  d.next_maneuver = {ev.maneuver.lane, target_mode};
  const Selector sigma = make_selector(0, target_mode);
  d.plan.actions = {d.first_action};
  d.plan.selectors = {sigma};
  d.plan.maneuvers = {d.next_maneuver};
  d.plan.ev_states = {kinematic_step(ev.state, sigma, cfg.prediction.dt, cfg.prediction.kin,
                                     cfg.prediction.geom, ev.maneuver.lane)};
  d.cost = cfg.weights.selector_weight(sigma);
  return d;
}

/// SVs inside the longitudinal perception window, in input order.
inline std::vector<SvObservation> filter_active(const Snapshot& snap, double range) {
  std::vector<SvObservation> out;
  for (const SvObservation& sv : snap.svs) {
    if (std::abs(sv.state.x - snap.ev.state.x) <= range) out.push_back(sv);
  }
  return out;
}

/// The previous plan shifted by one step and padded with keep; actions that
/// are no longer feasible become keep.
inline std::vector<Action> committed_tail(const EgoSnapshot& ev, int horizon) {
  std::vector<Action> tail;
  for (std::size_t i = 1; i < ev.committed_plan.size() && static_cast<int>(tail.size()) < horizon; ++i) {
    tail.push_back(ev.committed_plan[i]);
  }
  while (static_cast<int>(tail.size()) < horizon) tail.push_back(kKeep);
  return tail;
}

struct EgoRollout {
  std::vector<KinematicState> states;
  std::vector<ManeuverState> maneuvers;
};

inline EgoRollout rollout_committed(const EgoSnapshot& ev, const PredictionConfig& cfg) {
  EgoRollout r;
  ManeuverState m = ev.maneuver;
  KinematicState x = ev.state;
  for (Action a : committed_tail(ev, cfg.horizon)) {
    if (!is_feasible(m, a, cfg.geom, ev.lane_change_in_progress)) a = kKeep;
    const StepResult s = hybrid_step(m, x, a, cfg.dt, cfg.kin, cfg.geom);
    m = s.maneuver;
    x = s.state;
    r.states.push_back(x);
    r.maneuvers.push_back(m);
  }
  return r;
}

/// Nearest active vehicle ahead in the EV's lane.
inline std::optional<int> direct_leader(const EgoSnapshot& ev, const std::vector<SvObservation>& active) {
  std::optional<int> id;
  double best = std::numeric_limits<double>::infinity();
  for (const SvObservation& sv : active) {
    const double dx = sv.state.x - ev.state.x;
    if (sv.maneuver.lane != ev.maneuver.lane || dx < 0.0 || dx >= best) continue;
    best = dx;
    id = sv.id;
  }
  return id;
}

/// Recomputes the corrective flags for the active vehicles. Gaps come from a
/// constant-maneuver SV rollout against the EV's committed plan and only count
/// while the SV is ahead in the EV's lane.
inline HysteresisState refresh_hysteresis(const EgoSnapshot& ev,
                                          const std::vector<SvObservation>& active,
                                          const HysteresisState& previous,
                                          const PlannerConfig& cfg, double z_eps) {
  HysteresisState next;
  if (!cfg.hysteresis) return next;
  const PredictionConfig& pc = cfg.prediction;
  const EgoRollout ego = rollout_committed(ev, pc);
  const std::vector<Action> keep(static_cast<std::size_t>(pc.horizon), kKeep);
  for (const SvObservation& sv : active) {
    const BranchHypothesis b =
        propagate_branch(sv.state, sv.maneuver, keep, pc, sv.lane_change_in_progress);
    const int sign = gap_sign(ev.state.x, sv.state.x);
    const double d_idm = idm_gap(ev.state.v, sv.state.v, cfg.idm);
    const double d_hc = hard_margin(d_idm, b.cov_long.front(), z_eps);
    const Thresholds th = thresholds(d_hc, bandwidth(d_idm, cfg.risk), cfg.risk);
    std::vector<double> gaps;
    for (int h = 0; h < pc.horizon; ++h) {
      const bool follows = sign > 0 && b.maneuvers[h].lane == ev.maneuver.lane;
      gaps.push_back(follows ? b.means[h].x - ego.states[h].x - cfg.vehicle_length
                             : std::numeric_limits<double>::infinity());
    }
    auto it = previous.find(sv.id);
    const HysteresisEntry prev = it == previous.end() ? HysteresisEntry{} : it->second;
    next[sv.id] = update_hysteresis(prev, gaps, th.trigger, th.release);
  }
  const std::optional<int> leader = direct_leader(ev, active);
  for (auto& [id, entry] : next) {
    if (!entry.corrective && (!leader || *leader != id)) entry.following = false;
  }
  return next;
}

inline DecisionProblem build_problem(const Snapshot& snap, const std::vector<SvObservation>& active,
                                     const HysteresisState& hyst, const PlannerConfig& cfg,
                                     double z_eps) {
  DecisionProblem p;
  p.ev = snap.ev;
  p.z_eps = z_eps;
  const ScenarioTree tree = build_scenario_tree(active, cfg.prediction);
  for (std::size_t i = 0; i < active.size(); ++i) {
    const SvObservation& sv = active[i];
    SvConstraint c;
    c.sv_id = sv.id;
    c.sign = gap_sign(snap.ev.state.x, sv.state.x);
    // The follower's speed sets the desired gap: the EV's when it is behind,
    // the SV's when the SV is the one following.
    c.d_idm = c.sign > 0 ? idm_gap(snap.ev.state.v, sv.state.v, cfg.idm)
                         : idm_gap(sv.state.v, snap.ev.state.v, cfg.idm);
    if (auto it = hyst.find(sv.id); it != hyst.end()) c.hysteresis = it->second;
    c.branches = tree[i].branches;
    if (c.hysteresis.following && (!p.follow || sv.state.v < p.follow->speed)) {
      p.follow = FollowCap{sv.maneuver.lane, sv.state.v};
    }
    p.constraints.push_back(std::move(c));
  }
  return p;
}

struct DecideResult {
  Decision decision;
  HysteresisState hysteresis;
};

/// One receding-horizon decision: filter, hysteresis refresh, scenario tree,
/// nominal solve, relaxed solve, fallback. Always yields an action.
inline DecideResult decide(const Snapshot& snap, const HysteresisState& hyst,
                           const PlannerConfig& cfg) {
  const double z_eps = confidence_quantile(cfg.risk);
  const std::vector<SvObservation> active = filter_active(snap, cfg.perception_range);
  DecideResult out;
  out.hysteresis = refresh_hysteresis(snap.ev, active, hyst, cfg, z_eps);
  const DecisionProblem problem = build_problem(snap, active, out.hysteresis, cfg, z_eps);
  const std::vector<CandidatePlan> plans = plans_for(problem, cfg);
  std::optional<Decision> d = solve_layer(plans, problem, cfg, Layer::kNominal);
  if (!d) d = solve_layer(plans, problem, cfg, Layer::kRelaxed);
  if (!d) {
    const int source = snap.ev.lane_change_in_progress ? snap.ev.source_lane : 0;
    d = fallback_action(classify_threat(snap.ev.maneuver, snap.ev.state, active, cfg.vehicle_length, source),
                        snap.ev, cfg);
  }
  for (const auto& [id, entry] : out.hysteresis) {
    if (entry.corrective) d->corrective_ids.push_back(id);
  }
  out.decision = std::move(*d);
  return out;
}

}  // namespace lanegate
