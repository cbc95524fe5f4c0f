#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lanegate/hmdp.hpp"
#include "lanegate/mpc.hpp"
#include "lanegate/safety.hpp"

namespace lanegate {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SvPolicyKind { kIdm, kConstant };

struct SimParams {
  double duration = 40.0;        // T_sim [s]
  double dt_low = 0.1;           // T_l [s]
  double dt_high = 0.4;          // T_h [s]
  double lane_change_time = 2.0; // T_lc [s]
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  bool halt_on_collision = false;
  double lane_change_prob = 0.02;   // per SV per decision period
  double lc_gap_factor = 1.5;       // SV gap acceptance, multiple of the IDM gap
  double follow_margin = 0.2;       // SV brakes below (1 + margin) x IDM gap
  double follow_surplus = 0.2;      // and accelerates only above (1 + margin + surplus) x IDM gap
  double speed_band = 0.5;          // SV free-road dead band around desired speed [m/s]
};

struct EgoInit {
  int lane = 1;
  double x = 0.0;
  double v = 20.0;
  int mode = 0;
};

struct SvInit {
  int id = 1;
  int lane = 1;
  double x = 0.0;
  double v = 20.0;
  int mode = 0;
  std::optional<double> desired_speed;
  SvPolicyKind policy = SvPolicyKind::kIdm;
  std::optional<double> lane_change_prob;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  EgoInit ev;
  std::vector<SvInit> svs;
  PlannerConfig planner;
  SimParams sim;

  const LaneGeometry& geom() const { return planner.prediction.geom; }
};

inline int decision_stride(const SimParams& p) {
  return static_cast<int>(std::lround(p.dt_high / p.dt_low));
}

inline void validate(const ScenarioConfig& c) {
  const LaneGeometry& g = c.geom();
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (g.lane_count < 1) fail("lane_count must be >= 1");
  if (!(g.lane_width > 0)) fail("lane_width must be positive");
  if (!(c.sim.dt_low > 0) || !(c.sim.dt_high > 0) || !(c.sim.duration > 0)) {
    fail("durations and sampling periods must be positive");
  }
  const int stride = decision_stride(c.sim);
  if (stride < 1 || std::abs(stride * c.sim.dt_low - c.sim.dt_high) > 1e-9) {
    fail("dt_high must be an integer multiple of dt_low");
  }
  if (std::abs(c.planner.prediction.dt - c.sim.dt_high) > 1e-9) {
    fail("planner step must equal dt_high");
  }
  if (c.planner.prediction.horizon < 1) fail("horizon must be >= 1");
  if (!(c.sim.vehicle_length > 0) || !(c.sim.vehicle_width > 0)) fail("vehicle size must be positive");
  if (!(c.sim.lane_change_time > 0)) fail("lane_change_time must be positive");
  const auto& kin = c.planner.prediction.kin;
  if (!(kin.accel > 0) || !(kin.decel > 0) || kin.v_min < 0 || !(kin.v_max > kin.v_min)) {
    fail("invalid kinematic limits");
  }
  const auto& idm = c.planner.idm;
  if (!(idm.jam_gap > 0) || !(idm.headway > 0) || !(idm.max_accel > 0) || !(idm.comfort_decel > 0)) {
    fail("IDM parameters must be strictly positive");
  }
  const auto& r = c.planner.risk;
  if (!(r.epsilon > 0 && r.epsilon < 0.5)) fail("epsilon must lie in (0, 0.5)");
  if (!(r.gamma_trigger < r.gamma_release)) fail("gamma_trigger must be below gamma_release");
  if (!(r.eps_min > 0 && r.eps_min <= r.eps_max)) fail("require 0 < eps_min <= eps_max");
  if (!(r.k_eps > 0 && r.k_eps < 1)) fail("k_eps must lie in (0, 1)");
  if (!(r.relax_ratio > 0 && r.relax_ratio < 1)) fail("relax_ratio must lie in (0, 1)");
  const auto& w = c.planner.weights;
  if (w.w_slack < 0 || w.w_global < 0 || w.w_speed < 0) fail("weights must be nonnegative");
  if (w.w_global < 10.0 * w.w_slack) fail("w_global must be at least 10 x w_slack");
  for (const auto& row : w.selector_table) {
    for (double x : row) {
      if (x < 0) fail("selector weights must be nonnegative");
    }
  }
  const auto& pr = c.planner.prediction.prior;
  if (!(pr.p_keep > 0 && pr.p_keep <= 1)) fail("p_keep must lie in (0, 1]");
  if (pr.k_max < 1) fail("k_max must be >= 1");
  auto check_vehicle = [&](int lane, double v, int mode, const std::string& who) {
    if (!g.valid_lane(lane)) fail(who + ": lane out of range");
    if (v < kin.v_min || v > kin.v_max) fail(who + ": speed outside the kinematic envelope");
    if (mode < -1 || mode > 1) fail(who + ": mode must be -1, 0 or 1");
  };
  check_vehicle(c.ev.lane, c.ev.v, c.ev.mode, "ev");
  std::set<int> ids;
  for (const SvInit& sv : c.svs) {
    if (sv.id <= 0) fail("sv ids must be positive");
    if (!ids.insert(sv.id).second) fail("duplicate sv id " + std::to_string(sv.id));
    check_vehicle(sv.lane, sv.v, sv.mode, "sv " + std::to_string(sv.id));
  }
}

struct LaneChange {
  bool active = false;
  int source = 0;
  int target = 0;
  double elapsed = 0.0;
};

struct Vehicle {
  int id = 0;
  bool ego = false;
  ManeuverState maneuver;
  KinematicState state;
  LaneChange lane_change;
  SvPolicyKind policy = SvPolicyKind::kIdm;
  double desired_speed = 0.0;
  double lane_change_prob = 0.0;

  bool occupies(int lane) const {
    return maneuver.lane == lane || (lane_change.active && lane_change.source == lane);
  }
};

struct WorldState {
  double time = 0.0;
  std::vector<Vehicle> vehicles;  // index 0 is the EV
  LaneGeometry geom;

  const Vehicle& ev() const { return vehicles.front(); }
  Vehicle& ev() { return vehicles.front(); }
};

inline WorldState make_world(const ScenarioConfig& c) {
  WorldState w;
  w.geom = c.geom();
  Vehicle ev;
  ev.id = 0;
  ev.ego = true;
  ev.maneuver = {c.ev.lane, c.ev.mode};
  ev.state = {c.ev.x, w.geom.center(c.ev.lane), c.ev.v};
  ev.desired_speed = c.planner.weights.v_ref;
  w.vehicles.push_back(ev);
  for (const SvInit& s : c.svs) {
    Vehicle v;
    v.id = s.id;
    v.maneuver = {s.lane, s.mode};
    v.state = {s.x, w.geom.center(s.lane), s.v};
    v.policy = s.policy;
    v.desired_speed = s.desired_speed.value_or(s.v);
    v.lane_change_prob = s.lane_change_prob.value_or(c.sim.lane_change_prob);
    w.vehicles.push_back(v);
  }
  return w;
}

/// Starts executing a committed maneuver: the mode changes at once, a lateral
/// move begins a timed lane change towards the new target lane.
inline void commit_maneuver(Vehicle& v, const ManeuverState& next) {
  if (next.lane != v.maneuver.lane && !v.lane_change.active) {
    v.lane_change = {true, v.maneuver.lane, next.lane, 0.0};
  }
  v.maneuver = next;
}

/// Low-level executor: constant acceleration per mode, cosine lateral profile
/// over the lane-change duration.
inline void low_level_execute(Vehicle& v, double dt, const SimParams& sim,
                              const KinematicParams& kin, const LaneGeometry& geom) {
  integrate_longitudinal(v.state.x, v.state.v, mode_acceleration(v.maneuver.mode, kin), dt, kin);
  LaneChange& lc = v.lane_change;
  if (!lc.active) return;
  lc.elapsed += dt;
  const double src = geom.center(lc.source);
  const double dst = geom.center(lc.target);
  if (lc.elapsed >= sim.lane_change_time - 1e-9) {
    v.state.y = dst;
    lc = LaneChange{};
    return;
  }
  const double phase = lc.elapsed / sim.lane_change_time;
  v.state.y = src + (dst - src) * (1.0 - std::cos(std::numbers::pi * phase)) / 2.0;
}

/// Nearest vehicle ahead of `self` (if `ahead`) or behind it that occupies
/// `lane`. Returns the index into world.vehicles.
inline std::optional<std::size_t> neighbor_in_lane(const WorldState& world, std::size_t self,
                                                   int lane, bool ahead) {
  std::optional<std::size_t> best;
  const double x = world.vehicles[self].state.x;
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    if (i == self || !world.vehicles[i].occupies(lane)) continue;
    const double dx = world.vehicles[i].state.x - x;
    if (ahead ? dx < 0.0 : dx >= 0.0) continue;
    if (!best || std::abs(dx) < std::abs(world.vehicles[*best].state.x - x)) best = i;
  }
  return best;
}

/// Ground-truth SV behavior: discretized IDM following plus occasional gap-
/// accepting lane changes. Consumes the generator in a fixed pattern.
inline Action sv_policy_step(const WorldState& world, std::size_t index, const IdmParams& idm,
                             const SimParams& sim, std::mt19937_64& rng) {
  const Vehicle& sv = world.vehicles[index];
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lc_draw = unit(rng);
  const double dir_draw = unit(rng);
  if (sv.policy == SvPolicyKind::kConstant) return kKeep;

  const double v = sv.state.v;
  int target_mode;
  if (v < sv.desired_speed - sim.speed_band) {
    target_mode = 1;
  } else if (v > sv.desired_speed + sim.speed_band) {
    target_mode = -1;
  } else {
    target_mode = 0;
  }
  // Closest leader in any lane the vehicle currently touches.
  std::optional<double> gap;
  std::optional<double> lead_v;
  for (int lane : {sv.maneuver.lane, sv.lane_change.active ? sv.lane_change.source : 0}) {
    if (lane == 0) continue;
    if (auto lead = neighbor_in_lane(world, index, lane, true)) {
      const Vehicle& l = world.vehicles[*lead];
      const double g = l.state.x - sv.state.x - sim.vehicle_length;
      if (!gap || g < *gap) {
        gap = g;
        lead_v = l.state.v;
      }
    }
  }
  if (gap) {
    const double desired = idm_gap(v, *lead_v, idm);
    if (*gap < (1.0 + sim.follow_margin) * desired) {
      target_mode = -1;
    } else if (*gap < (1.0 + sim.follow_margin + sim.follow_surplus) * desired) {
      target_mode = std::min(target_mode, 0);
    }
  }
  const int lon = std::clamp(target_mode - sv.maneuver.mode, -1, 1);
  if (lon != 0 || sv.lane_change.active || lc_draw >= sv.lane_change_prob) return {0, lon};

  std::vector<int> options;
  for (int d : {-1, 1}) {
    if (world.geom.valid_lane(sv.maneuver.lane + d)) options.push_back(d);
  }
  if (options.empty()) return kKeep;
  const int dir = options[std::min(options.size() - 1,
                                   static_cast<std::size_t>(dir_draw * options.size()))];
  const int lane = sv.maneuver.lane + dir;
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    if (i != index && world.vehicles[i].occupies(lane) &&
        std::abs(world.vehicles[i].state.x - sv.state.x) < sim.vehicle_length) {
      return kKeep;
    }
  }
  if (auto lead = neighbor_in_lane(world, index, lane, true)) {
    const Vehicle& l = world.vehicles[*lead];
    const double g = l.state.x - sv.state.x - sim.vehicle_length;
    if (g < sim.lc_gap_factor * idm_gap(v, l.state.v, idm)) return kKeep;
  }
  if (auto follow = neighbor_in_lane(world, index, lane, false)) {
    const Vehicle& f = world.vehicles[*follow];
    const double g = sv.state.x - f.state.x - sim.vehicle_length;
    if (g < sim.lc_gap_factor * idm_gap(f.state.v, v, idm)) return kKeep;
  }
  return {dir, 0};
}

struct CollisionEvent {
  double t = 0.0;
  int a = 0;
  int b = 0;
  KinematicState pos_a;
  KinematicState pos_b;
};

inline bool overlaps(const Vehicle& a, const Vehicle& b, const SimParams& sim) {
  return std::abs(a.state.x - b.state.x) < sim.vehicle_length &&
         std::abs(a.state.y - b.state.y) < sim.vehicle_width;
}

/// All currently overlapping vehicle pairs (axis-aligned footprints).
inline std::vector<CollisionEvent> collision_check(const WorldState& world, const SimParams& sim) {
  std::vector<CollisionEvent> out;
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    for (std::size_t j = i + 1; j < world.vehicles.size(); ++j) {
      const Vehicle& a = world.vehicles[i];
      const Vehicle& b = world.vehicles[j];
      if (overlaps(a, b, sim)) out.push_back({world.time, a.id, b.id, a.state, b.state});
    }
  }
  return out;
}

struct VehicleRecord {
  int id = 0;
  KinematicState state;
  ManeuverState maneuver;
};

struct StateRecord {
  double t = 0.0;
  std::vector<VehicleRecord> vehicles;
};

struct DecisionRecord {
  double t = 0.0;
  Action action;
  ManeuverState maneuver;  // committed maneuver after the decision
  Layer layer = Layer::kNominal;
  double cost = 0.0;
  double slack_total = 0.0;
  std::vector<int> corrective_ids;
};

struct TraceRecord {
  std::uint64_t seed = 0;
  int lane_count = 0;
  double dt_low = 0.0;
  double dt_high = 0.0;
  std::vector<StateRecord> states;
  std::vector<DecisionRecord> decisions;
  std::vector<CollisionEvent> collisions;
};

struct EpisodeResult {
  TraceRecord trace;
  std::vector<double> solve_times;  // wall clock around decide [s]
  int initial_mode = 0;

  bool collided() const { return !trace.collisions.empty(); }
};

inline Snapshot make_snapshot(const WorldState& world, const std::vector<Action>& committed,
                              int last_lat) {
  Snapshot s;
  const Vehicle& ev = world.ev();
  s.ev.maneuver = ev.maneuver;
  s.ev.state = ev.state;
  s.ev.lane_change_in_progress = ev.lane_change.active;
  s.ev.source_lane = ev.lane_change.active ? ev.lane_change.source : 0;
  s.ev.last_lat = last_lat;
  s.ev.committed_plan = committed;
  for (std::size_t i = 1; i < world.vehicles.size(); ++i) {
    const Vehicle& v = world.vehicles[i];
    s.svs.push_back({v.id, v.maneuver, v.state, v.lane_change.active});
  }
  return s;
}

inline StateRecord record_state(const WorldState& world) {
  StateRecord r;
  r.t = world.time;
  for (const Vehicle& v : world.vehicles) r.vehicles.push_back({v.id, v.state, v.maneuver});
  return r;
}

/// Closed-loop episode. Decisions every dt_high, execution and collision
/// checks every dt_low. Deterministic for a given config and seed.
inline EpisodeResult run_episode(const ScenarioConfig& cfg) {
  validate(cfg);
  EpisodeResult result;
  result.initial_mode = cfg.ev.mode;
  TraceRecord& trace = result.trace;
  trace.seed = cfg.seed;
  trace.lane_count = cfg.geom().lane_count;
  trace.dt_low = cfg.sim.dt_low;
  trace.dt_high = cfg.sim.dt_high;

  std::mt19937_64 rng(cfg.seed);
  WorldState world = make_world(cfg);
  HysteresisState hysteresis;
  std::vector<Action> committed;
  int last_lat = 0;
  const int stride = decision_stride(cfg.sim);
  const long total_steps = std::lround(cfg.sim.duration / cfg.sim.dt_low);
  const KinematicParams& kin = cfg.planner.prediction.kin;
  std::set<std::pair<int, int>> touching;

  trace.states.push_back(record_state(world));
  for (long step = 0; step < total_steps; ++step) {
    if (step % stride == 0) {
      const Snapshot snap = make_snapshot(world, committed, last_lat);
      std::vector<Action> sv_actions;
      for (std::size_t i = 1; i < world.vehicles.size(); ++i) {
        sv_actions.push_back(sv_policy_step(world, i, cfg.planner.idm, cfg.sim, rng));
      }
      const auto start = std::chrono::steady_clock::now();
      DecideResult dr = decide(snap, hysteresis, cfg.planner);
      const auto stop = std::chrono::steady_clock::now();
      result.solve_times.push_back(std::chrono::duration<double>(stop - start).count());
      hysteresis = std::move(dr.hysteresis);
      const Decision& d = dr.decision;
      commit_maneuver(world.ev(), d.next_maneuver);
      committed = d.plan.actions;
      last_lat = d.first_action.lat;
      trace.decisions.push_back({world.time, d.first_action, d.next_maneuver, d.layer, d.cost,
                                 d.slacks.total(), d.corrective_ids});
      for (std::size_t i = 1; i < world.vehicles.size(); ++i) {
        Vehicle& v = world.vehicles[i];
        const Action a = sv_actions[i - 1];
        if (is_feasible(v.maneuver, a, world.geom, v.lane_change.active)) {
          commit_maneuver(v, maneuver_transition(v.maneuver, a, world.geom));
        }
      }
    }
    for (Vehicle& v : world.vehicles) low_level_execute(v, cfg.sim.dt_low, cfg.sim, kin, world.geom);
    world.time = static_cast<double>(step + 1) * cfg.sim.dt_low;
    trace.states.push_back(record_state(world));

    std::set<std::pair<int, int>> now;
    bool new_event = false;
    for (const CollisionEvent& e : collision_check(world, cfg.sim)) {
      now.insert({e.a, e.b});
      if (!touching.contains({e.a, e.b})) {
        trace.collisions.push_back(e);
        new_event = true;
      }
    }
    touching = std::move(now);
    if (new_event && cfg.sim.halt_on_collision) break;
  }
  return result;
}

struct LayerCounts {
  long nominal = 0;
  long relaxed = 0;
  long fallback = 0;
  long total() const { return nominal + relaxed + fallback; }
};

inline LayerCounts count_layers(const TraceRecord& trace) {
  LayerCounts c;
  for (const DecisionRecord& d : trace.decisions) {
    switch (d.layer) {
      case Layer::kNominal: ++c.nominal; break;
      case Layer::kRelaxed: ++c.relaxed; break;
      case Layer::kFallback: ++c.fallback; break;
    }
  }
  return c;
}

/// Number of decisions whose committed mode differs from the previous one.
inline int count_mode_switches(const TraceRecord& trace, int initial_mode) {
  int switches = 0;
  int prev = initial_mode;
  for (const DecisionRecord& d : trace.decisions) {
    if (d.maneuver.mode != prev) ++switches;
    prev = d.maneuver.mode;
  }
  return switches;
}

}  // namespace lanegate
