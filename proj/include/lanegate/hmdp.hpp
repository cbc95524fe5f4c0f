#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lanegate {

/// Discrete maneuver state: target lane index (1..n) and longitudinal mode
/// (-1 decelerating, 0 cruising, +1 accelerating).
struct ManeuverState {
  int lane = 1;
  int mode = 0;

  friend bool operator==(const ManeuverState&, const ManeuverState&) = default;
};

/// One-step action. lat: -1 left / 0 keep / +1 right. lon: -1 / 0 / +1.
struct Action {
  int lat = 0;
  int lon = 0;

  friend bool operator==(const Action&, const Action&) = default;
};

inline constexpr Action kKeep{0, 0};

/// Index into the kinematic map family: lateral action paired with the
/// post-transition longitudinal mode.
struct Selector {
  int lat_action = 0;
  int mode_next = 0;

  friend bool operator==(const Selector&, const Selector&) = default;
};

struct KinematicState {
  double x = 0.0;  // longitudinal position [m]
  double y = 0.0;  // lateral position [m]
  double v = 0.0;  // speed [m/s]

  friend bool operator==(const KinematicState&, const KinematicState&) = default;
};

struct LaneGeometry {
  int lane_count = 2;
  double lane_width = 4.0;

  // Lane 1 is the leftmost lane and sits at the largest y.
  double center(int lane) const { return (lane_count - lane) * lane_width; }
  double road_width() const { return lane_count * lane_width; }
  bool valid_lane(int lane) const { return lane >= 1 && lane <= lane_count; }
  int nearest_lane(double y) const {
    int lane = lane_count - static_cast<int>(std::lround(y / lane_width));
    return std::clamp(lane, 1, lane_count);
  }
};

struct KinematicParams {
  double accel = 2.0;   // a_acc [m/s^2]
  double decel = 3.0;   // a_dec [m/s^2], positive magnitude
  double v_min = 0.0;
  double v_max = 45.0;
};

/// Canonical action order used for every tie-break: keep first, then the
/// longitudinal moves, then the lateral moves.
inline constexpr std::array<Action, 5> kOneStepActions{
    Action{0, 0}, Action{0, -1}, Action{0, 1}, Action{-1, 0}, Action{1, 0}};

inline int action_rank(const Action& a) {
  for (int i = 0; i < static_cast<int>(kOneStepActions.size()); ++i) {
    if (kOneStepActions[i] == a) return i;
  }
  return static_cast<int>(kOneStepActions.size());
}

/// Lexicographic order on action sequences under action_rank.
inline bool sequence_less(const std::vector<Action>& a, const std::vector<Action>& b) {
  return std::lexicographical_compare(
      a.begin(), a.end(), b.begin(), b.end(),
      [](const Action& l, const Action& r) { return action_rank(l) < action_rank(r); });
}

inline bool is_one_step(const Action& a) {
  return a.lat >= -1 && a.lat <= 1 && a.lon >= -1 && a.lon <= 1 && (a.lat == 0 || a.lon == 0);
}

/// value + delta if it stays inside [lo, hi]; absent otherwise. Out-of-range
/// results discard the proposing action rather than saturating.
inline std::optional<int> clip_apply(int value, int delta, int lo, int hi) {
  const int next = value + delta;
  if (next < lo || next > hi) return std::nullopt;
  return next;
}

inline bool is_valid(const ManeuverState& m, const LaneGeometry& geom) {
  return geom.valid_lane(m.lane) && m.mode >= -1 && m.mode <= 1;
}

/// Feasible one-step actions from m, in canonical order. While a lane change
/// is still executing, lateral actions are removed.
inline std::vector<Action> feasible_actions(const ManeuverState& m, const LaneGeometry& geom,
                                            bool lane_change_in_progress = false) {
  std::vector<Action> out;
  for (const Action& a : kOneStepActions) {
    if (lane_change_in_progress && a.lat != 0) continue;
    if (!clip_apply(m.lane, a.lat, 1, geom.lane_count)) continue;
    if (!clip_apply(m.mode, a.lon, -1, 1)) continue;
    out.push_back(a);
  }
  return out;
}

inline bool is_feasible(const ManeuverState& m, const Action& a, const LaneGeometry& geom,
                        bool lane_change_in_progress = false) {
  if (!is_one_step(a)) return false;
  if (lane_change_in_progress && a.lat != 0) return false;
  return clip_apply(m.lane, a.lat, 1, geom.lane_count).has_value() &&
         clip_apply(m.mode, a.lon, -1, 1).has_value();
}

/// Applies a feasible action. Throws std::invalid_argument otherwise.
inline ManeuverState maneuver_transition(const ManeuverState& m, const Action& d,
                                         const LaneGeometry& geom) {
  if (!is_feasible(m, d, geom)) {
    throw std::invalid_argument("maneuver_transition: action (" + std::to_string(d.lat) + "," +
                                std::to_string(d.lon) + ") infeasible from (" +
                                std::to_string(m.lane) + "," + std::to_string(m.mode) + ")");
  }
  return {m.lane + d.lat, m.mode + d.lon};
}

inline Selector make_selector(int lat_action, int mode_next) { return {lat_action, mode_next}; }

inline double mode_acceleration(int mode, const KinematicParams& p) {
  if (mode > 0) return p.accel;
  if (mode < 0) return -p.decel;
  return 0.0;
}

/// Constant-acceleration longitudinal update over dt. Acceleration stops at
/// the instant the speed envelope is reached.
inline void integrate_longitudinal(double& x, double& v, double accel, double dt,
                                   const KinematicParams& p) {
  double t_active = dt;
  if (accel > 0.0 && v + accel * dt > p.v_max) {
    t_active = std::max(0.0, (p.v_max - v) / accel);
  } else if (accel < 0.0 && v + accel * dt < p.v_min) {
    t_active = std::max(0.0, (p.v_min - v) / accel);
  }
  if (t_active >= dt) {
    x += v * dt + 0.5 * accel * dt * dt;
    v += accel * dt;
  } else {
    x += v * t_active + 0.5 * accel * t_active * t_active;
    v = accel > 0.0 ? p.v_max : p.v_min;
    x += v * (dt - t_active);
  }
  v = std::clamp(v, p.v_min, p.v_max);
}

/// Selector-indexed kinematic map. At prediction level a lane change lands on
/// the target lane center within one step.
inline KinematicState kinematic_step(const KinematicState& s, const Selector& sigma, double dt,
                                     const KinematicParams& params, const LaneGeometry& geom,
                                     int target_lane) {
  KinematicState out = s;
  integrate_longitudinal(out.x, out.v, mode_acceleration(sigma.mode_next, params), dt, params);
  if (sigma.lat_action != 0) out.y = geom.center(target_lane);
  return out;
}

/// One combined step: discrete transition followed by the selected map.
struct StepResult {
  ManeuverState maneuver;
  Selector selector;
  KinematicState state;
};

inline StepResult hybrid_step(const ManeuverState& m, const KinematicState& x, const Action& d,
                              double dt, const KinematicParams& params, const LaneGeometry& geom) {
  const ManeuverState next = maneuver_transition(m, d, geom);
  const Selector sigma = make_selector(d.lat, next.mode);
  return {next, sigma, kinematic_step(x, sigma, dt, params, geom, next.lane)};
}

}  // namespace lanegate
