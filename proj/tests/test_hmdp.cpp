#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lanegate/hmdp.hpp"

namespace lanegate {
namespace {

std::vector<Action> actions_of(const ManeuverState& m, int lanes, bool in_progress = false) {
  return feasible_actions(m, LaneGeometry{lanes, 4.0}, in_progress);
}

TEST(ClipApply, InteriorMove) { EXPECT_EQ(clip_apply(2, -1, 1, 2), 1); }

TEST(ClipApply, DiscardsBelowRange) { EXPECT_FALSE(clip_apply(1, -1, 1, 2).has_value()); }

TEST(ClipApply, DiscardsAboveRange) { EXPECT_FALSE(clip_apply(1, 1, -1, 1).has_value()); }

TEST(FeasibleActions, LeftmostLaneCruising) {
  const std::vector<Action> expected{{0, 0}, {0, -1}, {0, 1}, {1, 0}};
  EXPECT_EQ(actions_of({1, 0}, 2), expected);
}

TEST(FeasibleActions, RightmostLaneAccelerating) {
  const std::vector<Action> expected{{0, 0}, {0, -1}, {-1, 0}};
  EXPECT_EQ(actions_of({2, 1}, 2), expected);
}

TEST(FeasibleActions, LateralRemovedWhileChangingLanes) {
  const std::vector<Action> expected{{0, 0}, {0, -1}, {0, 1}};
  EXPECT_EQ(actions_of({2, 0}, 3, true), expected);
}

TEST(FeasibleActions, SingleLaneHasNoLateralMoves) {
  for (const Action& a : actions_of({1, 0}, 1)) EXPECT_EQ(a.lat, 0);
}

TEST(ManeuverTransition, Examples) {
  const LaneGeometry g{2, 4.0};
  EXPECT_EQ(maneuver_transition({2, 0}, {-1, 0}, g), (ManeuverState{1, 0}));
  EXPECT_EQ(maneuver_transition({1, 0}, {0, -1}, g), (ManeuverState{1, -1}));
  EXPECT_EQ(maneuver_transition({1, -1}, {0, 1}, g), (ManeuverState{1, 0}));
}

TEST(ManeuverTransition, RejectsInfeasibleAction) {
  const LaneGeometry g{2, 4.0};
  EXPECT_THROW(maneuver_transition({1, 0}, {-1, 0}, g), std::invalid_argument);
  EXPECT_THROW(maneuver_transition({1, 1}, {0, 1}, g), std::invalid_argument);
  EXPECT_THROW(maneuver_transition({1, 0}, {1, 1}, g), std::invalid_argument);
}

TEST(Selector, PairsLateralActionWithNextMode) {
  EXPECT_EQ(make_selector(0, -1), (Selector{0, -1}));
  EXPECT_EQ(make_selector(1, 1), (Selector{1, 1}));
  const LaneGeometry g{2, 4.0};
  // A held mode gives the same selector as the action that produced it.
  const StepResult held = hybrid_step({1, -1}, {0, 4, 20}, kKeep, 0.4, {}, g);
  const StepResult braked = hybrid_step({1, 0}, {0, 4, 20}, {0, -1}, 0.4, {}, g);
  EXPECT_EQ(held.selector, (Selector{0, -1}));
  EXPECT_EQ(held.selector, braked.selector);
}

TEST(KinematicStep, Cruise) {
  const KinematicState s = kinematic_step({0, 0, 20}, {0, 0}, 0.4, {}, {2, 4.0}, 2);
  EXPECT_DOUBLE_EQ(s.x, 8.0);
  EXPECT_DOUBLE_EQ(s.y, 0.0);
  EXPECT_DOUBLE_EQ(s.v, 20.0);
}

TEST(KinematicStep, Accelerate) {
  const KinematicState s = kinematic_step({0, 0, 20}, {0, 1}, 0.4, {}, {2, 4.0}, 2);
  EXPECT_NEAR(s.x, 8.16, 1e-12);
  EXPECT_NEAR(s.v, 20.8, 1e-12);
}

TEST(KinematicStep, LaneChangeJumpsToTargetCenter) {
  const KinematicState s = kinematic_step({0, 0, 20}, {-1, 0}, 0.4, {}, {2, 4.0}, 1);
  EXPECT_DOUBLE_EQ(s.x, 8.0);
  EXPECT_DOUBLE_EQ(s.y, 4.0);
  EXPECT_DOUBLE_EQ(s.v, 20.0);
}

TEST(KinematicStep, BrakingStopsAtZero) {
  // 1 m/s at 3 m/s^2 stops after 1/3 s having covered 1/6 m.
  const KinematicState s = kinematic_step({0, 0, 1.0}, {0, -1}, 0.4, {}, {2, 4.0}, 2);
  EXPECT_DOUBLE_EQ(s.v, 0.0);
  EXPECT_NEAR(s.x, 1.0 / 6.0, 1e-12);
}

TEST(KinematicStep, AccelerationStopsAtSpeedLimit) {
  // 44.6 m/s reaches 45 after 0.2 s, then cruises for 0.2 s.
  const KinematicState s = kinematic_step({0, 0, 44.6}, {0, 1}, 0.4, {}, {2, 4.0}, 2);
  EXPECT_DOUBLE_EQ(s.v, 45.0);
  EXPECT_NEAR(s.x, 44.6 * 0.2 + 0.5 * 2.0 * 0.04 + 45.0 * 0.2, 1e-12);
}

TEST(KinematicStep, IsBitDeterministic) {
  const KinematicState a = kinematic_step({1.234, 4, 17.77}, {1, 1}, 0.4, {}, {3, 4.0}, 3);
  const KinematicState b = kinematic_step({1.234, 4, 17.77}, {1, 1}, 0.4, {}, {3, 4.0}, 3);
  EXPECT_EQ(a, b);
}

TEST(Geometry, LaneCentersMatchLayout) {
  const LaneGeometry g{2, 4.0};
  EXPECT_DOUBLE_EQ(g.center(1), 4.0);
  EXPECT_DOUBLE_EQ(g.center(2), 0.0);
  const LaneGeometry g4{4, 4.0};
  for (int lane = 1; lane < 4; ++lane) EXPECT_DOUBLE_EQ(g4.center(lane) - g4.center(lane + 1), 4.0);
  for (int lane = 1; lane <= 4; ++lane) EXPECT_EQ(g4.nearest_lane(g4.center(lane)), lane);
}

TEST(ActionOrder, KeepSortsFirst) {
  EXPECT_EQ(action_rank(kKeep), 0);
  EXPECT_TRUE(sequence_less({kKeep, {0, 1}}, {{0, -1}, kKeep}));
  EXPECT_FALSE(sequence_less({kKeep, kKeep}, {kKeep, kKeep}));
}

// Every lane count, every maneuver state, every feasible action: the
// successor is valid and moves at most one component by one.
TEST(TransitionLaw, ExhaustiveForSmallRoads) {
  for (int n : {1, 2, 3, 4}) {
    const LaneGeometry g{n, 4.0};
    for (int lane = 1; lane <= n; ++lane) {
      for (int mode = -1; mode <= 1; ++mode) {
        const ManeuverState m{lane, mode};
        for (bool in_progress : {false, true}) {
          const std::vector<Action> feasible = feasible_actions(m, g, in_progress);
          for (int lat = -1; lat <= 1; ++lat) {
            for (int lon = -1; lon <= 1; ++lon) {
              const Action a{lat, lon};
              const bool listed = std::find(feasible.begin(), feasible.end(), a) != feasible.end();
              const bool expected = is_one_step(a) && (!in_progress || lat == 0) &&
                                    g.valid_lane(lane + lat) && mode + lon >= -1 && mode + lon <= 1;
              EXPECT_EQ(listed, expected) << n << " " << lane << " " << mode << " " << lat << lon;
            }
          }
          for (const Action& a : feasible) {
            const ManeuverState next = maneuver_transition(m, a, g);
            EXPECT_TRUE(is_valid(next, g));
            EXPECT_LE(std::abs(next.lane - m.lane), 1);
            EXPECT_LE(std::abs(next.mode - m.mode), 1);
            EXPECT_FALSE(next.lane != m.lane && next.mode != m.mode);
          }
        }
      }
    }
  }
}

TEST(SpeedEnvelope, HoldsForAllModes) {
  const KinematicParams p;
  for (double v = 0.0; v <= 45.0; v += 0.37) {
    for (int mode = -1; mode <= 1; ++mode) {
      const KinematicState s = kinematic_step({0, 0, v}, {0, mode}, 0.4, p, {2, 4.0}, 2);
      EXPECT_GE(s.v, p.v_min);
      EXPECT_LE(s.v, p.v_max);
      EXPECT_GE(s.x, 0.0);
    }
  }
}

}  // namespace
}  // namespace lanegate
