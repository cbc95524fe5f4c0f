#include <gtest/gtest.h>

#include <numeric>

#include "lanegate/prediction.hpp"

namespace lanegate {
namespace {

double prob_of(const std::vector<ActionProbability>& d, Action a) {
  for (const ActionProbability& p : d) {
    if (p.action == a) return p.probability;
  }
  return 0.0;
}

PredictionConfig two_lanes() {
  PredictionConfig c;
  c.geom = {2, 4.0};
  return c;
}

TEST(ActionPrior, SplitsRemainderOverFeasibleAlternatives) {
  const auto d = sv_action_prior({1, 0}, {2, 4.0}, 0.8);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_DOUBLE_EQ(prob_of(d, kKeep), 0.8);
  EXPECT_NEAR(prob_of(d, {0, -1}), 0.2 / 3, 1e-12);
  EXPECT_NEAR(prob_of(d, {0, 1}), 0.2 / 3, 1e-12);
  EXPECT_NEAR(prob_of(d, {1, 0}), 0.2 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(prob_of(d, {-1, 0}), 0.0);
}

TEST(ActionPrior, TwoAlternatives) {
  const auto d = sv_action_prior({2, 1}, {2, 4.0}, 0.8);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_NEAR(prob_of(d, {0, -1}), 0.1, 1e-12);
  EXPECT_NEAR(prob_of(d, {-1, 0}), 0.1, 1e-12);
}

TEST(ActionPrior, CertainKeep) {
  const auto d = sv_action_prior({1, 0}, {2, 4.0}, 1.0);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].action, kKeep);
  EXPECT_DOUBLE_EQ(d[0].probability, 1.0);
}

TEST(PropagateBranch, CruiseMeansAndVariance) {
  const auto b = propagate_branch({0, 0, 20}, {2, 0}, {kKeep, kKeep, kKeep}, two_lanes());
  ASSERT_EQ(b.means.size(), 3u);
  EXPECT_NEAR(b.means[0].x, 8, 1e-12);
  EXPECT_NEAR(b.means[1].x, 16, 1e-12);
  EXPECT_NEAR(b.means[2].x, 24, 1e-12);
  EXPECT_NEAR(b.cov_long[0], 0.25, 1e-12);
  EXPECT_NEAR(b.cov_long[1], 0.5, 1e-12);
  EXPECT_NEAR(b.cov_long[2], 0.75, 1e-12);
}

TEST(PropagateBranch, NoiselessVarianceStaysAtInitial) {
  PredictionConfig c = two_lanes();
  c.noise.step_sigma = 0.0;
  c.noise.initial_variance = 0.3;
  const auto b = propagate_branch({0, 0, 20}, {2, 0}, {kKeep, {0, 1}, kKeep}, c);
  for (double v : b.cov_long) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(PropagateBranch, AccelerateThenHold) {
  const auto b = propagate_branch({0, 0, 20}, {2, 0}, {{0, 1}, kKeep, kKeep}, two_lanes());
  // The accelerating mode persists under keep.
  EXPECT_NEAR(b.means[0].x, 8.16, 1e-12);
  EXPECT_NEAR(b.means[0].v, 20.8, 1e-12);
  EXPECT_NEAR(b.means[1].x, 8.16 + 20.8 * 0.4 + 0.16, 1e-12);
  EXPECT_NEAR(b.means[1].v, 21.6, 1e-12);
}

TEST(PropagateBranch, ModeReturnedToCruise) {
  const auto b = propagate_branch({0, 0, 20}, {2, 0}, {{0, 1}, {0, -1}, kKeep}, two_lanes());
  EXPECT_NEAR(b.means[0].x, 8.16, 1e-12);
  EXPECT_NEAR(b.means[1].x, 16.48, 1e-12);
  EXPECT_NEAR(b.means[2].x, 24.80, 1e-12);
  EXPECT_NEAR(b.means[2].v, 20.8, 1e-12);
}

TEST(PropagateBranch, MeansMatchHybridRollout) {
  PredictionConfig c = two_lanes();
  c.noise.step_sigma = 0.0;
  const std::vector<Action> seq{{0, -1}, {-1, 0}, {0, 1}};
  const auto b = propagate_branch({3, 0, 17}, {2, 0}, seq, c);
  ManeuverState m{2, 0};
  KinematicState x{3, 0, 17};
  for (std::size_t h = 0; h < seq.size(); ++h) {
    const StepResult r = hybrid_step(m, x, seq[h], c.dt, c.kin, c.geom);
    m = r.maneuver;
    x = r.state;
    EXPECT_EQ(b.means[h], x);
    EXPECT_EQ(b.maneuvers[h], m);
  }
}

TEST(PropagateBranch, RejectsInfeasibleSequence) {
  EXPECT_THROW(propagate_branch({0, 0, 20}, {1, 0}, {{-1, 0}}, two_lanes()), std::invalid_argument);
}

TEST(ScenarioTree, SingleStepBranchCount) {
  PredictionConfig c = two_lanes();
  c.horizon = 1;
  EXPECT_EQ(enumerate_branches({1, {1, 0}, {0, 4, 20}}, c).size(), 4u);
}

TEST(ScenarioTree, AllKeepProbabilityBeforePruning) {
  const auto raw = enumerate_branches({1, {1, 0}, {0, 4, 20}}, two_lanes());
  double total = 0.0;
  for (const auto& b : raw) {
    total += b.probability;
    if (b.all_keep()) {
      EXPECT_NEAR(b.probability, 0.512, 1e-12);
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(ScenarioTree, EmptyInput) { EXPECT_TRUE(build_scenario_tree({}, two_lanes()).empty()); }

TEST(ScenarioTree, DefaultsLeaveOnlyAllKeep) {
  // Every deviating branch carries at most 0.64 * 0.2/3 < 0.05.
  const auto tree = build_scenario_tree({{1, {1, 0}, {0, 4, 20}}}, two_lanes());
  ASSERT_EQ(tree.size(), 1u);
  ASSERT_EQ(tree[0].branches.size(), 1u);
  EXPECT_TRUE(tree[0].branches[0].all_keep());
  EXPECT_DOUBLE_EQ(tree[0].branches[0].probability, 1.0);
}

BranchHypothesis synthetic(std::vector<Action> actions, double p) {
  BranchHypothesis b;
  b.actions = std::move(actions);
  b.probability = p;
  return b;
}

TEST(PruneTree, KeepsTopThreeAndRenormalizes) {
  // One alternative per step with p_keep = 0.8: all-keep 0.512 and three
  // single deviations at 0.128.
  const Action d{0, -1};
  SvScenarios sv{1,
                 {synthetic({kKeep, kKeep, kKeep}, 0.512), synthetic({d, kKeep, kKeep}, 0.128),
                  synthetic({kKeep, d, kKeep}, 0.128), synthetic({kKeep, kKeep, d}, 0.128),
                  synthetic({d, d, kKeep}, 0.032), synthetic({d, kKeep, d}, 0.032),
                  synthetic({kKeep, d, d}, 0.032), synthetic({d, d, d}, 0.008)}};
  const auto out = prune_tree({sv}, 0.05, 3);
  ASSERT_EQ(out[0].branches.size(), 3u);
  EXPECT_TRUE(out[0].branches[0].all_keep());
  EXPECT_NEAR(out[0].branches[0].probability, 0.512 / 0.768, 1e-12);
  // Equal probabilities fall back to sequence order: deviation last is smallest.
  EXPECT_EQ(out[0].branches[1].actions, (std::vector<Action>{kKeep, kKeep, d}));
  EXPECT_EQ(out[0].branches[2].actions, (std::vector<Action>{kKeep, d, kKeep}));
  EXPECT_NEAR(out[0].branches[1].probability, 0.128 / 0.768, 1e-12);
}

TEST(PruneTree, IdentityUpToRenormalization) {
  SvScenarios sv{1, {synthetic({kKeep}, 0.4), synthetic({{0, 1}}, 0.2)}};
  const auto out = prune_tree({sv}, 0.05, 3);
  ASSERT_EQ(out[0].branches.size(), 2u);
  EXPECT_NEAR(out[0].branches[0].probability, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(out[0].branches[1].probability, 1.0 / 3.0, 1e-12);
}

TEST(PruneTree, DegenerateThresholdKeepsAllKeep) {
  const auto raw = enumerate_branches({1, {2, 0}, {0, 0, 20}}, two_lanes());
  const auto out = prune_tree({{1, raw}}, 1.0, 3);
  ASSERT_EQ(out[0].branches.size(), 1u);
  EXPECT_TRUE(out[0].branches[0].all_keep());
  EXPECT_DOUBLE_EQ(out[0].branches[0].probability, 1.0);
}

// Probabilities sum to one, the branch count never grows, the all-keep
// branch always survives and variances increase, over a sweep of settings.
TEST(PruneTree, PropertiesOverParameterSweep) {
  for (int lanes : {1, 2, 3, 4}) {
    for (double p_keep : {0.3, 0.5, 0.8, 0.95}) {
      for (double p_min : {0.0, 0.01, 0.05, 0.2}) {
        for (int k_max : {1, 2, 3, 5}) {
          PredictionConfig c;
          c.geom = {lanes, 4.0};
          c.prior = {p_keep, p_min, k_max};
          for (int lane = 1; lane <= lanes; ++lane) {
            for (int mode = -1; mode <= 1; ++mode) {
              const SvObservation sv{7, {lane, mode}, {0, c.geom.center(lane), 20}};
              const auto raw = enumerate_branches(sv, c);
              const auto tree = prune_tree({{7, raw}}, p_min, k_max);
              const auto& kept = tree[0].branches;
              double total = 0.0;
              bool has_keep = false;
              for (const auto& b : kept) {
                total += b.probability;
                has_keep |= b.all_keep();
                for (std::size_t h = 1; h < b.cov_long.size(); ++h) {
                  EXPECT_GT(b.cov_long[h], b.cov_long[h - 1]);
                }
              }
              EXPECT_NEAR(total, 1.0, 1e-9);
              EXPECT_TRUE(has_keep);
              EXPECT_LE(kept.size(), raw.size());
              EXPECT_LE(kept.size(), static_cast<std::size_t>(k_max));
            }
          }
        }
      }
    }
  }
}

}  // namespace
}  // namespace lanegate
