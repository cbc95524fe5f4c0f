#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "lanegate/safety.hpp"

namespace lanegate {
namespace {

TEST(IdmGap, Examples) {
  const IdmParams p;
  EXPECT_DOUBLE_EQ(idm_gap(0.0, 30.0, p), 2.0);
  EXPECT_NEAR(idm_gap(25.0, 20.0, p), 52.5155, 1e-4);
  // Faster leader: the dynamic term is negative and floored.
  EXPECT_DOUBLE_EQ(idm_gap(16.15, 24.54, p), 2.0);
}

TEST(NormalQuantile, FivePercentTail) {
  EXPECT_NEAR(confidence_quantile(RiskParams{}), 1.644854, 1e-6);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
}

TEST(HardMargin, Examples) {
  const RiskParams r;
  EXPECT_DOUBLE_EQ(hard_margin(20.0, 0.0, r), 20.0);
  EXPECT_NEAR(hard_margin(20.0, 1.0, r), 21.645, 1e-3);
  EXPECT_NEAR(hard_margin(2.0, 0.25, r), 2.822, 1e-3);
}

TEST(Bandwidth, InteriorAndClamps) {
  const RiskParams r;
  EXPECT_DOUBLE_EQ(bandwidth(20.0, r), 10.0);
  EXPECT_DOUBLE_EQ(bandwidth(4.0, r), 6.0);
  EXPECT_DOUBLE_EQ(bandwidth(60.0, r), 22.0);
}

TEST(Thresholds, Examples) {
  const RiskParams r;
  const Thresholds a = thresholds(21.645, 10.0, r);
  EXPECT_NEAR(a.trigger, 31.645, 1e-12);
  EXPECT_NEAR(a.release, 35.645, 1e-12);
  const Thresholds b = thresholds(10.0, 0.0, r);
  EXPECT_DOUBLE_EQ(b.trigger, 10.0);
  EXPECT_DOUBLE_EQ(b.release, 10.0);
  const Thresholds c = thresholds(10.0, 6.0, r);
  EXPECT_NEAR(c.trigger, 16.0, 1e-12);
  EXPECT_NEAR(c.release, 18.4, 1e-12);
}

TEST(SignedGap, SignFollowsRelativeOrder) {
  EXPECT_EQ(gap_sign(0.0, 10.0), 1);
  EXPECT_EQ(gap_sign(10.0, 0.0), -1);
  EXPECT_DOUBLE_EQ(signed_gap(0.0, 10.0, 1), 10.0);
  EXPECT_DOUBLE_EQ(signed_gap(10.0, 0.0, -1), 10.0);
}

HysteresisEntry corrective(double frozen_release, double band) {
  HysteresisEntry e;
  e.corrective = true;
  e.frozen_release = frozen_release;
  e.frozen_bandwidth = band;
  e.following = true;
  return e;
}

TEST(UpdateHysteresis, TriggerFreezesRelease) {
  const std::vector<double> gaps{33, 30, 29};
  const HysteresisEntry e = update_hysteresis({}, gaps, 31.645, 35.645);
  EXPECT_TRUE(e.corrective);
  EXPECT_DOUBLE_EQ(*e.frozen_release, 35.645);
  EXPECT_NEAR(*e.frozen_bandwidth, 4.0, 1e-12);
  EXPECT_TRUE(e.following);
}

TEST(UpdateHysteresis, FullReleaseClearsFrozenFields) {
  const std::vector<double> gaps{36, 37, 38};
  const HysteresisEntry e = update_hysteresis(corrective(35.645, 4.0), gaps, 31.645, 35.645);
  EXPECT_FALSE(e.corrective);
  EXPECT_FALSE(e.frozen_release.has_value());
  EXPECT_FALSE(e.frozen_bandwidth.has_value());
}

TEST(UpdateHysteresis, PartialClearanceHolds) {
  const std::vector<double> gaps{36, 34, 38};
  const HysteresisEntry before = corrective(35.645, 4.0);
  EXPECT_EQ(update_hysteresis(before, gaps, 31.645, 35.645), before);
}

TEST(UpdateHysteresis, FrozenReleaseIgnoresCurrentThreshold) {
  const std::vector<double> gaps{36, 36, 36};
  // A larger current release threshold must not delay the release.
  const HysteresisEntry e = update_hysteresis(corrective(35.645, 4.0), gaps, 40.0, 50.0);
  EXPECT_FALSE(e.corrective);
}

TEST(UpdateHysteresis, NoTriggerAboveThreshold) {
  const std::vector<double> gaps{31.645, 40, 50};
  EXPECT_EQ(update_hysteresis({}, gaps, 31.645, 35.645), HysteresisEntry{});
}

TEST(Properties, IdmGapFloorAndMonotonicity) {
  const IdmParams p;
  for (double v_ev = 0.0; v_ev <= 45.0; v_ev += 1.5) {
    double prev = std::numeric_limits<double>::infinity();
    for (double v_sv = 0.0; v_sv <= 45.0; v_sv += 1.5) {
      const double d = idm_gap(v_ev, v_sv, p);
      EXPECT_GE(d, p.jam_gap);
      EXPECT_LE(d, prev);  // a faster leader never needs a larger gap
      prev = d;
    }
  }
}

TEST(Properties, MarginsOrdered) {
  const RiskParams r;
  for (double d_idm = 2.0; d_idm <= 120.0; d_idm += 3.7) {
    for (double var = 0.0; var <= 4.0; var += 0.5) {
      const double d_hc = hard_margin(d_idm, var, r);
      EXPECT_GE(d_hc, d_idm);
      EXPECT_GE(hard_margin(d_idm, var + 0.5, r), d_hc);
      const double eps = bandwidth(d_idm, r);
      EXPECT_GE(eps, r.eps_min);
      EXPECT_LE(eps, r.eps_max);
      const Thresholds t = thresholds(d_hc, eps, r);
      EXPECT_LT(d_hc, t.trigger);
      EXPECT_LT(t.trigger, t.release);
    }
  }
}

// Random gap sequences: the release threshold never moves while corrective,
// release needs every gap clear, and a trigger needs some gap below d_trig.
TEST(Properties, HysteresisTransitions) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> gap(10.0, 60.0);
  std::uniform_real_distribution<double> trig(20.0, 40.0);
  HysteresisEntry e;
  for (int i = 0; i < 20000; ++i) {
    const std::vector<double> gaps{gap(rng), gap(rng), gap(rng)};
    const double d_trig = trig(rng);
    const double d_rel = d_trig + 6.0;
    const HysteresisEntry next = update_hysteresis(e, gaps, d_trig, d_rel);
    const double min_gap = std::min({gaps[0], gaps[1], gaps[2]});
    if (!e.corrective) {
      EXPECT_EQ(next.corrective, min_gap < d_trig);
      if (next.corrective) {
        EXPECT_DOUBLE_EQ(*next.frozen_release, d_rel);
        EXPECT_DOUBLE_EQ(*next.frozen_bandwidth, d_rel - d_trig);
      }
    } else {
      EXPECT_EQ(!next.corrective, min_gap >= *e.frozen_release);
      if (next.corrective) {
        EXPECT_EQ(next.frozen_release, e.frozen_release);
      }
    }
    e = next;
  }
}

// Gaps parked inside the band toggle the flag at most once.
TEST(Properties, NoChatterInsideBand) {
  HysteresisEntry e;
  int toggles = 0;
  for (int k = 0; k < 400; ++k) {
    const double g = 32.0 + 3.0 * std::sin(0.3 * k);  // spans [29, 35], below 35.645
    const std::vector<double> gaps{g, g, g};
    const HysteresisEntry next = update_hysteresis(e, gaps, 31.645, 35.645);
    toggles += next.corrective != e.corrective;
    e = next;
  }
  EXPECT_EQ(toggles, 1);
}

}  // namespace
}  // namespace lanegate
