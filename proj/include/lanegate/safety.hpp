#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>

#include <boost/math/distributions/normal.hpp>

namespace lanegate {

struct IdmParams {
  double jam_gap = 2.0;        // d0 [m]
  double headway = 1.0;        // T [s]
  double max_accel = 2.0;      // a [m/s^2]
  double comfort_decel = 3.0;  // b [m/s^2]
};

struct RiskParams {
  double epsilon = 0.05;        // allowed violation probability
  double k_eps = 0.5;           // bandwidth relative to d_idm
  double eps_min = 6.0;         // [m]
  double eps_max = 22.0;        // [m]
  double gamma_trigger = 1.0;   // gamma_1
  double gamma_release = 1.4;   // gamma_2
  double relax_ratio = 0.1;     // gamma, global slack cap as a fraction of d_idm
};

/// Standard normal quantile z such that P(Z <= z) = p.
inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double confidence_quantile(const RiskParams& p) { return normal_quantile(1.0 - p.epsilon); }

/// IDM desired gap with the dynamic term floored at zero.
inline double idm_gap(double v_ev, double v_sv, const IdmParams& p) {
  const double dynamic =
      v_ev * p.headway + v_ev * (v_ev - v_sv) / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  return p.jam_gap + std::max(0.0, dynamic);
}

/// Deterministic equivalent of the gap chance constraint.
inline double hard_margin(double d_idm, double gap_variance, double z_eps) {
  return d_idm + z_eps * std::sqrt(std::max(0.0, gap_variance));
}

inline double hard_margin(double d_idm, double gap_variance, const RiskParams& p) {
  return hard_margin(d_idm, gap_variance, confidence_quantile(p));
}

inline double bandwidth(double d_idm, const RiskParams& p) {
  return std::min(std::max(p.k_eps * d_idm, p.eps_min), p.eps_max);
}

struct Thresholds {
  double trigger = 0.0;
  double release = 0.0;
};

inline Thresholds thresholds(double d_hc, double eps_trig, const RiskParams& p) {
  return {d_hc + p.gamma_trigger * eps_trig, d_hc + p.gamma_release * eps_trig};
}

/// +1 when the ego vehicle is behind the surrounding vehicle, -1 when ahead.
inline int gap_sign(double x_ev, double x_sv) { return x_sv >= x_ev ? 1 : -1; }

inline double signed_gap(double x_ev_mean, double x_sv_mean, int s) {
  return s * (x_sv_mean - x_ev_mean);
}

/// Corrective-mode record for one surrounding vehicle. The release threshold
/// and band are captured at trigger time and stay fixed until release.
/// `following` is set on trigger and outlives the release for as long as the
/// vehicle stays the EV's direct leader; the planner caps its speed reference
/// at that vehicle's speed meanwhile.
struct HysteresisEntry {
  bool corrective = false;
  std::optional<double> frozen_release;
  std::optional<double> frozen_bandwidth;  // d_HS
  bool following = false;

  friend bool operator==(const HysteresisEntry&, const HysteresisEntry&) = default;
};

using HysteresisState = std::map<int, HysteresisEntry>;

/// Trigger on any predicted gap below d_trig; release only once every
/// predicted gap clears the frozen release threshold.
inline HysteresisEntry update_hysteresis(const HysteresisEntry& entry,
                                         std::span<const double> predicted_gaps, double d_trig,
                                         double d_rel_current) {
  HysteresisEntry out = entry;
  if (!entry.corrective) {
    const bool trigger = std::any_of(predicted_gaps.begin(), predicted_gaps.end(),
                                     [&](double g) { return g < d_trig; });
    if (trigger) {
      out.corrective = true;
      out.frozen_release = d_rel_current;
      out.frozen_bandwidth = d_rel_current - d_trig;
      out.following = true;
    }
    return out;
  }
  const double release = *entry.frozen_release;
  const bool clear = std::all_of(predicted_gaps.begin(), predicted_gaps.end(),
                                 [&](double g) { return g >= release; });
  if (clear) {
    out = HysteresisEntry{};
    out.following = entry.following;
  }
  return out;
}

}  // namespace lanegate
