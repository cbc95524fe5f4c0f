#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "lanegate/sim.hpp"

namespace lanegate {

using json = nlohmann::json;

namespace detail {

/// Reads optional fields from a JSON object and rejects keys it was not told
/// about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::initializer_list<const char*> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
      if (!ok.contains(key)) throw ConfigError("unknown key '" + child(key) + "'");
    }
  }

  template <class T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + child(key) + "': " + e.what());
    }
  }

  const json* sub(const char* key) const { return j_.contains(key) ? &j_.at(key) : nullptr; }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
};

inline SvPolicyKind parse_policy(const std::string& s, const std::string& path) {
  if (s == "idm") return SvPolicyKind::kIdm;
  if (s == "constant") return SvPolicyKind::kConstant;
  throw ConfigError("bad value for '" + path + "': expected \"idm\" or \"constant\"");
}

inline const char* policy_name(SvPolicyKind k) { return k == SvPolicyKind::kIdm ? "idm" : "constant"; }

inline void read_planner(const json& j, const std::string& path, PlannerConfig& p) {
  ObjectReader r(j, path,
                 {"horizon", "perception_range", "hysteresis", "kinematics", "idm", "risk", "prior",
                  "noise", "weights"});
  r.get("horizon", p.prediction.horizon);
  r.get("perception_range", p.perception_range);
  r.get("hysteresis", p.hysteresis);
  if (const json* k = r.sub("kinematics")) {
    ObjectReader kr(*k, r.child("kinematics"), {"accel", "decel", "v_min", "v_max"});
    kr.get("accel", p.prediction.kin.accel);
    kr.get("decel", p.prediction.kin.decel);
    kr.get("v_min", p.prediction.kin.v_min);
    kr.get("v_max", p.prediction.kin.v_max);
  }
  if (const json* k = r.sub("idm")) {
    ObjectReader ir(*k, r.child("idm"), {"jam_gap", "headway", "max_accel", "comfort_decel"});
    ir.get("jam_gap", p.idm.jam_gap);
    ir.get("headway", p.idm.headway);
    ir.get("max_accel", p.idm.max_accel);
    ir.get("comfort_decel", p.idm.comfort_decel);
  }
  if (const json* k = r.sub("risk")) {
    ObjectReader rr(*k, r.child("risk"),
                    {"epsilon", "k_eps", "eps_min", "eps_max", "gamma_trigger", "gamma_release",
                     "relax_ratio"});
    rr.get("epsilon", p.risk.epsilon);
    rr.get("k_eps", p.risk.k_eps);
    rr.get("eps_min", p.risk.eps_min);
    rr.get("eps_max", p.risk.eps_max);
    rr.get("gamma_trigger", p.risk.gamma_trigger);
    rr.get("gamma_release", p.risk.gamma_release);
    rr.get("relax_ratio", p.risk.relax_ratio);
  }
  if (const json* k = r.sub("prior")) {
    ObjectReader pr(*k, r.child("prior"), {"p_keep", "p_min", "k_max"});
    pr.get("p_keep", p.prediction.prior.p_keep);
    pr.get("p_min", p.prediction.prior.p_min);
    pr.get("k_max", p.prediction.prior.k_max);
  }
  if (const json* k = r.sub("noise")) {
    ObjectReader nr(*k, r.child("noise"), {"initial_variance", "step_sigma"});
    nr.get("initial_variance", p.prediction.noise.initial_variance);
    nr.get("step_sigma", p.prediction.noise.step_sigma);
  }
  if (const json* k = r.sub("weights")) {
    ObjectReader wr(*k, r.child("weights"), {"w_slack", "w_global", "w_speed", "v_ref", "selector"});
    wr.get("w_slack", p.weights.w_slack);
    wr.get("w_global", p.weights.w_global);
    wr.get("w_speed", p.weights.w_speed);
    wr.get("v_ref", p.weights.v_ref);
    wr.get("selector", p.weights.selector_table);
  }
}

inline void read_sim(const json& j, const std::string& path, SimParams& s) {
  ObjectReader r(j, path,
                 {"duration", "dt_low", "dt_high", "lane_change_time", "vehicle_length",
                  "vehicle_width", "halt_on_collision", "lane_change_prob", "lc_gap_factor",
                  "follow_margin", "follow_surplus", "speed_band"});
  r.get("duration", s.duration);
  r.get("dt_low", s.dt_low);
  r.get("dt_high", s.dt_high);
  r.get("lane_change_time", s.lane_change_time);
  r.get("vehicle_length", s.vehicle_length);
  r.get("vehicle_width", s.vehicle_width);
  r.get("halt_on_collision", s.halt_on_collision);
  r.get("lane_change_prob", s.lane_change_prob);
  r.get("lc_gap_factor", s.lc_gap_factor);
  r.get("follow_margin", s.follow_margin);
  r.get("follow_surplus", s.follow_surplus);
  r.get("speed_band", s.speed_band);
}

inline void read_road(const json& j, const std::string& path, LaneGeometry& g) {
  ObjectReader r(j, path, {"lane_count", "lane_width"});
  r.get("lane_count", g.lane_count);
  r.get("lane_width", g.lane_width);
}

/// Copies derived planner fields from the simulation settings.
inline void sync_derived(ScenarioConfig& c) {
  c.planner.prediction.dt = c.sim.dt_high;
  c.planner.vehicle_length = c.sim.vehicle_length;
}

}  // namespace detail

/// Parses the shared parts of a scenario (road, sim, planner, seed) into `c`.
/// With `allow_traffic` the ev and svs blocks are read too.
inline void apply_config_json(const json& j, ScenarioConfig& c, bool allow_traffic = true) {
  using detail::ObjectReader;
  ObjectReader r = allow_traffic
                       ? ObjectReader(j, "", {"seed", "road", "sim", "planner", "ev", "svs"})
                       : ObjectReader(j, "", {"seed", "road", "sim", "planner"});
  r.get("seed", c.seed);
  if (const json* s = r.sub("road")) detail::read_road(*s, "road", c.planner.prediction.geom);
  if (const json* s = r.sub("sim")) detail::read_sim(*s, "sim", c.sim);
  if (const json* s = r.sub("planner")) detail::read_planner(*s, "planner", c.planner);
  if (const json* s = r.sub("ev")) {
    ObjectReader er(*s, "ev", {"lane", "x", "v", "mode"});
    er.get("lane", c.ev.lane);
    er.get("x", c.ev.x);
    er.get("v", c.ev.v);
    er.get("mode", c.ev.mode);
  }
  if (const json* s = r.sub("svs")) {
    if (!s->is_array()) throw ConfigError("svs: expected an array");
    c.svs.clear();
    int idx = 0;
    for (const json& item : *s) {
      const std::string path = "svs[" + std::to_string(idx++) + "]";
      ObjectReader sr(item, path,
                      {"id", "lane", "x", "v", "mode", "desired_speed", "policy", "lane_change_prob"});
      SvInit sv;
      sv.id = idx;
      sr.get("id", sv.id);
      sr.get("lane", sv.lane);
      sr.get("x", sv.x);
      sr.get("v", sv.v);
      sr.get("mode", sv.mode);
      if (item.contains("desired_speed")) {
        double d = 0;
        sr.get("desired_speed", d);
        sv.desired_speed = d;
      }
      if (item.contains("lane_change_prob")) {
        double p = 0;
        sr.get("lane_change_prob", p);
        sv.lane_change_prob = p;
      }
      std::string policy = "idm";
      sr.get("policy", policy);
      sv.policy = detail::parse_policy(policy, sr.child("policy"));
      c.svs.push_back(sv);
    }
  }
  detail::sync_derived(c);
}

inline ScenarioConfig parse_config(const json& j) {
  ScenarioConfig c;
  apply_config_json(j, c);
  validate(c);
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline ScenarioConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

inline json to_json(const ScenarioConfig& c) {
  const PlannerConfig& p = c.planner;
  json j;
  j["seed"] = c.seed;
  j["road"] = {{"lane_count", c.geom().lane_count}, {"lane_width", c.geom().lane_width}};
  j["sim"] = {{"duration", c.sim.duration},
              {"dt_low", c.sim.dt_low},
              {"dt_high", c.sim.dt_high},
              {"lane_change_time", c.sim.lane_change_time},
              {"vehicle_length", c.sim.vehicle_length},
              {"vehicle_width", c.sim.vehicle_width},
              {"halt_on_collision", c.sim.halt_on_collision},
              {"lane_change_prob", c.sim.lane_change_prob},
              {"lc_gap_factor", c.sim.lc_gap_factor},
              {"follow_margin", c.sim.follow_margin},
              {"follow_surplus", c.sim.follow_surplus},
              {"speed_band", c.sim.speed_band}};
  j["planner"] = {
      {"horizon", p.prediction.horizon},
      {"perception_range", p.perception_range},
      {"hysteresis", p.hysteresis},
      {"kinematics",
       {{"accel", p.prediction.kin.accel},
        {"decel", p.prediction.kin.decel},
        {"v_min", p.prediction.kin.v_min},
        {"v_max", p.prediction.kin.v_max}}},
      {"idm",
       {{"jam_gap", p.idm.jam_gap},
        {"headway", p.idm.headway},
        {"max_accel", p.idm.max_accel},
        {"comfort_decel", p.idm.comfort_decel}}},
      {"risk",
       {{"epsilon", p.risk.epsilon},
        {"k_eps", p.risk.k_eps},
        {"eps_min", p.risk.eps_min},
        {"eps_max", p.risk.eps_max},
        {"gamma_trigger", p.risk.gamma_trigger},
        {"gamma_release", p.risk.gamma_release},
        {"relax_ratio", p.risk.relax_ratio}}},
      {"prior",
       {{"p_keep", p.prediction.prior.p_keep},
        {"p_min", p.prediction.prior.p_min},
        {"k_max", p.prediction.prior.k_max}}},
      {"noise",
       {{"initial_variance", p.prediction.noise.initial_variance},
        {"step_sigma", p.prediction.noise.step_sigma}}},
      {"weights",
       {{"w_slack", p.weights.w_slack},
        {"w_global", p.weights.w_global},
        {"w_speed", p.weights.w_speed},
        {"v_ref", p.weights.v_ref},
        {"selector", p.weights.selector_table}}}};
  j["ev"] = {{"lane", c.ev.lane}, {"x", c.ev.x}, {"v", c.ev.v}, {"mode", c.ev.mode}};
  j["svs"] = json::array();
  for (const SvInit& sv : c.svs) {
    json s = {{"id", sv.id},     {"lane", sv.lane}, {"x", sv.x},
              {"v", sv.v},       {"mode", sv.mode}, {"policy", detail::policy_name(sv.policy)}};
    if (sv.desired_speed) s["desired_speed"] = *sv.desired_speed;
    if (sv.lane_change_prob) s["lane_change_prob"] = *sv.lane_change_prob;
    j["svs"].push_back(s);
  }
  return j;
}

}  // namespace lanegate
