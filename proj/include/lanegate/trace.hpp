#pragma once

#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lanegate/sim.hpp"

namespace lanegate {

inline constexpr const char* kTraceSchema = "lanegate-trace";
inline constexpr int kTraceVersion = 1;

inline nlohmann::json trace_header(const TraceRecord& t) {
  return {{"schema", kTraceSchema},
          {"version", kTraceVersion},
          {"seed", t.seed},
          {"lane_count", t.lane_count},
          {"dt_low", t.dt_low},
          {"dt_high", t.dt_high}};
}

inline nlohmann::json to_json(const StateRecord& s) {
  nlohmann::json vs = nlohmann::json::array();
  for (const VehicleRecord& v : s.vehicles) {
    vs.push_back({{"id", v.id},
                  {"x", v.state.x},
                  {"y", v.state.y},
                  {"v", v.state.v},
                  {"lane", v.maneuver.lane},
                  {"mode", v.maneuver.mode}});
  }
  return {{"type", "state"}, {"t", s.t}, {"vehicles", vs}};
}

inline nlohmann::json to_json(const DecisionRecord& d) {
  return {{"type", "decision"},
          {"t", d.t},
          {"action", {d.action.lat, d.action.lon}},
          {"lane", d.maneuver.lane},
          {"mode", d.maneuver.mode},
          {"layer", std::string(to_string(d.layer))},
          {"cost", d.cost},
          {"slack_total", d.slack_total},
          {"corrective_ids", d.corrective_ids}};
}

inline nlohmann::json to_json(const CollisionEvent& c) {
  return {{"type", "collision"},
          {"t", c.t},
          {"pair", {c.a, c.b}},
          {"positions", {{c.pos_a.x, c.pos_a.y}, {c.pos_b.x, c.pos_b.y}}}};
}

/// JSON lines: header, then records in time order. Decisions precede the
/// state records they produced; collisions follow the state they were seen in.
inline void write_trace_jsonl(std::ostream& out, const TraceRecord& t) {
  out << trace_header(t).dump() << '\n';
  std::size_t d = 0;
  std::size_t c = 0;
  const double eps = 1e-9;
  for (const StateRecord& s : t.states) {
    while (d < t.decisions.size() && t.decisions[d].t < s.t - eps) {
      out << to_json(t.decisions[d++]).dump() << '\n';
    }
    out << to_json(s).dump() << '\n';
    while (c < t.collisions.size() && t.collisions[c].t <= s.t + eps) {
      out << to_json(t.collisions[c++]).dump() << '\n';
    }
  }
  for (; d < t.decisions.size(); ++d) out << to_json(t.decisions[d]).dump() << '\n';
  for (; c < t.collisions.size(); ++c) out << to_json(t.collisions[c]).dump() << '\n';
}

/// 64-bit FNV-1a over the serialized trace.
inline std::uint64_t trace_digest(const TraceRecord& t) {
  std::ostringstream os;
  write_trace_jsonl(os, t);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace lanegate
