#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lanegate/config.hpp"
#include "lanegate/sim.hpp"

namespace lanegate {

struct Family {
  int lane_count = 2;
  int sv_count = 5;
  double v_lo = 10.0;
  double v_hi = 20.0;
};

/// Lane count x speed regime x traffic density, ordered lanes-major.
inline std::vector<Family> default_families() {
  std::vector<Family> out;
  for (int lanes : {2, 3, 4}) {
    for (auto [lo, hi] : {std::pair{10.0, 20.0}, std::pair{25.0, 40.0}}) {
      for (int n : {5, 8, 10}) out.push_back({lanes, n, lo, hi});
    }
  }
  return out;
}

struct SamplingSpec {
  double x_lo = 0.0;
  double x_hi = 500.0;
  double min_separation_factor = 1.5;  // x vehicle length, same lane
  int max_attempts = 1000;
};

/// Seed for trial `trial` of family `family`, derived from the batch seed.
inline std::uint64_t trial_seed(std::uint64_t base, std::size_t family, std::size_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(family), static_cast<std::uint32_t>(trial)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

/// Random initial traffic for one family. Vehicles (EV included) get uniform
/// lanes, positions and speeds. A draw is rejected when it lands closer than
/// the minimum separation to a same-lane vehicle, or when the bumper gap to
/// that vehicle is below the follower's IDM gap. Every vehicle's desired speed
/// is its initial speed, and the EV's speed reference is its initial speed.
inline ScenarioConfig sample_scenario(const Family& fam, std::uint64_t seed,
                                      const ScenarioConfig& base, const SamplingSpec& spec = {}) {
  if (fam.lane_count < 1 || fam.sv_count < 0 || fam.v_lo > fam.v_hi || spec.x_lo > spec.x_hi) {
    throw ConfigError("invalid scenario family");
  }
  ScenarioConfig c = base;
  c.seed = seed;
  c.planner.prediction.geom.lane_count = fam.lane_count;
  c.svs.clear();

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<int> lane_dist(1, fam.lane_count);
  std::uniform_real_distribution<double> x_dist(spec.x_lo, spec.x_hi);
  std::uniform_real_distribution<double> v_dist(fam.v_lo, fam.v_hi);
  const double length = base.sim.vehicle_length;
  const double min_sep = spec.min_separation_factor * length;

  struct Placed {
    int lane;
    double x;
    double v;
  };
  auto compatible = [&](const Placed& p, const Placed& q) {
    if (p.lane != q.lane) return true;
    const Placed& back = p.x < q.x ? p : q;
    const Placed& front = p.x < q.x ? q : p;
    const double dx = front.x - back.x;
    return dx >= min_sep && dx - length >= idm_gap(back.v, front.v, base.planner.idm);
  };
  std::vector<Placed> placed;
  int attempts = 0;
  auto place = [&]() -> Placed {
    while (true) {
      if (attempts++ >= spec.max_attempts) {
        throw ConfigError("could not separate initial placements within " +
                          std::to_string(spec.max_attempts) + " attempts");
      }
      Placed p;
      p.lane = lane_dist(rng);
      p.x = x_dist(rng);
      p.v = v_dist(rng);
      if (std::all_of(placed.begin(), placed.end(), [&](const Placed& q) { return compatible(p, q); })) {
        placed.push_back(p);
        return p;
      }
    }
  };
  const Placed ev = place();
  c.ev = {ev.lane, ev.x, ev.v, 0};
  c.planner.weights.v_ref = ev.v;
  for (int i = 0; i < fam.sv_count; ++i) {
    const Placed p = place();
    SvInit sv;
    sv.id = i + 1;
    sv.lane = p.lane;
    sv.x = p.x;
    sv.v = p.v;
    sv.desired_speed = p.v;
    c.svs.push_back(sv);
  }
  validate(c);
  return c;
}

/// Per-episode summary, the unit that batch metrics are aggregated from.
struct TrialRecord {
  std::size_t family = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  long decisions = 0;
  long nominal = 0;
  long relaxed = 0;
  long fallback = 0;
  bool collided = false;
  bool ev_collided = false;
  int beta_switches = 0;
  double solve_mean = 0.0;
  double solve_max = 0.0;
  double solve_sum = 0.0;
};

inline TrialRecord summarize(const EpisodeResult& r, std::size_t family, std::size_t trial,
                             std::uint64_t seed) {
  TrialRecord t;
  t.family = family;
  t.trial = trial;
  t.seed = seed;
  const LayerCounts c = count_layers(r.trace);
  t.decisions = c.total();
  t.nominal = c.nominal;
  t.relaxed = c.relaxed;
  t.fallback = c.fallback;
  t.collided = r.collided();
  t.ev_collided = std::any_of(r.trace.collisions.begin(), r.trace.collisions.end(),
                              [](const CollisionEvent& e) { return e.a == 0 || e.b == 0; });
  t.beta_switches = count_mode_switches(r.trace, r.initial_mode);
  for (double s : r.solve_times) {
    t.solve_sum += s;
    t.solve_max = std::max(t.solve_max, s);
  }
  t.solve_mean = r.solve_times.empty() ? 0.0 : t.solve_sum / r.solve_times.size();
  return t;
}

struct Metrics {
  long trials = 0;
  long failed = 0;
  long decisions = 0;
  long nominal = 0;
  long relaxed = 0;
  long fallback = 0;
  long collisions = 0;
  long ev_collisions = 0;
  long beta_switch_total = 0;
  double solve_sum = 0.0;
  double solve_max = 0.0;

  double collision_rate() const { return trials ? static_cast<double>(collisions) / trials : 0.0; }
  double nor() const { return decisions ? static_cast<double>(nominal) / decisions : 0.0; }
  double gsrr() const { return decisions ? static_cast<double>(relaxed) / decisions : 0.0; }
  double fbr() const { return decisions ? static_cast<double>(fallback) / decisions : 0.0; }
  double beta_switches() const {
    return trials ? static_cast<double>(beta_switch_total) / trials : 0.0;
  }
  double solve_mean() const { return decisions ? solve_sum / decisions : 0.0; }
};

/// Order-independent reduction over trial records. Failed episodes are
/// counted but excluded from every rate denominator.
inline Metrics aggregate_metrics(const std::vector<TrialRecord>& records) {
  Metrics m;
  for (const TrialRecord& r : records) {
    if (!r.ok) {
      ++m.failed;
      continue;
    }
    ++m.trials;
    m.decisions += r.decisions;
    m.nominal += r.nominal;
    m.relaxed += r.relaxed;
    m.fallback += r.fallback;
    m.collisions += r.collided ? 1 : 0;
    m.ev_collisions += r.ev_collided ? 1 : 0;
    m.beta_switch_total += r.beta_switches;
    m.solve_sum += r.solve_sum;
    m.solve_max = std::max(m.solve_max, r.solve_max);
  }
  return m;
}

struct BatchResult {
  std::vector<Family> families;
  std::vector<TrialRecord> records;  // family-major, trial-minor
  std::vector<Metrics> per_family;
  Metrics overall;
};

/// Runs every (family, trial) pair on up to `workers` threads. Results are
/// stored by index, so aggregation does not depend on scheduling.
inline BatchResult run_batch(const std::vector<Family>& families, int trials_per_family,
                             int workers, const ScenarioConfig& base, std::uint64_t base_seed,
                             const SamplingSpec& spec = {}, std::ostream* warn = &std::cerr) {
  if (trials_per_family < 1) throw ConfigError("trials per family must be >= 1");
  BatchResult out;
  out.families = families;
  const std::size_t n_trials = static_cast<std::size_t>(trials_per_family);
  const std::size_t total = families.size() * n_trials;
  out.records.resize(total);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t f = i / n_trials;
      const std::size_t t = i % n_trials;
      const std::uint64_t seed = trial_seed(base_seed, f, t);
      try {
        const ScenarioConfig cfg = sample_scenario(families[f], seed, base, spec);
        out.records[i] = summarize(run_episode(cfg), f, t, seed);
      } catch (const std::exception& e) {
        TrialRecord r;
        r.family = f;
        r.trial = t;
        r.seed = seed;
        r.ok = false;
        r.error = e.what();
        out.records[i] = r;
      }
    }
  };
  const int n_workers = std::max(1, workers);
  std::vector<std::jthread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();

  for (std::size_t f = 0; f < families.size(); ++f) {
    std::vector<TrialRecord> fam(out.records.begin() + f * n_trials,
                                 out.records.begin() + (f + 1) * n_trials);
    out.per_family.push_back(aggregate_metrics(fam));
  }
  out.overall = aggregate_metrics(out.records);
  if (warn != nullptr) {
    for (const TrialRecord& r : out.records) {
      if (!r.ok) {
        *warn << "warning: family " << r.family + 1 << " trial " << r.trial << " failed: " << r.error
              << '\n';
      }
    }
  }
  return out;
}

inline constexpr const char* kMetricsHeader =
    "id,lane_count,v_lo,v_hi,sv_count,trials,decision_steps,collision_rate_pct,nor_pct,gsrr_pct,"
    "fbr_pct,beta_switches_mean";

namespace detail {
inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}
}  // namespace detail

inline std::string metrics_row(const std::string& id, const std::string& lanes,
                               const std::string& vlo, const std::string& vhi,
                               const std::string& svs, const Metrics& m) {
  using detail::fmt;
  std::ostringstream os;
  os << id << ',' << lanes << ',' << vlo << ',' << vhi << ',' << svs << ',' << m.trials << ','
     << m.decisions << ',' << fmt("%.4f", 100.0 * m.collision_rate()) << ','
     << fmt("%.4f", 100.0 * m.nor()) << ',' << fmt("%.4f", 100.0 * m.gsrr()) << ','
     << fmt("%.4f", 100.0 * m.fbr()) << ',' << fmt("%.4f", m.beta_switches());
  return os.str();
}

/// Table-style summary: one row per family plus an overall row. Holds no
/// wall-clock data, so identical seeds give identical bytes.
inline std::string metrics_csv(const BatchResult& b) {
  using detail::fmt;
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (std::size_t f = 0; f < b.families.size(); ++f) {
    const Family& fam = b.families[f];
    os << metrics_row(std::to_string(f + 1), std::to_string(fam.lane_count), fmt("%g", fam.v_lo),
                      fmt("%g", fam.v_hi), std::to_string(fam.sv_count), b.per_family[f])
       << '\n';
  }
  os << metrics_row("overall", "-", "-", "-", "-", b.overall) << '\n';
  return os.str();
}

inline std::string timing_csv(const BatchResult& b) {
  using detail::fmt;
  std::ostringstream os;
  os << "id,decisions,solve_mean_s,solve_max_s\n";
  for (std::size_t f = 0; f < b.families.size(); ++f) {
    const Metrics& m = b.per_family[f];
    os << f + 1 << ',' << m.decisions << ',' << fmt("%.6f", m.solve_mean()) << ','
       << fmt("%.6f", m.solve_max) << '\n';
  }
  os << "overall," << b.overall.decisions << ',' << fmt("%.6f", b.overall.solve_mean()) << ','
     << fmt("%.6f", b.overall.solve_max) << '\n';
  return os.str();
}

inline nlohmann::json to_json(const TrialRecord& r, const Family& fam) {
  nlohmann::json j = {{"family", r.family + 1},
                      {"lane_count", fam.lane_count},
                      {"sv_count", fam.sv_count},
                      {"v_lo", fam.v_lo},
                      {"v_hi", fam.v_hi},
                      {"trial", r.trial},
                      {"seed", r.seed},
                      {"ok", r.ok}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j.update({{"decisions", r.decisions},
            {"nominal", r.nominal},
            {"relaxed", r.relaxed},
            {"fallback", r.fallback},
            {"collided", r.collided},
            {"ev_collided", r.ev_collided},
            {"beta_switches", r.beta_switches},
            {"solve_mean_s", r.solve_mean},
            {"solve_max_s", r.solve_max}});
  return j;
}

/// Rebuilds a batch from records.jsonl (as written by emit_report).
inline BatchResult load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  BatchResult b;
  std::string line;
  std::vector<std::vector<TrialRecord>> grouped;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const std::size_t f = j.at("family").get<std::size_t>() - 1;
    if (f >= b.families.size()) {
      b.families.resize(f + 1);
      grouped.resize(f + 1);
    }
    b.families[f] = {j.at("lane_count").get<int>(), j.at("sv_count").get<int>(),
                     j.at("v_lo").get<double>(), j.at("v_hi").get<double>()};
    TrialRecord r;
    r.family = f;
    r.trial = j.at("trial").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    if (r.ok) {
      r.decisions = j.at("decisions").get<long>();
      r.nominal = j.at("nominal").get<long>();
      r.relaxed = j.at("relaxed").get<long>();
      r.fallback = j.at("fallback").get<long>();
      r.collided = j.at("collided").get<bool>();
      r.ev_collided = j.at("ev_collided").get<bool>();
      r.beta_switches = j.at("beta_switches").get<int>();
      r.solve_mean = j.at("solve_mean_s").get<double>();
      r.solve_max = j.at("solve_max_s").get<double>();
      r.solve_sum = r.solve_mean * static_cast<double>(r.decisions);
    } else {
      r.error = j.value("error", "");
    }
    grouped[f].push_back(r);
  }
  for (auto& g : grouped) {
    std::sort(g.begin(), g.end(), [](const auto& a, const auto& c) { return a.trial < c.trial; });
    b.per_family.push_back(aggregate_metrics(g));
    b.records.insert(b.records.end(), g.begin(), g.end());
  }
  b.overall = aggregate_metrics(b.records);
  return b;
}

}  // namespace lanegate
