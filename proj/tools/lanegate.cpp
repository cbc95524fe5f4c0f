// Command-line driver: single episodes, batch evaluation, hysteresis ablation
// and report regeneration.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lanegate/config.hpp"
#include "lanegate/eval.hpp"
#include "lanegate/report.hpp"
#include "lanegate/sim.hpp"
#include "lanegate/trace.hpp"

namespace fs = std::filesystem;
using namespace lanegate;

namespace {

enum ExitCode { kOk = 0, kConfigFailure = 1, kRuntimeFailure = 2 };

void apply_seed_override(std::uint64_t& seed) {
  const char* env = std::getenv("LANEGATE_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const std::string s(env);
    if (s.front() == '-') throw std::invalid_argument("negative");
    const unsigned long long v = std::stoull(s, &used, 10);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    seed = v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("LANEGATE_SEED is not an unsigned integer: ") + env);
  }
}

ScenarioConfig load_scenario(const std::string& path) {
  ScenarioConfig c = parse_config(read_json_file(path));
  apply_seed_override(c.seed);
  return c;
}

nlohmann::json episode_summary(const EpisodeResult& r) {
  const LayerCounts c = count_layers(r.trace);
  double mean = 0.0, peak = 0.0;
  for (double s : r.solve_times) {
    mean += s;
    peak = std::max(peak, s);
  }
  if (!r.solve_times.empty()) mean /= static_cast<double>(r.solve_times.size());
  int corrective_steps = 0;
  for (const DecisionRecord& d : r.trace.decisions) corrective_steps += d.corrective_ids.empty() ? 0 : 1;
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx",
                static_cast<unsigned long long>(trace_digest(r.trace)));
  return {{"seed", r.trace.seed},
          {"decisions", c.total()},
          {"nominal", c.nominal},
          {"relaxed", c.relaxed},
          {"fallback", c.fallback},
          {"collisions", r.trace.collisions.size()},
          {"beta_switches", count_mode_switches(r.trace, r.initial_mode)},
          {"corrective_steps", corrective_steps},
          {"solve_mean_s", mean},
          {"solve_max_s", peak},
          {"trace_digest", digest}};
}

void write_trace_file(const EpisodeResult& r, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trace_jsonl(out, r.trace);
}

int cmd_run(const std::string& config, const std::string& out_dir, bool plots) {
  const ScenarioConfig cfg = load_scenario(config);
  const EpisodeResult r = run_episode(cfg);
  const nlohmann::json summary = episode_summary(r);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_trace_file(r, fs::path(out_dir) / "trace.jsonl");
    write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
    if (plots) write_trace_plots(r.trace, out_dir);
  }
  std::cout << summary.dump(2) << '\n';
  return kOk;
}

struct BatchSpec {
  std::vector<Family> families = default_families();
  std::uint64_t seed = 1;
  ScenarioConfig base;
  SamplingSpec sampling;
};

BatchSpec load_batch_spec(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  detail::ObjectReader r(j, "", {"seed", "families", "base", "sampling"});
  BatchSpec spec;
  r.get("seed", spec.seed);
  if (const nlohmann::json* f = r.sub("families")) {
    if (f->is_string() && f->get<std::string>() == "default") {
      spec.families = default_families();
    } else if (f->is_array()) {
      spec.families.clear();
      int idx = 0;
      for (const nlohmann::json& item : *f) {
        detail::ObjectReader fr(item, "families[" + std::to_string(idx++) + "]",
                                {"lane_count", "sv_count", "v_lo", "v_hi"});
        Family fam;
        fr.get("lane_count", fam.lane_count);
        fr.get("sv_count", fam.sv_count);
        fr.get("v_lo", fam.v_lo);
        fr.get("v_hi", fam.v_hi);
        if (fam.lane_count < 1 || fam.sv_count < 0 || fam.v_lo > fam.v_hi || fam.v_lo < 0) {
          throw ConfigError("families[" + std::to_string(idx - 1) + "]: invalid family");
        }
        spec.families.push_back(fam);
      }
      if (spec.families.empty()) throw ConfigError("families: empty list");
    } else {
      throw ConfigError("families: expected \"default\" or an array");
    }
  }
  if (const nlohmann::json* b = r.sub("base")) apply_config_json(*b, spec.base, false);
  if (const nlohmann::json* s = r.sub("sampling")) {
    detail::ObjectReader sr(*s, "sampling", {"x_lo", "x_hi", "min_separation_factor", "max_attempts"});
    sr.get("x_lo", spec.sampling.x_lo);
    sr.get("x_hi", spec.sampling.x_hi);
    sr.get("min_separation_factor", spec.sampling.min_separation_factor);
    sr.get("max_attempts", spec.sampling.max_attempts);
    if (spec.sampling.x_lo > spec.sampling.x_hi) throw ConfigError("sampling: x_lo > x_hi");
  }
  apply_seed_override(spec.seed);
  return spec;
}

int cmd_batch(const std::string& families, int trials, int workers, const std::string& out_dir) {
  const BatchSpec spec = load_batch_spec(families);
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const BatchResult b = run_batch(spec.families, trials, workers, spec.base, spec.seed, spec.sampling);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  emit_report(b, out_dir);
  std::cout << metrics_csv(b);
  std::cerr << "episodes: " << b.records.size() << " (failed " << b.overall.failed << "), wall "
            << wall << " s\n";
  return kOk;
}

int cmd_ablate(const std::string& config, const std::string& out_dir, bool plots) {
  ScenarioConfig on = load_scenario(config);
  on.planner.hysteresis = true;
  ScenarioConfig off = on;
  off.planner.hysteresis = false;
  const EpisodeResult r_on = run_episode(on);
  const EpisodeResult r_off = run_episode(off);

  fs::create_directories(out_dir);
  write_trace_file(r_on, fs::path(out_dir) / "trace_hysteresis.jsonl");
  write_trace_file(r_off, fs::path(out_dir) / "trace_no_hysteresis.jsonl");
  std::ostringstream modes;
  modes << "t,mode_hysteresis,mode_no_hysteresis\n";
  const std::size_t n = std::min(r_on.trace.decisions.size(), r_off.trace.decisions.size());
  for (std::size_t i = 0; i < n; ++i) {
    modes << r_on.trace.decisions[i].t << ',' << r_on.trace.decisions[i].maneuver.mode << ','
          << r_off.trace.decisions[i].maneuver.mode << '\n';
  }
  write_text(fs::path(out_dir) / "modes.csv", modes.str());
  const nlohmann::json summary = {{"hysteresis", episode_summary(r_on)},
                                  {"no_hysteresis", episode_summary(r_off)}};
  write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  if (plots) {
    write_text(fs::path(out_dir) / "beta_ablation.svg", mode_comparison_svg(r_on.trace, r_off.trace));
    write_trace_plots(r_on.trace, out_dir, "hysteresis_");
    write_trace_plots(r_off.trace, out_dir, "no_hysteresis_");
  }
  std::cout << summary.dump(2) << '\n';
  return kOk;
}

int cmd_report(const std::string& in_dir) {
  const BatchResult b = load_records(fs::path(in_dir) / "records.jsonl");
  if (b.records.empty()) throw ConfigError(in_dir + ": no records");
  std::cout << metrics_csv(b) << '\n' << timing_csv(b);
  if (b.overall.failed > 0) std::cerr << "warning: " << b.overall.failed << " failed episodes excluded\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanegate: highway lane and speed decision engine"};
  app.require_subcommand(1);

  std::string config, out_dir, families, in_dir;
  bool plots = false;
  int trials = 25;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  CLI::App* run = app.add_subcommand("run", "Simulate one episode");
  run->add_option("config", config, "Scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "Directory for trace.jsonl, summary.json and plots");
  run->add_flag("--plots", plots, "Write SVG plots (needs --out)");

  CLI::App* batch = app.add_subcommand("batch", "Randomized batch over scenario families");
  batch->add_option("--families", families, "Batch spec (JSON)")->required();
  batch->add_option("--trials", trials, "Trials per family")->check(CLI::PositiveNumber);
  batch->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  batch->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Same scenario with hysteresis on and off");
  ablate->add_option("--config", config, "Scenario config (JSON)")->required();
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_flag("--plots", plots, "Write SVG plots");

  CLI::App* report = app.add_subcommand("report", "Recompute metrics from a batch directory");
  report->add_option("--in", in_dir, "Batch output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigFailure;
  }

  try {
    if (*run) return cmd_run(config, out_dir, plots);
    if (*batch) return cmd_batch(families, trials, workers, out_dir);
    if (*ablate) return cmd_ablate(config, out_dir, plots);
    if (*report) return cmd_report(in_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
