#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lanegate/eval.hpp"
#include "lanegate/sim.hpp"

namespace lanegate {

/// Minimal line-chart writer for trace diagnostics.
class SvgChart {
 public:
  SvgChart(std::string title, std::string x_label, std::string y_label, double width = 800,
           double height = 360)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)),
        width_(width), height_(height) {}

  void add_series(std::string name, std::string color, std::vector<std::pair<double, double>> pts,
                  bool step = false) {
    for (const auto& [x, y] : pts) extend(x, y);
    series_.push_back({std::move(name), std::move(color), std::move(pts), step});
  }

  void add_band(double x0, double x1, std::string color) {
    bands_.push_back({x0, x1, std::move(color)});
  }

  void set_y_range(double lo, double hi) {
    y_lo_ = lo;
    y_hi_ = hi;
    fixed_y_ = true;
  }

  std::string str() const {
    std::ostringstream os;
    const double l = 60, r = 140, t = 30, b = 40;
    const double pw = width_ - l - r, ph = height_ - t - b;
    const double xlo = x_lo_, xhi = x_hi_ > x_lo_ ? x_hi_ : x_lo_ + 1;
    const double ylo = y_lo_, yhi = y_hi_ > y_lo_ ? y_hi_ : y_lo_ + 1;
    auto px = [&](double x) { return l + (x - xlo) / (xhi - xlo) * pw; };
    auto py = [&](double y) { return t + ph - (y - ylo) / (yhi - ylo) * ph; };
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
       << height_ << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const Band& bd : bands_) {
      os << "<rect x=\"" << px(bd.x0) << "\" y=\"" << t << "\" width=\""
         << std::max(0.0, px(bd.x1) - px(bd.x0)) << "\" height=\"" << ph << "\" fill=\""
         << bd.color << "\" fill-opacity=\"0.35\"/>\n";
    }
    os << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << l + pw / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
       << title_ << "</text>\n";
    os << "<text x=\"" << l + pw / 2 << "\" y=\"" << height_ - 8 << "\" text-anchor=\"middle\">"
       << x_label_ << "</text>\n";
    os << "<text x=\"14\" y=\"" << t + ph / 2 << "\" transform=\"rotate(-90 14 " << t + ph / 2
       << ")\" text-anchor=\"middle\">" << y_label_ << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
      const double xv = xlo + (xhi - xlo) * i / 4.0;
      const double yv = ylo + (yhi - ylo) * i / 4.0;
      os << "<text x=\"" << px(xv) << "\" y=\"" << t + ph + 14 << "\" text-anchor=\"middle\">"
         << num(xv) << "</text>\n";
      os << "<text x=\"" << l - 4 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv)
         << "</text>\n";
    }
    int legend = 0;
    for (const Series& s : series_) {
      if (s.points.empty()) continue;
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i) {
        if (s.step && i > 0) os << px(s.points[i].first) << ',' << py(s.points[i - 1].second) << ' ';
        os << px(s.points[i].first) << ',' << py(s.points[i].second) << ' ';
      }
      os << "\"/>\n";
      if (!s.name.empty()) {
        const double ly = t + 12 + 14 * legend++;
        os << "<line x1=\"" << l + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << l + pw + 28
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << l + pw + 32 << "\" y=\"" << ly << "\">" << s.name << "</text>\n";
      }
    }
    os << "</svg>\n";
    return os.str();
  }

 private:
  struct Series {
    std::string name;
    std::string color;
    std::vector<std::pair<double, double>> points;
    bool step;
  };
  struct Band {
    double x0, x1;
    std::string color;
  };

  void extend(double x, double y) {
    x_lo_ = std::min(x_lo_, x);
    x_hi_ = std::max(x_hi_, x);
    if (!fixed_y_) {
      y_lo_ = std::min(y_lo_, y);
      y_hi_ = std::max(y_hi_, y);
    }
  }
  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }

  std::string title_, x_label_, y_label_;
  double width_, height_;
  double x_lo_ = std::numeric_limits<double>::infinity();
  double x_hi_ = -std::numeric_limits<double>::infinity();
  double y_lo_ = std::numeric_limits<double>::infinity();
  double y_hi_ = -std::numeric_limits<double>::infinity();
  bool fixed_y_ = false;
  std::vector<Series> series_;
  std::vector<Band> bands_;
};

inline std::string vehicle_color(int id) {
  static const std::array<const char*, 10> palette{"#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
                                                   "#e6550d", "#17becf", "#8c564b", "#e377c2",
                                                   "#7f7f7f", "#bcbd22"};
  return id == 0 ? "#d62728" : palette[static_cast<std::size_t>(id - 1) % palette.size()];
}

inline std::string vehicle_name(int id) { return id == 0 ? "EV" : "SV" + std::to_string(id); }

/// Position over time, one chart per lane. A vehicle is drawn in the lane
/// nearest to its lateral position.
inline std::vector<std::string> position_time_svgs(const TraceRecord& t) {
  const LaneGeometry geom{t.lane_count, 4.0};
  std::vector<std::string> out;
  for (int lane = 1; lane <= t.lane_count; ++lane) {
    SvgChart chart("Lane " + std::to_string(lane) + ": position vs time", "t [s]", "x [m]");
    std::map<int, std::vector<std::pair<double, double>>> segs;
    std::map<int, int> seg_index;
    for (const StateRecord& s : t.states) {
      for (const VehicleRecord& v : s.vehicles) {
        const bool here = geom.nearest_lane(v.state.y) == lane;
        if (here) {
          segs[v.id].push_back({s.t, v.state.x});
        } else if (!segs[v.id].empty()) {
          chart.add_series(seg_index[v.id]++ == 0 ? vehicle_name(v.id) : "", vehicle_color(v.id),
                           std::move(segs[v.id]));
          segs[v.id].clear();
        }
      }
    }
    for (auto& [id, pts] : segs) {
      if (!pts.empty()) chart.add_series(seg_index[id]++ == 0 ? vehicle_name(id) : "", vehicle_color(id), std::move(pts));
    }
    out.push_back(chart.str());
  }
  return out;
}

/// Speeds of all vehicles with the EV's corrective intervals shaded.
inline std::string velocity_svg(const TraceRecord& t) {
  SvgChart chart("Velocity (shaded: corrective mode active)", "t [s]", "v [m/s]");
  for (std::size_t i = 0; i < t.decisions.size(); ++i) {
    if (t.decisions[i].corrective_ids.empty()) continue;
    const double t1 = i + 1 < t.decisions.size() ? t.decisions[i + 1].t : t.decisions[i].t + t.dt_high;
    chart.add_band(t.decisions[i].t, t1, "#ffd54f");
  }
  std::map<int, std::vector<std::pair<double, double>>> series;
  for (const StateRecord& s : t.states) {
    for (const VehicleRecord& v : s.vehicles) series[v.id].push_back({s.t, v.state.v});
  }
  for (auto& [id, pts] : series) chart.add_series(vehicle_name(id), vehicle_color(id), std::move(pts));
  return chart.str();
}

inline std::vector<std::pair<double, double>> mode_series(const TraceRecord& t) {
  std::vector<std::pair<double, double>> pts;
  for (const DecisionRecord& d : t.decisions) pts.push_back({d.t, static_cast<double>(d.maneuver.mode)});
  return pts;
}

inline std::string mode_comparison_svg(const TraceRecord& with, const TraceRecord& without) {
  SvgChart chart("EV longitudinal mode", "t [s]", "mode");
  chart.set_y_range(-1.2, 1.2);
  chart.add_series("no hysteresis", "#1f77b4", mode_series(without), true);
  chart.add_series("hysteresis", "#d62728", mode_series(with), true);
  return chart.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline void write_trace_plots(const TraceRecord& t, const std::filesystem::path& dir,
                              const std::string& prefix = "") {
  std::filesystem::create_directories(dir);
  const auto lanes = position_time_svgs(t);
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    write_text(dir / (prefix + "position_lane" + std::to_string(i + 1) + ".svg"), lanes[i]);
  }
  write_text(dir / (prefix + "velocity.svg"), velocity_svg(t));
}

/// Batch outputs: metrics.csv, timing.csv and records.jsonl.
inline void emit_report(const BatchResult& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.csv", metrics_csv(b));
  write_text(dir / "timing.csv", timing_csv(b));
  std::ostringstream os;
  for (const TrialRecord& r : b.records) os << to_json(r, b.families[r.family]).dump() << '\n';
  write_text(dir / "records.jsonl", os.str());
}

}  // namespace lanegate
