#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fallpred/classifier.hpp"
#include "fallpred/predictor.hpp"

namespace fallpred {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Metric tables

namespace detail {

inline std::string percent(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

}  // namespace detail

/// Rows in the `Acc. Prec. Rec. F1` layout, one per named model, followed by
/// the same rows with prejudged-unknown frames left out.
inline void write_metrics_table(std::ostream& os, const std::vector<std::pair<std::string, Metrics>>& rows) {
  const std::string known_suffix = " (known only)";
  std::size_t name_width = 5;
  for (const auto& [name, m] : rows) name_width = std::max(name_width, name.size() + known_suffix.size());
  auto line = [&](const std::string& name, const MetricRow& r, const std::string& tail) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "| %-*s | %6s | %6s | %6s | %6s | %s |\n", static_cast<int>(name_width),
                  name.c_str(), detail::percent(r.accuracy).c_str(), detail::percent(r.precision).c_str(),
                  detail::percent(r.recall).c_str(), detail::percent(r.f1).c_str(), tail.c_str());
    os << buf;
  };
  auto header = [&](const char* last) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "| %-*s | %6s | %6s | %6s | %6s | %s |\n", static_cast<int>(name_width), "Model",
                  "Acc.", "Prec.", "Rec.", "F1", last);
    os << buf << "|" << std::string(name_width + 2, '-') << "|--------|--------|--------|--------|"
       << std::string(std::string(last).size() + 2, '-') << "|\n";
  };
  header("Unknown");
  for (const auto& [name, m] : rows) line(name, m.all, detail::percent(m.unknown_rate));
  os << '\n';
  header("Frames");
  for (const auto& [name, m] : rows) line(name + known_suffix, m.known, std::to_string(m.known.total()));
}

inline nlohmann::json to_json(const MetricRow& r) {
  return {{"tp", r.tp},           {"fp", r.fp},        {"fn", r.fn},         {"tn", r.tn},
          {"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"all", to_json(m.all)}, {"known", to_json(m.known)}, {"unknown", m.unknown},
          {"unknown_rate", m.unknown_rate}};
}

// ---------------------------------------------------------------------------
// Loss curves and plots

inline void write_loss_table(std::ostream& os, const std::vector<LossPoint>& curve) {
  os << "epoch,step,loss\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g\n", p.epoch, p.step, p.loss);
    os << buf;
  }
}

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Static SVG line chart with linear axes.
inline std::string svg_line_plot(const std::vector<PlotSeries>& series, const std::string& title,
                                 const std::string& x_label, const std::string& y_label) {
  constexpr double W = 640, H = 420, left = 70, right = 160, top = 40, bottom = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream os;
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", left,
                top, pw, ph);
  os << buf;
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"11\">%.4g</text>\n",
                  sx(fx), top + ph + 16, fx);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">%.4g</text>\n",
                  left - 6, sy(fy) + 4, fy);
    os << buf;
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\" font-size=\"13\">"
     << x_label << "</text>\n";
  os << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << top + ph / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(x), sy(y));
      os << buf;
    }
    os << "\"/>\n";
    for (const auto& [x, y] : series[s].points) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", sx(x), sy(y), color);
      os << buf;
    }
    const double ly = top + 16 + 18.0 * static_cast<double>(s);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">",
                  left + pw + 12, ly, left + pw + 32, ly, color, left + pw + 38, ly + 4);
    os << buf << series[s].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Run manifests

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;
  std::string started_at;
  double wall_seconds = 0.0;
  nlohmann::json results = nlohmann::json::object();
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command},         {"config", m.config},           {"seeds", m.seeds},
          {"inputs", m.inputs},           {"outputs", m.outputs},         {"tool_version", m.tool_version},
          {"started_at", m.started_at},   {"wall_seconds", m.wall_seconds}, {"results", m.results}};
}

}  // namespace fallpred
