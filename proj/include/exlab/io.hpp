#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exlab/path_core.hpp"

namespace exlab::io {

inline constexpr const char* kVersion = "0.1.0";

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// '.' separator, 17 significant digits, '\n' line endings; comment lines start with '#'.
inline std::string to_csv(const Table& t, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  for (const auto& c : comments) os << "# " << c << '\n';
  for (std::size_t j = 0; j < t.header.size(); ++j) os << (j ? "," : "") << t.header[j];
  if (!t.header.empty()) os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "," : "") << fmt(r[j]);
    os << '\n';
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

inline Table read_csv(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  Table t;
  std::string line;
  bool have_header = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!have_header) {
      t.header = cells;
      have_header = true;
      continue;
    }
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(std::stod(c));
    t.rows.push_back(std::move(r));
  }
  return t;
}

// One row per path, one column per grid point.
inline Table paths_table(const std::vector<SamplePath>& paths) {
  Table t;
  if (paths.empty()) return t;
  for (std::size_t i = 0; i < paths.front().size(); ++i) t.header.push_back("t" + std::to_string(i));
  for (const auto& p : paths) t.rows.push_back(p.values);
  return t;
}

inline nlohmann::json grid_json(const TimeGrid& g) {
  return {{"t_start", g.t_start}, {"t_end", g.t_end}, {"n_points", g.n_points}};
}

// Sidecar metadata. Doubles are written with round-trip precision.
inline void write_json(const std::filesystem::path& p, nlohmann::json j) {
  j["code_version"] = kVersion;
  write_text(p, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// SVG line plot with the plotted data embedded as a comment.

struct Series {
  std::string label;
  std::vector<double> x, y;
};

inline std::string svg_plot(const std::vector<Series>& series, const std::string& title) {
  const double W = 640, H = 400, L = 60, R = 20, T = 30, B = 40;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<!-- data\n";
  for (const auto& s : series) {
    os << "series " << s.label << '\n';
    for (std::size_t i = 0; i < s.x.size(); ++i) os << fmt(s.x[i]) << ',' << fmt(s.y[i]) << '\n';
  }
  os << "-->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  char buf[64];
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + k * (x1 - x0) / 4, yv = y0 + k * (y1 - y0) / 4;
    std::snprintf(buf, sizeof buf, "%.3g", xv);
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << buf
       << "</text>\n";
    std::snprintf(buf, sizeof buf, "%.3g", yv);
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << buf
       << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = colors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
      os << buf;
    }
    os << "\"/>\n";
    os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
       << col << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace exlab::io
