#include "bevodo/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bevodo {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(const char* f, double a, double b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace

std::string trajectory_svg(const std::vector<std::pair<std::string, Trajectory>>& tracks) {
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const auto& [name, t] : tracks) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto p = t.position(i);
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  }
  if (!(xmax >= xmin)) xmin = ymin = 0.0, xmax = ymax = 1.0;
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-6});
  const double size = 600.0, margin = 30.0;
  const double k = (size - 2 * margin) / span;
  // Map world x to the right and world y up.
  auto px = [&](double x) { return margin + (x - xmin) * k; };
  auto py = [&](double y) { return size - margin - (y - ymin) * k; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"" << size + 20 * tracks.size()
    << "\" viewBox=\"0 0 600 " << size + 20 * tracks.size() << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t n = 0; n < tracks.size(); ++n) {
    const auto& t = tracks[n].second;
    s << "<polyline fill=\"none\" stroke=\"" << kColors[n % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) {
      s << fmt("%.2f,%.2f ", px(t.position(i).x()), py(t.position(i).y()));
    }
    s << "\"/>\n";
    s << "<text x=\"" << margin << "\" y=\"" << size + 15 + 20 * n << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
      << kColors[n % 6] << "\">" << tracks[n].first << "</text>\n";
  }
  char scale[96];
  std::snprintf(scale, sizeof scale, "extent %.1f m", span);
  s << "<text x=\"" << size - 140 << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">" << scale << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::vector<MatchRow> read_match_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open match file " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "block_id,cand_row,cand_col,match_row,match_col,score") {
    throw std::runtime_error("unexpected header in " + path.string());
  }
  std::vector<MatchRow> rows;
  std::size_t n = 1;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    MatchRow r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &r.block, &r.cand_row, &r.cand_col, &r.match_row,
                    &r.match_col, &r.score) != 6) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": malformed match row");
    }
    rows.push_back(r);
  }
  return rows;
}

std::string match_svg(const std::vector<MatchRow>& rows, std::size_t grid_h, std::size_t grid_w, double threshold) {
  const double cell = 12.0, gap = 40.0, margin = 20.0;
  const double pw = cell * static_cast<double>(grid_w), ph = cell * static_cast<double>(grid_h);
  double best = 0.0;
  for (const auto& r : rows) best = std::max(best, r.score);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * pw + gap + 2 * margin << "\" height=\""
    << ph + 2 * margin + 20 << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int panel = 0; panel < 2; ++panel) {
    const double ox = margin + panel * (pw + gap);
    s << "<rect x=\"" << ox << "\" y=\"" << margin << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"#f4f4f4\" stroke=\"#888\"/>\n";
  }
  // Row grows toward vehicle-forward, drawn upward; column toward the left, drawn leftward.
  auto at = [&](int panel, double row, double col) {
    const double ox = margin + panel * (pw + gap);
    return std::make_pair(ox + pw - (col + 0.5) * cell, margin + ph - (row + 0.5) * cell);
  };
  std::size_t drawn = 0;
  for (const auto& r : rows) {
    if (best <= 0.0 || r.score < threshold * best) continue;
    const auto [x1, y1] = at(0, r.cand_row, r.cand_col);
    const auto [x2, y2] = at(1, r.match_row, r.match_col);
    const double opacity = 0.3 + 0.7 * r.score / best;
    s << fmt("<line x1=\"%.2f\" y1=\"%.2f\" ", x1, y1) << fmt("x2=\"%.2f\" y2=\"%.2f\" ", x2, y2)
      << fmt("stroke=\"#d62728\" stroke-opacity=\"%.3f\" stroke-width=\"%.1f\"/>\n", opacity, 1.0);
    s << fmt("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"#1f77b4\"/>\n", x1, y1);
    s << fmt("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"#2ca02c\"/>\n", x2, y2);
    ++drawn;
  }
  s << "<text x=\"" << margin << "\" y=\"" << ph + 2 * margin + 10
    << "\" font-family=\"sans-serif\" font-size=\"12\">" << drawn << " of " << rows.size()
    << " matches shown (score threshold " << threshold << " of max)</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace bevodo
