#include "vertexgen/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace vgen {

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0, hi = 1;
  double map(double v, double px0, double px1) const {
    double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    return px0 + t * (px1 - px0);
  }
};

Range fit_range(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

// Dark-violet to warm-yellow ramp, five stops.
std::string ramp_color(double t) {
  static const double stops[5][3] = {{38, 18, 66},
                                     {59, 82, 139},
                                     {33, 145, 140},
                                     {94, 201, 98},
                                     {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  int k = std::min(3, int(t));
  double f = t - k;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                int(std::lround(stops[k][0] + f * (stops[k + 1][0] - stops[k][0]))),
                int(std::lround(stops[k][1] + f * (stops[k + 1][1] - stops[k][1]))),
                int(std::lround(stops[k][2] + f * (stops[k + 1][2] - stops[k][2]))));
  return buf;
}

}  // namespace

const std::vector<std::string>& svg_palette() {
  static const std::vector<std::string> palette = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                                   "#911eb4", "#42d4f4", "#f032e6", "#9a6324"};
  return palette;
}

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label) {
  const double W = 640, H = 420;
  const double L = 64, R = 20, T = 40, B = 52;  // plot margins
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool any = false;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("line plot: x/y length mismatch");
    for (size_t k = 0; k < s.x.size(); ++k) {
      if (!any) {
        xlo = xhi = s.x[k];
        ylo = yhi = s.y[k];
        any = true;
      }
      xlo = std::min(xlo, s.x[k]);
      xhi = std::max(xhi, s.x[k]);
      ylo = std::min(ylo, s.y[k]);
      yhi = std::max(yhi, s.y[k]);
    }
  }
  Range xr = fit_range(xlo, xhi), yr = fit_range(ylo, yhi);

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) +
         "\" font-family=\"monospace\" font-size=\"12\">\n";
  out += "<rect width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(title) + "</text>\n";
  out += "<rect x=\"" + fmt(L) + "\" y=\"" + fmt(T) + "\" width=\"" + fmt(W - L - R) +
         "\" height=\"" + fmt(H - T - B) + "\" fill=\"none\" stroke=\"#888\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    double fx = xr.lo + (xr.hi - xr.lo) * k / 4.0;
    double fy = yr.lo + (yr.hi - yr.lo) * k / 4.0;
    double px = xr.map(fx, L, W - R);
    double py = yr.map(fy, H - B, T);
    out += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(px) + "\" y2=\"" +
           fmt(H - B + 5) + "\" stroke=\"#888\"/>\n";
    out += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(H - B + 18) + "\" text-anchor=\"middle\">" +
           fmt_tick(fx) + "</text>\n";
    out += "<line x1=\"" + fmt(L - 5) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(L) + "\" y2=\"" +
           fmt(py) + "\" stroke=\"#888\"/>\n";
    out += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(py + 4) + "\" text-anchor=\"end\">" +
           fmt_tick(fy) + "</text>\n";
  }
  out += "<text x=\"" + fmt((L + W - R) / 2) + "\" y=\"" + fmt(H - 12) +
         "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + fmt((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         fmt((T + H - B) / 2) + ")\">" + escape(y_label) + "</text>\n";

  const auto& pal = svg_palette();
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const std::string& color = pal[si % pal.size()];
    if (!s.x.empty()) {
      std::string pts;
      for (size_t k = 0; k < s.x.size(); ++k) {
        if (k) pts += ' ';
        pts += fmt(xr.map(s.x[k], L, W - R)) + "," + fmt(yr.map(s.y[k], H - B, T));
      }
      out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
      for (size_t k = 0; k < s.x.size(); ++k)
        out += "<circle cx=\"" + fmt(xr.map(s.x[k], L, W - R)) + "\" cy=\"" +
               fmt(yr.map(s.y[k], H - B, T)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    double ly = T + 16 + 16 * double(si);
    out += "<line x1=\"" + fmt(W - R - 150) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
           fmt(W - R - 126) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fmt(W - R - 120) + "\" y=\"" + fmt(ly) + "\">" + escape(s.label) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string heat_map_svg(const std::vector<double>& grid, int h, int w, const std::string& title,
                         const std::string& note) {
  if (h < 1 || w < 1 || int64_t(grid.size()) != int64_t(h) * w)
    throw std::invalid_argument("heat map: grid size mismatch");
  double vmax = 0;
  for (double v : grid) vmax = std::max(vmax, v);
  const double cell = std::min(480.0 / w, 480.0 / h);
  const double L = 40, T = 40;
  const double W = L + cell * w + 40, H = T + cell * h + (note.empty() ? 24 : 46);

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) +
         "\" font-family=\"monospace\" font-size=\"12\">\n";
  out += "<rect width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(title) + "</text>\n";
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double v = grid[size_t(r) * w + c];
      out += "<rect x=\"" + fmt(L + c * cell) + "\" y=\"" + fmt(T + r * cell) + "\" width=\"" +
             fmt(cell) + "\" height=\"" + fmt(cell) + "\" fill=\"" +
             ramp_color(vmax > 0 ? v / vmax : 0.0) + "\"/>\n";
    }
  }
  out += "<rect x=\"" + fmt(L) + "\" y=\"" + fmt(T) + "\" width=\"" + fmt(cell * w) +
         "\" height=\"" + fmt(cell * h) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (!note.empty())
    out += "<text x=\"" + fmt(L) + "\" y=\"" + fmt(T + cell * h + 18) + "\">" + escape(note) +
           "</text>\n";
  out += "</svg>\n";
  return out;
}

std::string scene_svg(const std::vector<std::vector<Vec2>>& polygons,
                      const std::vector<int>& color_ids,
                      const std::vector<OverlayChain>& overlays, const std::string& title) {
  if (polygons.size() != color_ids.size())
    throw std::invalid_argument("scene svg: polygon/color count mismatch");
  const double S = 560, T = 36;
  const double W = S + 24, H = S + T + 12;
  auto px = [&](const Vec2& p) {
    // (i, j) -> (y, x): i runs down the image.
    return fmt(12 + p.j * S) + "," + fmt(T + p.i * S);
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) +
         "\" font-family=\"monospace\" font-size=\"12\">\n";
  out += "<rect width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(title) + "</text>\n";
  out += "<rect x=\"12\" y=\"" + fmt(T) + "\" width=\"" + fmt(S) + "\" height=\"" + fmt(S) +
         "\" fill=\"#f8f8f8\" stroke=\"#444\"/>\n";

  const auto& pal = svg_palette();
  for (size_t k = 0; k < polygons.size(); ++k) {
    if (polygons[k].empty()) continue;
    std::string pts;
    for (size_t q = 0; q < polygons[k].size(); ++q) {
      if (q) pts += ' ';
      pts += px(polygons[k][q]);
    }
    out += "<polygon points=\"" + pts + "\" fill=\"" +
           pal[size_t(color_ids[k] % int(pal.size()))] +
           "\" fill-opacity=\"0.55\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  }
  for (const OverlayChain& ov : overlays) {
    if (ov.points.empty()) continue;
    std::string pts;
    for (size_t q = 0; q < ov.points.size(); ++q) {
      if (q) pts += ' ';
      pts += px(ov.points[q]);
    }
    out += std::string("<") + (ov.closed ? "polygon" : "polyline") + " points=\"" + pts +
           "\" fill=\"none\" stroke=\"" + ov.color + "\" stroke-width=\"2\" stroke-opacity=\"" +
           fmt(ov.opacity) + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace vgen
