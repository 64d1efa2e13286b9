#include "bimgame/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "bimgame/error.hpp"

namespace bimgame::plot {

namespace {

using Glyph = std::array<std::uint8_t, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
  };
  return f;
}

struct Frame {
  int left = 70, right = 20, top = 40, bottom = 50;
  double x0, x1, y0, y1;
  int w, h;

  int px(double x) const {
    return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (w - left - right)));
  }
  int py(double y) const {
    return h - bottom - static_cast<int>(std::lround((y - y0) / (y1 - y0) * (h - top - bottom)));
  }
};

std::string tick_label(double v) {
  char buf[32];
  const double a = std::abs(v);
  if (a != 0 && (a >= 1e5 || a < 1e-3))
    std::snprintf(buf, sizeof buf, "%.1e", v);
  else
    std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// Rounded tick spacing giving roughly `n` intervals.
double nice_step(double span, int n) {
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= raw) return m * mag;
  return 10 * mag;
}

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
}

void draw_frame(RgbImage& img, const Frame& f, const Chart& chart) {
  const std::array<std::uint8_t, 3> ink{0, 0, 0}, grid{225, 225, 225};
  const double xs = nice_step(f.x1 - f.x0, 6), ys = nice_step(f.y1 - f.y0, 5);
  for (double v = std::ceil(f.x0 / xs) * xs; v <= f.x1 + 1e-9 * xs; v += xs) {
    const int x = f.px(v);
    img.line(x, f.top, x, f.h - f.bottom, grid[0], grid[1], grid[2]);
    const std::string s = tick_label(std::abs(v) < 1e-12 * xs ? 0.0 : v);
    draw_text(img, x - text_width(s) / 2, f.h - f.bottom + 6, s, ink);
  }
  for (double v = std::ceil(f.y0 / ys) * ys; v <= f.y1 + 1e-9 * ys; v += ys) {
    const int y = f.py(v);
    img.line(f.left, y, f.w - f.right, y, grid[0], grid[1], grid[2]);
    const std::string s = tick_label(std::abs(v) < 1e-12 * ys ? 0.0 : v);
    draw_text(img, f.left - 6 - text_width(s), y - 3, s, ink);
  }
  img.line(f.left, f.h - f.bottom, f.w - f.right, f.h - f.bottom, 0, 0, 0);
  img.line(f.left, f.top, f.left, f.h - f.bottom, 0, 0, 0);
  draw_text(img, (f.w - text_width(chart.title, 2)) / 2, 10, chart.title, ink, 2);
  draw_text(img, (f.w - text_width(chart.x_label)) / 2, f.h - 18, chart.x_label, ink);
  draw_text(img, 4, f.top - 14, chart.y_label, ink);
}

}  // namespace

int text_width(const std::string& text, int scale) {
  return static_cast<int>(text.size()) * 6 * scale;
}

void draw_text(RgbImage& img, int x, int y, const std::string& text,
               std::array<std::uint8_t, 3> color, int scale) {
  const auto& f = font();
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto it = f.find(static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
    if (it == f.end()) continue;
    const int gx = x + static_cast<int>(i) * 6 * scale;
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col)
        if (it->second[static_cast<std::size_t>(row)] & (0x10 >> col))
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx)
              img.set(gx + col * scale + dx, y + row * scale + dy, color[0], color[1], color[2]);
  }
}

std::array<std::uint8_t, 3> palette(std::size_t i) {
  static const std::array<std::array<std::uint8_t, 3>, 8> p = {{{31, 119, 180},
                                                                {255, 127, 14},
                                                                {44, 160, 44},
                                                                {214, 39, 40},
                                                                {148, 103, 189},
                                                                {140, 86, 75},
                                                                {227, 119, 194},
                                                                {127, 127, 127}}};
  return p[i % p.size()];
}

void write_line_chart(const std::string& path, const Chart& chart,
                      const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series " + s.label + ": x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  pad_range(x0, x1);
  pad_range(y0, y1);
  const double ypad = 0.05 * (y1 - y0);
  RgbImage img(chart.width, chart.height);
  Frame f;
  f.x0 = x0;
  f.x1 = x1;
  f.y0 = y0 - ypad;
  f.y1 = y1 + ypad;
  f.w = chart.width;
  f.h = chart.height;
  draw_frame(img, f, chart);
  for (const auto& s : series) {
    const auto& c = s.color;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const int x = f.px(s.x[i]), y = f.py(s.y[i]);
      if (s.points) {
        for (int d = -2; d <= 2; ++d) {
          img.line(x - 2, y + d, x + 2, y + d, c[0], c[1], c[2]);
        }
      } else if (i > 0 && std::isfinite(s.x[i - 1]) && std::isfinite(s.y[i - 1])) {
        img.line(f.px(s.x[i - 1]), f.py(s.y[i - 1]), x, y, c[0], c[1], c[2]);
      }
    }
  }
  // Legend, top-left inside the axes.
  int ly = f.top + 8;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    for (int d = 0; d < 7; ++d)
      img.line(f.left + 10, ly + d, f.left + 24, ly + d, s.color[0], s.color[1], s.color[2]);
    draw_text(img, f.left + 30, ly, s.label, {0, 0, 0});
    ly += 12;
  }
  write_png_rgb(path, img);
}

void write_bar_chart(const std::string& path, const Chart& chart, const std::vector<Bar>& bars) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0.0;
  for (const auto& b : bars) {
    x0 = std::min(x0, b.lo);
    x1 = std::max(x1, b.hi);
    y1 = std::max(y1, b.value);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  pad_range(x0, x1);
  if (y1 <= 0) y1 = 1;
  RgbImage img(chart.width, chart.height);
  Frame f;
  f.x0 = x0;
  f.x1 = x1;
  f.y0 = 0;
  f.y1 = y1 * 1.05;
  f.w = chart.width;
  f.h = chart.height;
  draw_frame(img, f, chart);
  const auto c = palette(0);
  for (const auto& b : bars) {
    const int xa = f.px(b.lo) + 1, xb = f.px(b.hi) - 1, ya = f.py(b.value), yb = f.py(0);
    for (int x = xa; x <= xb; ++x) img.line(x, ya, x, yb - 1, c[0], c[1], c[2]);
  }
  write_png_rgb(path, img);
}

}  // namespace bimgame::plot
