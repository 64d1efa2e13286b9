#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bimgame/image_io.hpp"

// Minimal PNG charts: axes with tick labels, line/point series and a legend.
namespace bimgame::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
  bool points = false;  // markers instead of a polyline
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 900;
  int height = 560;
};

// Distinct colors for series index i.
std::array<std::uint8_t, 3> palette(std::size_t i);

void write_line_chart(const std::string& path, const Chart& chart,
                      const std::vector<Series>& series);

struct Bar {
  double lo = 0.0;
  double hi = 0.0;
  double value = 0.0;
};

void write_bar_chart(const std::string& path, const Chart& chart, const std::vector<Bar>& bars);

// Text in a 5x7 bitmap font, upper-cased; `scale` multiplies the glyph size.
void draw_text(RgbImage& img, int x, int y, const std::string& text,
               std::array<std::uint8_t, 3> color, int scale = 1);
int text_width(const std::string& text, int scale = 1);

}  // namespace bimgame::plot
