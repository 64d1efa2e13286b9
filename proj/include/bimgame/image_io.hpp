#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bimgame {

// 8-bit grayscale PNG; values are clamped to [0, 1].
void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<double>& pixels);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // RGB triplets, row-major

  RgbImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
  void line(double x0, double y0, double x1, double y1, std::uint8_t r, std::uint8_t g,
            std::uint8_t b);
};

void write_png_rgb(const std::string& path, const RgbImage& image);

}  // namespace bimgame
