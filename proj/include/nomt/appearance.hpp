#pragma once

// Two-level pyramid of CIELAB a*/b* colour histograms and the intersection
// kernel used for appearance consistency.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nomt/core.hpp"

namespace nomt {

/// 8-bit interleaved RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  const std::uint8_t* pixel(int x, int y) const { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
  std::uint8_t* pixel(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// sRGB (8-bit) to CIELAB under D65.
inline Lab srgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  auto linear = [](std::uint8_t c) {
    const double v = c / 255.0;
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  };
  const double r = linear(r8), g = linear(g8), b = linear(b8);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  // D65 white as the image of RGB (1, 1, 1), so neutral greys get a* = b* = 0.
  constexpr double xn = 0.4124564 + 0.3575761 + 0.1804375;
  constexpr double yn = 0.2126729 + 0.7151522 + 0.0721750;
  constexpr double zn = 0.0193339 + 0.1191920 + 0.9503041;
  auto f = [](double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Histogram layout: 4 a* bins x 4 b* bins for the whole box, followed by the
/// same 16 bins for each cell of a 3x3 grid. Each layer sums to one.
struct ColorHistogram {
  static constexpr int kChannelBins = 4;
  static constexpr int kCellBins = kChannelBins * kChannelBins;  // 16
  static constexpr int kGrid = 3;
  static constexpr int kSize = kCellBins * (1 + kGrid * kGrid);  // 160

  std::array<double, kSize> bins{};

  double layer_sum(int layer) const {
    const int begin = layer == 0 ? 0 : kCellBins;
    const int end = layer == 0 ? kCellBins : kSize;
    double s = 0.0;
    for (int k = begin; k < end; ++k) s += bins[k];
    return s;
  }

  /// Rescales each layer to unit mass (layers with no mass are left at zero).
  void normalize() {
    for (int layer = 0; layer < 2; ++layer) {
      const double s = layer_sum(layer);
      if (s <= 0.0) continue;
      const int begin = layer == 0 ? 0 : kCellBins;
      const int end = layer == 0 ? kCellBins : kSize;
      for (int k = begin; k < end; ++k) bins[k] /= s;
    }
  }

  friend bool operator==(const ColorHistogram&, const ColorHistogram&) = default;
};

using HistogramTable = std::unordered_map<int, ColorHistogram>;  // detection id -> histogram

/// Quantises a* or b* in [-128, 127] into four equal bins. Values within
/// rounding noise of an edge go to the upper bin, so a* = 0 is bin 2.
inline int ab_bin(double v) {
  const int b = static_cast<int>(std::floor((v + 128.0) / 64.0 + 1e-9));
  return std::clamp(b, 0, ColorHistogram::kChannelBins - 1);
}

inline ColorHistogram histogram(const RgbImage& image, const BoundingBox& box) {
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.y)));
  const int x1 = std::min(image.width, static_cast<int>(std::ceil(box.right())));
  const int y1 = std::min(image.height, static_cast<int>(std::ceil(box.bottom())));
  if (x0 >= x1 || y0 >= y1) throw InputError("histogram: box does not cover any image pixel");

  ColorHistogram h;
  for (int y = y0; y < y1; ++y) {
    const int cy = std::clamp(static_cast<int>(std::floor(3.0 * (y - box.y) / box.h)), 0, 2);
    for (int x = x0; x < x1; ++x) {
      const int cx = std::clamp(static_cast<int>(std::floor(3.0 * (x - box.x) / box.w)), 0, 2);
      const auto* p = image.pixel(x, y);
      const Lab lab = srgb_to_lab(p[0], p[1], p[2]);
      const int ab = ab_bin(lab.a) * ColorHistogram::kChannelBins + ab_bin(lab.b);
      h.bins[ab] += 1.0;
      h.bins[ColorHistogram::kCellBins * (1 + cx + 3 * cy) + ab] += 1.0;
    }
  }
  h.normalize();
  return h;
}

/// Sum of elementwise minima; in [0, 2] for normalised histograms.
inline double intersection_kernel(const ColorHistogram& a, const ColorHistogram& b) {
  double s = 0.0;
  for (int k = 0; k < ColorHistogram::kSize; ++k) s += std::min(a.bins[k], b.bins[k]);
  return s;
}

/// Kernel rescaled to [0, 1], the form used against the appearance margin.
inline double normalized_kernel(const ColorHistogram& a, const ColorHistogram& b) {
  return 0.5 * intersection_kernel(a, b);
}

// ---------------------------------------------------------------------------
// Binary PPM (P6) images.

inline RgbImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path);
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (next_token() != "P6") throw InputError(path + ": not a binary PPM (P6)");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255) throw InputError(path + ": unsupported PPM header");
  RgbImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) throw InputError(path + ": truncated PPM");
  return img;
}

inline void write_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image " + path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

}  // namespace nomt
