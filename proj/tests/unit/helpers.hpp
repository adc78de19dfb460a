#pragma once

#include <cmath>
#include <random>

#include "boostdepth/geometry.hpp"
#include "boostdepth/grid.hpp"

namespace testutil {

inline boostdepth::ImageBuffer random_image(int w, int h, int ch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  boostdepth::ImageBuffer img(w, h, ch);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

/// Smooth, band-limited test texture in [0, 1].
inline boostdepth::ImageBuffer smooth_image(int w, int h) {
  boostdepth::ImageBuffer img(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img(x, y) = 0.5 + 0.25 * std::sin(0.31 * x + 0.17 * y) + 0.2 * std::cos(0.23 * y - 0.11 * x);
    }
  }
  return img;
}

inline boostdepth::Intrinsics camera(int w, int h, double f) {
  return {f, f, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
}

}  // namespace testutil
