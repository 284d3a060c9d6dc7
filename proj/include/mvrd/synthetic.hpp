#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvrd/frame.hpp"
#include "mvrd/roim.hpp"

namespace mvrd::synthetic {

/// Fractal value noise in [0, 1): octaves of bilinearly interpolated lattices.
inline Plane<double> value_noise(int width, int height, std::uint64_t seed, int base_cell, int octaves) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane<double> acc(width, height, 0.0);
  double amp = 1.0, total = 0.0;
  int cell = std::max(base_cell, 1);
  for (int o = 0; o < octaves; ++o) {
    const int gw = width / cell + 2, gh = height / cell + 2;
    std::vector<double> lattice(std::size_t(gw) * gh);
    for (double& v : lattice) v = u(rng);
    for (int y = 0; y < height; ++y) {
      const double fy = double(y) / cell;
      const int y0 = int(fy);
      const double ty = fy - y0;
      for (int x = 0; x < width; ++x) {
        const double fx = double(x) / cell;
        const int x0 = int(fx);
        const double tx = fx - x0;
        auto at = [&](int xx, int yy) { return lattice[std::size_t(yy) * gw + xx]; };
        const double top = at(x0, y0) * (1 - tx) + at(x0 + 1, y0) * tx;
        const double bot = at(x0, y0 + 1) * (1 - tx) + at(x0 + 1, y0 + 1) * tx;
        acc(x, y) += amp * (top * (1 - ty) + bot * ty);
      }
    }
    total += amp;
    amp *= 0.5;
    cell = std::max(cell / 2, 1);
  }
  for (double& v : acc.samples()) v /= total;
  return acc;
}

inline std::uint8_t to_sample(double v) {
  return std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
}

/// Textured background with a centred elliptical object; the returned box
/// is the object's bounding box.
struct SceneWithObject {
  Frame frame;
  Box object;
};

inline SceneWithObject centred_object_scene(int width, int height, std::uint64_t seed,
                                            double object_fraction = 0.4) {
  const Plane<double> bg = value_noise(width, height, seed, 32, 5);
  const Plane<double> fg = value_noise(width, height, seed ^ 0x9e3779b97f4a7c15ULL, 8, 4);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double ow = width * object_fraction * (0.85 + 0.3 * u(rng));
  const double oh = height * object_fraction * (0.85 + 0.3 * u(rng));
  const double cx = width / 2.0, cy = height / 2.0;
  const double bg_level = 60 + 80 * u(rng), fg_level = 120 + 80 * u(rng);
  Frame f(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = (x + 0.5 - cx) / (ow / 2), dy = (y + 0.5 - cy) / (oh / 2);
      const bool inside = dx * dx + dy * dy <= 1.0;
      const double v = inside ? fg_level + 90 * (fg(x, y) - 0.5) + 25 * std::sin(x * 0.35) * std::cos(y * 0.3)
                              : bg_level + 70 * (bg(x, y) - 0.5);
      f(x, y) = to_sample(v);
    }
  }
  Box box;
  box.x = int(std::floor(cx - ow / 2));
  box.y = int(std::floor(cy - oh / 2));
  box.w = int(std::ceil(cx + ow / 2)) - box.x;
  box.h = int(std::ceil(cy + oh / 2)) - box.y;
  return {std::move(f), box};
}

/// Varied deterministic test pictures: smooth gradients, fractal textures,
/// geometric shapes, stripes and mixed scenes.
inline Frame corpus_image(int index, int width = 256, int height = 256) {
  const std::uint64_t seed = 1000 + std::uint64_t(index) * 7919;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Frame f(width, height);
  const Plane<double> coarse = value_noise(width, height, seed, 64, 3);
  const Plane<double> fine = value_noise(width, height, seed + 1, 16, 4);
  switch (index % 5) {
    case 0:  // sky-like gradient with rolling hills
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double horizon = height * (0.55 + 0.15 * (coarse(x, 0) - 0.5) * 2);
          f(x, y) = to_sample(y < horizon ? 200 - 80.0 * y / height + 10 * coarse(x, y)
                                          : 70 + 90 * fine(x, y));
        }
      break;
    case 1:  // cloud texture
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) f(x, y) = to_sample(30 + 200 * (0.6 * coarse(x, y) + 0.4 * fine(x, y)));
      break;
    case 2: {  // geometric shapes on a gradient
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) f(x, y) = to_sample(50 + 120.0 * (x + y) / (width + height));
      for (int s = 0; s < 6; ++s) {
        const int cx = int(u(rng) * width), cy = int(u(rng) * height);
        const int r = 10 + int(u(rng) * width / 6);
        const double level = 255 * u(rng);
        for (int y = std::max(0, cy - r); y < std::min(height, cy + r); ++y)
          for (int x = std::max(0, cx - r); x < std::min(width, cx + r); ++x)
            if (s % 2 == 0 || (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r) f(x, y) = to_sample(level);
      }
      break;
    }
    case 3: {  // oriented stripes with texture
      const double angle = u(rng) * 3.14159, period = 6 + 14 * u(rng);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double t = (x * std::cos(angle) + y * std::sin(angle)) / period;
          f(x, y) = to_sample(128 + 70 * std::sin(t * 6.2832) * coarse(x, y) + 30 * (fine(x, y) - 0.5));
        }
      break;
    }
    default: {  // object scene
      SceneWithObject s = centred_object_scene(width, height, seed);
      f = std::move(s.frame);
      break;
    }
  }
  return f;
}

}  // namespace mvrd::synthetic
