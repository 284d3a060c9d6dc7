#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "mvrd/frame.hpp"

namespace mvrd {

using Block8x8 = std::array<std::array<int, 8>, 8>;

namespace detail {

// In-place order-8 Walsh-Hadamard butterfly in natural (Sylvester) order.
inline void fwht8(int* v, int stride) noexcept {
  for (int len = 1; len < 8; len <<= 1) {
    for (int i = 0; i < 8; i += len << 1) {
      for (int j = i; j < i + len; ++j) {
        const int a = v[j * stride];
        const int b = v[(j + len) * stride];
        v[j * stride] = a + b;
        v[(j + len) * stride] = a - b;
      }
    }
  }
}

}  // namespace detail

/// Unscaled 2-D Hadamard transform H * X * H^T with the Sylvester H8.
inline Block8x8 hadamard8(const Block8x8& block) noexcept {
  Block8x8 c = block;
  for (auto& row : c) detail::fwht8(row.data(), 1);
  for (int col = 0; col < 8; ++col) detail::fwht8(&c[0][col], 8);
  return c;
}

/// Sum of absolute Hadamard coefficients without the DC term, divided by 8.
inline double block_satd(const Block8x8& block) noexcept {
  const Block8x8 c = hadamard8(block);
  long long sum = 0;
  for (const auto& row : c)
    for (int v : row) sum += std::abs(v);
  sum -= std::abs(c[0][0]);
  return double(sum) / 8.0;
}

/// SATD of a CTU, tiled in 8x8 blocks; partial border tiles are edge-replicated.
inline double ctu_satd(const Frame& frame, const BlockRegion& ctu) {
  double total = 0.0;
  for (int ty = ctu.y; ty < ctu.bottom(); ty += 8) {
    for (int tx = ctu.x; tx < ctu.right(); tx += 8) {
      Block8x8 tile{};
      const bool whole = tx + 8 <= frame.width() && ty + 8 <= frame.height();
      for (int y = 0; y < 8; ++y) {
        const int sy = whole ? ty + y : std::min(ty + y, frame.height() - 1);
        for (int x = 0; x < 8; ++x) {
          const int sx = whole ? tx + x : std::min(tx + x, frame.width() - 1);
          tile[y][x] = frame(sx, sy);
        }
      }
      total += block_satd(tile);
    }
  }
  return total;
}

/// Per-CTU texture complexity from the pre-analysis pass.
struct SatdReport {
  std::vector<double> per_ctu;

  double total() const noexcept {
    double s = 0.0;
    for (double v : per_ctu) s += v;
    return s;
  }
};

inline SatdReport analyze_satd(const Frame& frame, const CtuGrid& grid) {
  SatdReport report;
  report.per_ctu.reserve(grid.count());
  for (int k = 0; k < grid.count(); ++k) report.per_ctu.push_back(ctu_satd(frame, grid.region(k)));
  return report;
}

}  // namespace mvrd
