#pragma once

#include <bit>
#include <cstdint>
#include <string_view>
#include <vector>

#include "mvrd/frame.hpp"

namespace mvrd {

enum class IntraMode : std::uint8_t { dc = 0, horizontal = 1, vertical = 2, planar = 3 };

inline constexpr int kIntraModeCount = 4;
inline constexpr int kDefaultReference = 128;

inline std::string_view mode_name(IntraMode m) noexcept {
  switch (m) {
    case IntraMode::dc: return "DC";
    case IntraMode::horizontal: return "HOR";
    case IntraMode::vertical: return "VER";
    case IntraMode::planar: return "PLANAR";
  }
  return "?";
}

/// Reference samples of a square block: the row above and the column to the
/// left. Missing sides read as 128.
struct IntraReferences {
  std::vector<int> top;
  std::vector<int> left;
  bool has_top = false;
  bool has_left = false;
};

inline IntraReferences gather_references(const Frame& recon, const BlockRegion& r) {
  IntraReferences ref;
  ref.has_top = r.y > 0;
  ref.has_left = r.x > 0;
  ref.top.assign(r.w, kDefaultReference);
  ref.left.assign(r.h, kDefaultReference);
  if (ref.has_top) {
    for (int i = 0; i < r.w; ++i) ref.top[i] = recon(r.x + i, r.y - 1);
  }
  if (ref.has_left) {
    for (int j = 0; j < r.h; ++j) ref.left[j] = recon(r.x - 1, r.y + j);
  }
  return ref;
}

/// Intra prediction of a square block from already reconstructed samples.
inline Block predict_intra(const Frame& recon, const BlockRegion& r, IntraMode mode) {
  const IntraReferences ref = gather_references(recon, r);
  const int n = r.w;
  Block pred(r.w, r.h);
  switch (mode) {
    case IntraMode::dc: {
      int sum = 0, count = 0;
      if (ref.has_top) {
        for (int v : ref.top) sum += v;
        count += r.w;
      }
      if (ref.has_left) {
        for (int v : ref.left) sum += v;
        count += r.h;
      }
      const int dc = count ? (sum + count / 2) / count : kDefaultReference;
      std::fill(pred.samples().begin(), pred.samples().end(), std::uint8_t(dc));
      break;
    }
    case IntraMode::horizontal:
      for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) pred(x, y) = std::uint8_t(ref.left[y]);
      break;
    case IntraMode::vertical:
      for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) pred(x, y) = std::uint8_t(ref.top[x]);
      break;
    case IntraMode::planar: {
      const int shift = std::countr_zero(unsigned(n)) + 1;
      const int top_right = ref.top[n - 1];
      const int bottom_left = ref.left[n - 1];
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const int h = (n - 1 - x) * ref.left[y] + (x + 1) * top_right;
          const int v = (n - 1 - y) * ref.top[x] + (y + 1) * bottom_left;
          pred(x, y) = std::uint8_t((h + v + n) >> shift);
        }
      }
      break;
    }
  }
  return pred;
}

}  // namespace mvrd
