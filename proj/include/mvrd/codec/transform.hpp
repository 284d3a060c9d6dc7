#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mvrd/error.hpp"
#include "mvrd/frame.hpp"

namespace mvrd {

using Residual = Plane<int>;
using Coefficients = Plane<int>;

inline bool valid_transform_size(int n) noexcept {
  return n == 4 || n == 8 || n == 16 || n == 32 || n == 64;
}

/// Orthonormal DCT-II basis, row k = frequency k.
inline const std::vector<double>& dct_basis(int n) {
  static const std::array<std::vector<double>, 7> bases = [] {
    std::array<std::vector<double>, 7> b;
    for (int log2n = 2; log2n <= 6; ++log2n) {
      const int size = 1 << log2n;
      std::vector<double>& m = b[log2n];
      m.resize(std::size_t(size) * size);
      for (int k = 0; k < size; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / size);
        for (int i = 0; i < size; ++i) {
          m[std::size_t(k) * size + i] =
              scale * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * size));
        }
      }
    }
    return b;
  }();
  if (!valid_transform_size(n)) throw ValidationError("unsupported transform size " + std::to_string(n));
  return bases[std::countr_zero(unsigned(n))];
}

/// Y = C X C^T for a square block.
inline Plane<double> forward_dct(const Plane<double>& x) {
  const int n = x.width();
  const std::vector<double>& c = dct_basis(n);
  Plane<double> tmp(n, n), y(n, n);
  for (int k = 0; k < n; ++k)  // rows: tmp = C X
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += c[std::size_t(k) * n + i] * x(j, i);
      tmp(j, k) = s;
    }
  for (int k = 0; k < n; ++k)  // columns: Y = tmp C^T
    for (int l = 0; l < n; ++l) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += tmp(j, k) * c[std::size_t(l) * n + j];
      y(l, k) = s;
    }
  return y;
}

/// X = C^T Y C.
inline Plane<double> inverse_dct(const Plane<double>& y) {
  const int n = y.width();
  const std::vector<double>& c = dct_basis(n);
  Plane<double> tmp(n, n), x(n, n);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += c[std::size_t(k) * n + i] * y(l, k);
      tmp(l, i) = s;
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int l = 0; l < n; ++l) s += tmp(l, i) * c[std::size_t(l) * n + j];
      x(j, i) = s;
    }
  return x;
}

inline double quant_step(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

/// Round half away from zero.
inline int quantize(double coeff, double step) noexcept {
  const double q = std::floor(std::abs(coeff) / step + 0.5);
  return coeff < 0 ? -int(q) : int(q);
}

inline Coefficients transform_quantize(const Residual& residual, int qp) {
  if (residual.width() != residual.height() || !valid_transform_size(residual.width())) {
    throw ValidationError("transform block must be square with size 4..64");
  }
  const int n = residual.width();
  Plane<double> x(n, n);
  for (std::size_t i = 0; i < residual.area(); ++i) x.samples()[i] = residual.samples()[i];
  const Plane<double> y = forward_dct(x);
  const double step = quant_step(qp);
  Coefficients out(n, n);
  for (std::size_t i = 0; i < out.area(); ++i) out.samples()[i] = quantize(y.samples()[i], step);
  return out;
}

/// Dequantised, inverse-transformed residual (not yet rounded).
inline Plane<double> dequantize_inverse(const Coefficients& levels, int qp) {
  const int n = levels.width();
  const double step = quant_step(qp);
  Plane<double> y(n, n);
  for (std::size_t i = 0; i < y.area(); ++i) y.samples()[i] = levels.samples()[i] * step;
  return inverse_dct(y);
}

/// prediction + residual, rounded and clipped to 8 bits.
inline Block reconstruct(const Block& pred, const Plane<double>& residual) {
  Block out(pred.width(), pred.height());
  for (std::size_t i = 0; i < out.area(); ++i) {
    const double v = std::round(double(pred.samples()[i]) + residual.samples()[i]);
    out.samples()[i] = std::uint8_t(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

inline Residual residual_of(const Block& orig, const Block& pred) {
  Residual r(orig.width(), orig.height());
  for (std::size_t i = 0; i < r.area(); ++i) {
    r.samples()[i] = int(orig.samples()[i]) - int(pred.samples()[i]);
  }
  return r;
}

}  // namespace mvrd
