#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mvrd/error.hpp"
#include "mvrd/frame.hpp"

namespace mvrd {

/// 10 log10(255^2 / MSE); +infinity for identical frames.
inline double psnr(const Frame& orig, const Frame& recon) {
  if (orig.width() != recon.width() || orig.height() != recon.height()) {
    throw ValidationError("PSNR operands differ in size");
  }
  long long sse = 0;
  for (std::size_t i = 0; i < orig.area(); ++i) {
    const long long d = int(orig.samples()[i]) - int(recon.samples()[i]);
    sse += d * d;
  }
  if (sse == 0) return std::numeric_limits<double>::infinity();
  const double mse = double(sse) / double(orig.area());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

/// One operating point of a rate-quality curve. Quality is any score that
/// increases with fidelity (PSNR, accuracy, mAP).
struct RdPoint {
  double rate = 0.0;
  double quality = 0.0;
};

namespace detail {

// Least-squares cubic ln(rate) = p(t), t = (quality - centre) / scale.
struct LogRateFit {
  double centre = 0.0;
  double scale = 1.0;
  Eigen::Vector4d coef = Eigen::Vector4d::Zero();

  // Integral of p over quality in [lo, hi].
  double integral(double lo, double hi) const {
    auto antiderivative = [&](double q) {
      const double t = (q - centre) / scale;
      return scale * (coef[0] * t + coef[1] * t * t / 2 + coef[2] * t * t * t / 3 +
                      coef[3] * t * t * t * t / 4);
    };
    return antiderivative(hi) - antiderivative(lo);
  }
};

inline LogRateFit fit_log_rate(const std::vector<RdPoint>& pts) {
  LogRateFit fit;
  double lo = pts.front().quality, hi = lo, sum = 0.0;
  for (const RdPoint& p : pts) {
    if (!(p.rate > 0.0)) throw ValidationError("rates must be positive");
    lo = std::min(lo, p.quality);
    hi = std::max(hi, p.quality);
    sum += p.quality;
  }
  fit.centre = sum / double(pts.size());
  fit.scale = hi > lo ? (hi - lo) / 2.0 : 1.0;
  Eigen::MatrixXd a(pts.size(), 4);
  Eigen::VectorXd b(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double t = (pts[i].quality - fit.centre) / fit.scale;
    a.row(Eigen::Index(i)) << 1.0, t, t * t, t * t * t;
    b[Eigen::Index(i)] = std::log(pts[i].rate);
  }
  fit.coef = a.colPivHouseholderQr().solve(b);
  return fit;
}

inline std::pair<double, double> quality_range(const std::vector<RdPoint>& pts) {
  auto [mn, mx] = std::minmax_element(pts.begin(), pts.end(), [](const RdPoint& x, const RdPoint& y) {
    return x.quality < y.quality;
  });
  return {mn->quality, mx->quality};
}

}  // namespace detail

/// Bjontegaard delta rate of `test` against `anchor`, in percent: the mean
/// log-rate gap of cubic fits over the shared quality interval. Negative
/// means `test` needs fewer bits for the same quality.
inline double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  if (anchor.size() < 4 || test.size() < 4) {
    throw ValidationError("BD-rate needs at least 4 points per curve");
  }
  const auto [a_lo, a_hi] = detail::quality_range(anchor);
  const auto [t_lo, t_hi] = detail::quality_range(test);
  const double lo = std::max(a_lo, t_lo);
  const double hi = std::min(a_hi, t_hi);
  if (!(hi > lo)) throw ValidationError("BD-rate curves do not overlap in quality");
  const double ia = detail::fit_log_rate(anchor).integral(lo, hi);
  const double it = detail::fit_log_rate(test).integral(lo, hi);
  return (std::exp((it - ia) / (hi - lo)) - 1.0) * 100.0;
}

}  // namespace mvrd
