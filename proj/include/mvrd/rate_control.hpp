#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvrd/error.hpp"
#include "mvrd/roim.hpp"

namespace mvrd {

inline constexpr int kMinQp = 0;
inline constexpr int kMaxQp = 51;

/// Clip(lo, hi, v): v limited to [lo, hi].
template <typename T>
constexpr T clip(T lo, T hi, T v) noexcept {
  return std::min(std::max(v, lo), hi);
}

/// Allocation weight of one CTU: texture term plus ROI emphasis.
inline double ctu_cost(double satd, double importance, double alpha) noexcept {
  return satd / 3.0 + alpha * importance;
}

// ---------------------------------------------------------------------------
// lambda-domain QP model

/// lambda = a * bpp^b * cpp^k and QP = round(c1 * ln(lambda) + c2), where cpp
/// is the SATD per pixel of the content being coded. k = 0 drops the
/// content term.
struct LambdaModel {
  double a = 3.2003;
  double b = -1.367;
  double k = 0.0;
  double c1 = 4.2005;
  double c2 = 13.7122;

  double lambda_for_bpp(double bpp, double cpp = 1.0) const {
    return a * std::pow(bpp, b) * std::pow(std::max(cpp, kMinComplexity), k);
  }

  int qp_for_lambda(double lambda) const {
    const double qp = c1 * std::log(lambda) + c2;
    return int(clip<long>(kMinQp, kMaxQp, std::lround(qp)));
  }

  /// Bits per pixel the model predicts for content of complexity `cpp` at `qp`.
  double bpp_for_qp(double qp, double cpp = 1.0) const {
    const double lambda = std::exp((qp - c2) / c1);
    return std::pow(lambda / (a * std::pow(std::max(cpp, kMinComplexity), k)), 1.0 / b);
  }

  static constexpr double kMinComplexity = 1.0 / 64.0;
};

/// Fit of this codec's constant-QP rate over the synthetic corpus
/// (calibrate-lambda); the struct defaults are the literature constants.
inline constexpr LambdaModel kCalibratedRateModel{2.5677, -1.5175, 1.3373, 4.2005, 13.7122};

/// QP for a CTU given its bit target. Never increases when the target grows.
inline int derive_qp(long long target_bits, long long area, const LambdaModel& model, double cpp = 1.0) {
  const double bpp = double(std::max<long long>(target_bits, 1)) / double(std::max<long long>(area, 1));
  return model.qp_for_lambda(model.lambda_for_bpp(bpp, cpp));
}

/// One constant-QP observation: the coded rate of a block and its complexity.
struct RateSample {
  int qp = 0;
  double bpp = 0.0;
  double cpp = 0.0;
};

/// Least-squares fit of ln a, b and k to ln lambda(qp) = ln a + b ln bpp + k ln cpp,
/// keeping c1 and c2 of `base`.
inline LambdaModel fit_lambda_model(const std::vector<RateSample>& samples, const LambdaModel& base) {
  std::vector<const RateSample*> rows;
  for (const RateSample& s : samples) {
    if (s.bpp > 0.0) rows.push_back(&s);
  }
  if (rows.size() < 3) throw ValidationError("rate model fit needs at least 3 samples with non-zero rate");
  Eigen::MatrixX3d design(rows.size(), 3);
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = std::log(rows[i]->bpp);
    design(i, 2) = std::log(std::max(rows[i]->cpp, LambdaModel::kMinComplexity));
    y(i) = (rows[i]->qp - base.c2) / base.c1;
  }
  const auto qr = design.colPivHouseholderQr();
  if (qr.rank() < 3) throw ValidationError("rate model fit is degenerate");
  const Eigen::Vector3d x = qr.solve(y);
  LambdaModel m = base;
  m.a = std::exp(x(0));
  m.b = x(1);
  m.k = x(2);
  return m;
}

/// Per-encode model whose scale `a` follows the observed rate:
/// a <- a * sqrt(actual / target), kept within [a0 / 4, 4 * a0].
class AdaptiveLambda {
 public:
  explicit AdaptiveLambda(LambdaModel model) : model_(model), a0_(model.a) {}

  const LambdaModel& model() const noexcept { return model_; }

  void update(long long actual_bits, long long target_bits) {
    if (actual_bits <= 0 || target_bits <= 0) return;
    const double ratio = double(actual_bits) / double(target_bits);
    model_.a = clip(a0_ / 4.0, a0_ * 4.0, model_.a * std::sqrt(ratio));
  }

 private:
  LambdaModel model_;
  double a0_;
};

// ---------------------------------------------------------------------------
// Frame budget

/// Sequential bit-budget state for one picture. CTUs are retired in raster
/// order; allocation spreads the remaining budget over the uncoded CTUs.
class BudgetState {
 public:
  BudgetState(long long target_pic, int ctu_count, int qp_pic)
      : target_pic_(target_pic), qp_pic_(qp_pic), targets_(ctu_count, 0), coded_(ctu_count, 0) {
    for (int k = 0; k < ctu_count; ++k) uncoded_.push_back(k);
  }

  long long target_pic() const noexcept { return target_pic_; }
  long long bits_coded() const noexcept { return bits_coded_; }
  long long remaining() const noexcept { return target_pic_ - bits_coded_; }
  int qp_pic() const noexcept { return qp_pic_; }
  const std::deque<int>& uncoded() const noexcept { return uncoded_; }
  bool is_coded(int k) const { return coded_.at(k) != 0; }
  const std::vector<char>& coded_mask() const noexcept { return coded_; }
  long long target(int k) const { return targets_.at(k); }

  /// Times allocation found the budget exhausted.
  int overruns() const noexcept { return overruns_; }
  bool last_allocation_overran() const noexcept { return last_overran_; }

  /// Charges bits that are not attributed to any CTU (stream header).
  void charge_overhead(long long bits) { bits_coded_ += bits; }

  /// Splits the remaining budget over all uncoded CTUs in proportion to
  /// `costs` (indexed by CTU) and returns the target of the next CTU.
  long long allocate(std::span<const double> costs) {
    if (uncoded_.empty()) throw ValidationError("allocation requested with no uncoded CTUs");
    if (costs.size() != targets_.size()) {
      throw ValidationError("cost vector has " + std::to_string(costs.size()) +
                            " entries, expected " + std::to_string(targets_.size()));
    }
    const long long rem = remaining();
    last_overran_ = rem <= 0;
    if (last_overran_) {
      ++overruns_;
      for (int k : uncoded_) targets_[k] = 1;
      return targets_[uncoded_.front()];
    }
    double sum = 0.0;
    for (int k : uncoded_) sum += costs[k];
    for (int k : uncoded_) {
      const double share = sum > 0.0 ? costs[k] / sum : 1.0 / double(uncoded_.size());
      targets_[k] = std::llround(double(rem) * share);
    }
    return targets_[uncoded_.front()];
  }

  /// Sum of the current targets of all uncoded CTUs.
  long long uncoded_target_sum() const noexcept {
    long long s = 0;
    for (int k : uncoded_) s += targets_[k];
    return s;
  }

  void retire(int k, long long actual_bits, int qp) {
    if (k < 0 || k >= int(coded_.size())) {
      throw ValidationError("CTU index " + std::to_string(k) + " out of range");
    }
    if (coded_[k]) throw ValidationError("CTU " + std::to_string(k) + " retired twice");
    if (uncoded_.front() != k) {
      throw ValidationError("CTU " + std::to_string(k) + " retired out of coding order");
    }
    if (actual_bits < 0) throw ValidationError("negative bit count");
    uncoded_.pop_front();
    coded_[k] = 1;
    bits_coded_ += actual_bits;
    qp_sum_ += qp;
    ++qp_count_;
  }

  /// Average QP of the coded CTUs; empty before the first one.
  std::optional<double> mean_qp() const noexcept {
    if (qp_count_ == 0) return std::nullopt;
    return double(qp_sum_) / double(qp_count_);
  }

 private:
  long long target_pic_;
  long long bits_coded_ = 0;
  int qp_pic_;
  std::deque<int> uncoded_;
  std::vector<long long> targets_;
  std::vector<char> coded_;
  long long qp_sum_ = 0;
  int qp_count_ = 0;
  int overruns_ = 0;
  bool last_overran_ = false;
};

// ---------------------------------------------------------------------------
// QP constraints

inline constexpr double kConnectivityThreshold = 0.7;
inline constexpr int kTightAnchorBand = 2;
inline constexpr int kLooseAnchorBand = 9;
inline constexpr int kMeanBand = 1;

/// Coded 4-neighbour of `i` with the highest connectivity; ties go to the smaller index.
inline std::optional<int> select_anchor_neighbor(int i, const RoimMap& roim,
                                                 std::span<const char> coded) {
  std::optional<int> best;
  double best_mc = -1.0;
  const int cols = roim.cols();
  const int col = i % cols, row = i / cols;
  // Ascending index order makes the strict comparison implement the tie rule.
  const int cand[4] = {row > 0 ? i - cols : -1, col > 0 ? i - 1 : -1,
                       col + 1 < cols ? i + 1 : -1, row + 1 < roim.rows() ? i + cols : -1};
  for (int j : cand) {
    if (j < 0 || !coded[j]) continue;
    const double mc = roim.connectivity(i, j);
    if (mc > best_mc) {
      best_mc = mc;
      best = j;
    }
  }
  return best;
}

/// Anchor band half-width for a given connectivity.
inline int anchor_band(double m_c) noexcept {
  return m_c > kConnectivityThreshold ? kTightAnchorBand : kLooseAnchorBand;
}

/// Limits an estimated QP: first to the running mean +-1 (when known), then
/// to the anchor's QP +-2 or +-9 depending on connectivity. The picture-QP
/// band is deliberately absent.
inline int constrain_qp(int qp_est, std::optional<int> anchor_qp, std::optional<double> m_c,
                        std::optional<double> qp_cu_mean) {
  int qp = qp_est;
  if (qp_cu_mean) {
    const int mean = int(std::lround(*qp_cu_mean));
    qp = clip(mean - kMeanBand, mean + kMeanBand, qp);
  }
  if (anchor_qp) {
    const int band = anchor_band(m_c.value_or(0.0));
    qp = clip(*anchor_qp - band, *anchor_qp + band, qp);
  }
  return clip(kMinQp, kMaxQp, qp);
}

}  // namespace mvrd
