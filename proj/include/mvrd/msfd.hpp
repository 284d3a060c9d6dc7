#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mvrd/error.hpp"
#include "mvrd/features.hpp"
#include "mvrd/frame.hpp"

namespace mvrd {

struct MultiScaleConfig {
  int delta_d = 8;
  std::vector<double> weights = {4.0, 2.0, 1.0};  // index 0: the CU itself
  double beta = 0.02;
  int small_block_threshold = 16;

  int num_windows() const noexcept { return int(weights.size()); }
  double weight_sum() const noexcept { return std::accumulate(weights.begin(), weights.end(), 0.0); }

  void validate() const {
    if (weights.empty()) throw ValidationError("multi-scale config needs at least one window");
    for (double w : weights) {
      if (!(w > 0.0)) throw ValidationError("window weights must be positive");
    }
    if (delta_d < 0) throw ValidationError("window expansion must be non-negative");
    if (!(beta >= 0.0)) throw ValidationError("beta must be non-negative");
    if (small_block_threshold < 0) throw ValidationError("small-block threshold must be non-negative");
  }
};

/// Largest possible cosine distance; used for CUs too small to featurise.
inline constexpr double kMaxFeatureDistance = 2.0;

struct RdDistortion {
  double msfd = 0.0;
  double mse = 0.0;
  double combined = 0.0;
  std::vector<double> window_fd;
};

/// Window s grows the CU by s * delta_d on the top and left only, where the
/// neighbourhood is already reconstructed. Origins may become negative.
inline std::vector<BlockRegion> build_windows(const BlockRegion& cu, const MultiScaleConfig& cfg) {
  std::vector<BlockRegion> out;
  for (int s = 0; s < cfg.num_windows(); ++s) {
    const int e = s * cfg.delta_d;
    out.push_back({cu.x - e, cu.y - e, cu.w + e, cu.h + e});
  }
  return out;
}

/// Source of per-window feature distances. Implementations may cache
/// original-side features, since the original frame does not change.
class WindowDistance {
 public:
  virtual ~WindowDistance() = default;
  virtual double distance(const BlockRegion& window, const Block& orig, const Block& recon) = 0;
  /// Distances of several candidate reconstructions of the same window.
  virtual std::vector<double> distances(const BlockRegion& window, const Block& orig,
                                        const std::vector<Block>& recons) {
    std::vector<double> out;
    for (const Block& r : recons) out.push_back(distance(window, orig, r));
    return out;
  }
  /// Called before each CTU; cached state keyed on windows may be dropped.
  virtual void reset() {}
};

/// Cosine distance between extractor features of the two windows.
class ExtractorDistance final : public WindowDistance {
 public:
  explicit ExtractorDistance(const FeatureExtractor& extractor) : extractor_(extractor) {}

  double distance(const BlockRegion& window, const Block& orig, const Block& recon) override {
    if (orig == recon) return 0.0;
    auto it = orig_cache_.find(window);
    if (it == orig_cache_.end()) it = orig_cache_.emplace(window, extractor_.extract(orig)).first;
    return feature_distance(it->second, recon_features(recon));
  }

  std::vector<double> distances(const BlockRegion& window, const Block& orig,
                                const std::vector<Block>& recons) override {
    std::vector<double> out(recons.size(), 0.0);
    std::vector<Block> todo;
    const bool need_orig = orig_cache_.find(window) == orig_cache_.end();
    if (need_orig) todo.push_back(orig);
    for (const Block& r : recons) {
      if (r == orig || cached(r) || std::find(todo.begin(), todo.end(), r) != todo.end()) continue;
      todo.push_back(r);
    }
    if (!todo.empty()) {
      std::vector<FeatureTensor> feats = extractor_.extract_batch(todo);
      std::size_t i = 0;
      if (need_orig) orig_cache_.emplace(window, std::move(feats[i++]));
      for (; i < todo.size(); ++i) {
        ++extractions_;
        recent_.emplace_front(std::move(todo[i]), std::move(feats[i]));
      }
    }
    const FeatureTensor& of = orig_cache_.at(window);
    for (std::size_t k = 0; k < recons.size(); ++k) {
      if (recons[k] == orig) continue;
      out[k] = feature_distance(of, *cached(recons[k]));
    }
    while (recent_.size() > kRecentCapacity) recent_.pop_back();
    return out;
  }

  void reset() override {
    orig_cache_.clear();
    recent_.clear();
  }

  long long extractions() const noexcept { return extractions_; }

 private:
  const FeatureTensor* cached(const Block& recon) const {
    for (const auto& [block, feat] : recent_) {
      if (block == recon) return &feat;
    }
    return nullptr;
  }

  const FeatureTensor& recon_features(const Block& recon) {
    for (const auto& [block, feat] : recent_) {
      if (block == recon) return feat;
    }
    ++extractions_;
    recent_.emplace_front(recon, extractor_.extract(recon));
    if (recent_.size() > kRecentCapacity) recent_.pop_back();
    return recent_.front().second;
  }

  static constexpr std::size_t kRecentCapacity = 8;
  const FeatureExtractor& extractor_;
  std::map<BlockRegion, FeatureTensor> orig_cache_;
  std::deque<std::pair<Block, FeatureTensor>> recent_;
  long long extractions_ = 0;
};

/// Weighted multi-window feature distortion scaled by CU area.
struct MsfdResult {
  double value = 0.0;
  std::vector<double> window_fd;
};

inline double weighted_msfd(const std::vector<double>& fd, const std::vector<double>& weights,
                            int cu_w, int cu_h) {
  double s = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) s += weights[i] * fd[i];
  return s * double(cu_w) * double(cu_h);
}

/// `recon` must already hold the candidate reconstruction of `cu` together
/// with everything coded before it.
inline MsfdResult msfd(const Frame& orig, const Frame& recon, const BlockRegion& cu,
                       const MultiScaleConfig& cfg, WindowDistance& source) {
  MsfdResult r;
  const bool small = cu.w < cfg.small_block_threshold || cu.h < cfg.small_block_threshold;
  for (const BlockRegion& win : build_windows(cu, cfg)) {
    if (small) {
      r.window_fd.push_back(kMaxFeatureDistance);
    } else {
      r.window_fd.push_back(
          source.distance(win, extract_block(orig, win, true), extract_block(recon, win, true)));
    }
  }
  r.value = weighted_msfd(r.window_fd, cfg.weights, cu.w, cu.h);
  return r;
}

template <typename A, typename B>
double mse(const Plane<A>& orig, const Plane<B>& recon) {
  if (orig.width() != recon.width() || orig.height() != recon.height()) {
    throw ValidationError("MSE operands differ in size");
  }
  long long sse = 0;
  for (std::size_t i = 0; i < orig.area(); ++i) {
    const long long d = (long long)recon.samples()[i] - (long long)orig.samples()[i];
    sse += d * d;
  }
  return double(sse) / double(orig.area());
}

inline double combined_distortion(double msfd_value, double mse_value, double beta) noexcept {
  return msfd_value + beta * mse_value;
}

/// Full distortion of one CU candidate: MSFD + beta * MSE.
inline RdDistortion cu_distortion(const Frame& orig, const Frame& recon, const BlockRegion& cu,
                                  const MultiScaleConfig& cfg, WindowDistance& source) {
  MsfdResult m = msfd(orig, recon, cu, cfg, source);
  RdDistortion d;
  d.msfd = m.value;
  d.window_fd = std::move(m.window_fd);
  d.mse = mse(extract_block(orig, cu, false), extract_block(recon, cu, false));
  d.combined = combined_distortion(d.msfd, d.mse, cfg.beta);
  return d;
}

}  // namespace mvrd
