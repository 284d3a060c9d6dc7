#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mvrd/codec/entropy.hpp"
#include "mvrd/codec/intra.hpp"
#include "mvrd/codec/transform.hpp"
#include "mvrd/msfd.hpp"

namespace mvrd {

inline constexpr int kMinCuSize = 4;
inline constexpr int kModeBits = 2;

struct RdoConfig {
  MultiScaleConfig distortion;
  // Converts the MSE-domain Lagrangian into the units of MSFD + beta * MSE.
  double kappa = 0.02 / 256.0;
  int min_cu = kMinCuSize;
};

/// Lagrange multiplier for mode and partition decisions.
inline double rdo_lambda(int qp, double kappa) {
  return kappa * 0.85 * std::pow(2.0, (qp - 12) / 3.0);
}

/// One node of a coded CTU tree, stored in coding (pre-)order. Nodes that lie
/// wholly outside the coded area are omitted.
struct CuDecision {
  BlockRegion region;
  int depth = 0;
  bool split = false;
  bool forced_split = false;  // crosses the picture edge, no flag is coded
  IntraMode mode = IntraMode::dc;
  Coefficients levels;
  RdDistortion distortion;
  std::size_t bits = 0;  // flag + mode + coefficients (leaf only)
  double cost = 0.0;
};

struct CtuDecision {
  std::vector<CuDecision> nodes;
  double cost = 0.0;
  int qp = 0;
};

/// Result of coding one leaf with a given mode.
struct LeafTrial {
  Coefficients levels;
  Block recon;
  std::size_t coeff_bits = 0;
};

inline LeafTrial code_leaf(const Frame& orig, const Frame& recon, const BlockRegion& r,
                           IntraMode mode, int qp) {
  const Block pred = predict_intra(recon, r, mode);
  LeafTrial t;
  t.levels = transform_quantize(residual_of(extract_block(orig, r, false), pred), qp);
  t.recon = reconstruct(pred, dequantize_inverse(t.levels, qp));
  t.coeff_bits = coefficient_bits(t.levels);
  return t;
}

/// Whether a square node of `size` at (x, y) may carry a split flag.
inline bool node_fits(const Frame& frame, int x, int y, int size) noexcept {
  return x + size <= frame.width() && y + size <= frame.height();
}

/// Recursive quad-tree search minimising J = D + lambda * R, where D is
/// MSFD + beta * MSE and R the exact coded bits. At equal cost the unsplit
/// node and then the lower mode index win. `recon` is updated in place with
/// the chosen reconstruction.
class RdoSearch {
 public:
  RdoSearch(const Frame& orig, Frame& recon, int qp, const RdoConfig& cfg, WindowDistance& source)
      : orig_(orig), recon_(recon), qp_(qp), cfg_(cfg), source_(source),
        lambda_(rdo_lambda(qp, cfg.kappa)) {}

  CtuDecision run(int x, int y, int size) {
    CtuDecision ctu;
    ctu.qp = qp_;
    ctu.cost = search(x, y, size, 0, ctu.nodes);
    return ctu;
  }

  double lambda() const noexcept { return lambda_; }

 private:
  double search(int x, int y, int size, int depth, std::vector<CuDecision>& out) {
    if (x >= orig_.width() || y >= orig_.height()) return 0.0;
    const BlockRegion region{x, y, size, size};

    if (!node_fits(orig_, x, y, size)) {
      CuDecision node;
      node.region = region;
      node.depth = depth;
      node.split = true;
      node.forced_split = true;
      const std::size_t at = out.size();
      out.push_back(std::move(node));
      const double j = split_children(x, y, size, depth, out);
      out[at].cost = j;
      return j;
    }

    const bool can_split = size > cfg_.min_cu;
    const std::size_t flag_bits = can_split ? 1 : 0;
    const Block before = extract_block(recon_, region, false);

    std::vector<LeafTrial> trials;
    for (int m = 0; m < kIntraModeCount; ++m) trials.push_back(code_leaf(orig_, recon_, region, IntraMode(m), qp_));
    std::vector<RdDistortion> dist = leaf_distortions(region, trials);

    CuDecision best;
    best.cost = std::numeric_limits<double>::infinity();
    Block best_recon;
    for (int m = 0; m < kIntraModeCount; ++m) {
      const std::size_t bits = flag_bits + kModeBits + trials[m].coeff_bits;
      const double j = dist[m].combined + lambda_ * double(bits);
      if (j < best.cost) {
        best.region = region;
        best.depth = depth;
        best.mode = IntraMode(m);
        best.levels = std::move(trials[m].levels);
        best.distortion = std::move(dist[m]);
        best.bits = bits;
        best.cost = j;
        best_recon = std::move(trials[m].recon);
      }
    }

    if (can_split) {
      paste_block(recon_, before, x, y);
      std::vector<CuDecision> children;
      CuDecision node;
      node.region = region;
      node.depth = depth;
      node.split = true;
      children.push_back(std::move(node));
      const double j_split = lambda_ * double(flag_bits) + split_children(x, y, size, depth, children);
      if (j_split < best.cost) {
        children.front().cost = j_split;
        for (auto& c : children) out.push_back(std::move(c));
        return j_split;
      }
    }
    paste_block(recon_, best_recon, x, y);
    const double j = best.cost;
    out.push_back(std::move(best));
    return j;
  }

  // Same values as cu_distortion on each candidate, with the candidates of
  // one window featurised together.
  std::vector<RdDistortion> leaf_distortions(const BlockRegion& region, const std::vector<LeafTrial>& trials) {
    const MultiScaleConfig& mc = cfg_.distortion;
    const bool small = region.w < mc.small_block_threshold || region.h < mc.small_block_threshold;
    const Block orig_cu = extract_block(orig_, region, false);
    std::vector<RdDistortion> out(trials.size());
    for (const BlockRegion& win : build_windows(region, mc)) {
      if (small) {
        for (auto& d : out) d.window_fd.push_back(kMaxFeatureDistance);
        continue;
      }
      std::vector<Block> cands;
      for (const LeafTrial& t : trials) {
        paste_block(recon_, t.recon, region.x, region.y);
        cands.push_back(extract_block(recon_, win, true));
      }
      const std::vector<double> fd = source_.distances(win, extract_block(orig_, win, true), cands);
      for (std::size_t k = 0; k < trials.size(); ++k) out[k].window_fd.push_back(fd[k]);
    }
    for (std::size_t k = 0; k < trials.size(); ++k) {
      out[k].msfd = weighted_msfd(out[k].window_fd, mc.weights, region.w, region.h);
      out[k].mse = mse(orig_cu, trials[k].recon);
      out[k].combined = combined_distortion(out[k].msfd, out[k].mse, mc.beta);
    }
    return out;
  }

  double split_children(int x, int y, int size, int depth, std::vector<CuDecision>& out) {
    const int half = size / 2;
    double j = 0.0;
    j += search(x, y, half, depth + 1, out);
    j += search(x + half, y, half, depth + 1, out);
    j += search(x, y + half, half, depth + 1, out);
    j += search(x + half, y + half, half, depth + 1, out);
    return j;
  }

  const Frame& orig_;
  Frame& recon_;
  int qp_;
  const RdoConfig& cfg_;
  WindowDistance& source_;
  double lambda_;
};

/// Codes one CTU whose top-left corner is (x, y). `orig` and `recon` are the
/// padded coding pictures.
inline CtuDecision rdo_select(const Frame& orig, Frame& recon, int x, int y, int ctu_size, int qp,
                              const RdoConfig& cfg, WindowDistance& source) {
  RdoSearch search(orig, recon, qp, cfg, source);
  return search.run(x, y, ctu_size);
}

}  // namespace mvrd
