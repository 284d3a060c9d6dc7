#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "mvrd/error.hpp"
#include "mvrd/frame.hpp"

namespace mvrd {

/// Channel-major activation volume.
struct FeatureTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureTensor() = default;
  FeatureTensor(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w) {}

  float* plane(int c) noexcept { return data.data() + std::size_t(c) * height * width; }
  const float* plane(int c) const noexcept { return data.data() + std::size_t(c) * height * width; }
  float& at(int c, int y, int x) noexcept { return plane(c)[std::size_t(y) * width + x]; }
  float at(int c, int y, int x) const noexcept { return plane(c)[std::size_t(y) * width + x]; }

  bool same_shape(const FeatureTensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

// ---------------------------------------------------------------------------
// Cosine feature distance

/// Counts of degenerate (all-zero) feature comparisons, for diagnostics.
struct FeatureDistanceStats {
  std::atomic<long long> both_zero{0};
  std::atomic<long long> one_zero{0};
};

inline FeatureDistanceStats& feature_distance_stats() {
  static FeatureDistanceStats stats;
  return stats;
}

/// 1 - cosine similarity of the flattened tensors, in [0, 2]. Two all-zero
/// tensors are at distance 0; exactly one all-zero tensor is at distance 1.
inline double feature_distance(const FeatureTensor& a, const FeatureTensor& b) {
  if (!a.same_shape(b)) throw ValidationError("feature tensors differ in shape");
  if (a.data == b.data) {
    bool nonzero = false;
    for (float v : a.data) nonzero = nonzero || v != 0.0f;
    if (!nonzero) ++feature_distance_stats().both_zero;
    return 0.0;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 && nb == 0.0) {
    ++feature_distance_stats().both_zero;
    return 0.0;
  }
  if (na == 0.0 || nb == 0.0) {
    ++feature_distance_stats().one_zero;
    return 1.0;
  }
  const double fd = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(fd, 0.0, 2.0);
}

// ---------------------------------------------------------------------------
// FTEN tensor files

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline constexpr std::uint16_t kTensorFileVersion = 1;

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const noexcept { return bytes_.size() - pos_ >= n; }

  template <typename T>
  T read_le(const std::string& context) {
    if (!has(sizeof(T))) throw ValidationError("tensor file truncated in " + context);
    T v{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= T(std::uint8_t(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string read_string(std::size_t n, const std::string& context) {
    if (!has(n)) throw ValidationError("tensor file truncated in " + context);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

}  // namespace detail

inline std::string encode_tensor_file(const std::vector<NamedTensor>& tensors) {
  std::string out = "FTEN";
  detail::write_le<std::uint16_t>(out, kTensorFileVersion);
  detail::write_le<std::uint32_t>(out, std::uint32_t(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.data.size() != t.element_count()) {
      throw ValidationError("tensor '" + t.name + "' payload does not match its shape");
    }
    detail::write_le<std::uint16_t>(out, std::uint16_t(t.name.size()));
    out += t.name;
    detail::write_le<std::uint8_t>(out, std::uint8_t(t.dims.size()));
    for (auto d : t.dims) detail::write_le<std::uint32_t>(out, d);
    for (float f : t.data) detail::write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline std::vector<NamedTensor> decode_tensor_file(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "FTEN") != 0) {
    throw ValidationError("tensor file has bad magic (expected FTEN)");
  }
  detail::ByteReader in(bytes);
  in.read_string(4, "magic");
  const auto version = in.read_le<std::uint16_t>("header");
  if (version != kTensorFileVersion) {
    throw ValidationError("unsupported tensor file version " + std::to_string(version));
  }
  const auto count = in.read_le<std::uint32_t>("header");
  std::vector<NamedTensor> out;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::string where = "tensor #" + std::to_string(n);
    NamedTensor t;
    const auto name_len = in.read_le<std::uint16_t>(where);
    t.name = in.read_string(name_len, where);
    const std::string ctx = "tensor '" + t.name + "'";
    const auto ndim = in.read_le<std::uint8_t>(ctx);
    for (int d = 0; d < ndim; ++d) t.dims.push_back(in.read_le<std::uint32_t>(ctx));
    const std::size_t elems = t.element_count();
    if (!in.has(elems * 4)) {
      throw ValidationError("tensor file truncated in payload of " + ctx + ": shape needs " +
                            std::to_string(elems * 4) + " bytes");
    }
    t.data.resize(elems);
    for (std::size_t i = 0; i < elems; ++i) {
      const float f = std::bit_cast<float>(in.read_le<std::uint32_t>(ctx));
      if (!std::isfinite(f)) throw ValidationError("non-finite value in " + ctx);
      t.data[i] = f;
    }
    out.push_back(std::move(t));
  }
  if (in.position() != bytes.size()) {
    throw ValidationError("tensor file has " + std::to_string(bytes.size() - in.position()) +
                          " trailing bytes");
  }
  return out;
}

inline std::vector<NamedTensor> load_tensor_file(const std::string& path) {
  return decode_tensor_file(detail::read_file(path));
}

inline void store_tensor_file(const std::vector<NamedTensor>& tensors, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::string bytes = encode_tensor_file(tensors);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

// ---------------------------------------------------------------------------
// Truncated VGG-11 (eight 3x3 convolutions, no final pool, no classifier)

inline constexpr std::array<int, 8> kVggChannels = {64, 128, 256, 256, 512, 512, 512, 512};
inline constexpr std::array<bool, 8> kVggPoolAfter = {true, true, false, true, false, true, false, false};
inline constexpr int kFeatureStride = 16;
inline constexpr float kInputMean = 0.449f;
inline constexpr float kInputStd = 0.226f;

/// 3x3, stride 1, pad 1 convolution followed by ReLU.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<float> weight;  // [out][in][3][3]
  std::vector<float> bias;    // [out]
  bool pool_after = false;
  std::vector<float> packed;  // weight in GEMM panel order

  void pack();
};

struct FeatureProviderConfig {
  enum class Kind { builtin, weight_file };
  Kind kind = Kind::builtin;
  std::uint64_t seed = 20210705;
  std::string weight_path;
};

/// Samples scaled to [0, 1] and standardised with the fixed single-channel statistics.
inline FeatureTensor normalize_patch(const Block& patch) {
  FeatureTensor t(1, patch.height(), patch.width());
  for (std::size_t i = 0; i < patch.area(); ++i) {
    t.data[i] = (float(patch.samples()[i]) / 255.0f - kInputMean) / kInputStd;
  }
  return t;
}

namespace detail {

#if defined(__AVX512F__)
// 32 rows x 8 columns; `init` and `out` are [8][32].
inline void micro_kernel_32x8(const float* ap, const float* bp, int kc, const float* init, float* out) {
#define MVRD_ACC(j) __m512 l##j = _mm512_load_ps(init + 32 * j), h##j = _mm512_load_ps(init + 32 * j + 16)
  MVRD_ACC(0); MVRD_ACC(1); MVRD_ACC(2); MVRD_ACC(3); MVRD_ACC(4); MVRD_ACC(5); MVRD_ACC(6); MVRD_ACC(7);
#undef MVRD_ACC
  for (int kk = 0; kk < kc; ++kk, ap += 32, bp += 8) {
    const __m512 a0 = _mm512_loadu_ps(ap), a1 = _mm512_loadu_ps(ap + 16);
#define MVRD_STEP(j)                        \
  {                                         \
    const __m512 bv = _mm512_set1_ps(bp[j]); \
    l##j = _mm512_fmadd_ps(a0, bv, l##j);    \
    h##j = _mm512_fmadd_ps(a1, bv, h##j);    \
  }
    MVRD_STEP(0) MVRD_STEP(1) MVRD_STEP(2) MVRD_STEP(3) MVRD_STEP(4) MVRD_STEP(5) MVRD_STEP(6) MVRD_STEP(7)
#undef MVRD_STEP
  }
#define MVRD_OUT(j) _mm512_store_ps(out + 32 * j, l##j), _mm512_store_ps(out + 32 * j + 16, h##j)
  MVRD_OUT(0); MVRD_OUT(1); MVRD_OUT(2); MVRD_OUT(3); MVRD_OUT(4); MVRD_OUT(5); MVRD_OUT(6); MVRD_OUT(7);
#undef MVRD_OUT
}
#endif

inline constexpr int kGemmRows = 32;
inline constexpr int kGemmCols = 8;
inline constexpr int kGemmDepth = 256;

inline int gemm_padded_rows(int m) noexcept { return (m + kGemmRows - 1) / kGemmRows * kGemmRows; }

/// Rearranges A ([m][k]) into the panel order read by gemm_fixed_order: per
/// depth chunk, per 32-row block, [k][32]. Rows past m are zero.
inline std::vector<float> pack_gemm_a(const float* a, int m, int k) {
  const int mp = gemm_padded_rows(m);
  std::vector<float> out(std::size_t(mp) * k, 0.0f);
  std::size_t o = 0;
  for (int k0 = 0; k0 < k; k0 += kGemmDepth) {
    const int kc = std::min(kGemmDepth, k - k0);
    for (int m0 = 0; m0 < mp; m0 += kGemmRows)
      for (int kk = 0; kk < kc; ++kk, o += kGemmRows)
        for (int r = 0; r < kGemmRows && m0 + r < m; ++r) out[o + r] = a[std::size_t(m0 + r) * k + k0 + kk];
  }
  return out;
}

/// C[m][n] = sum_k A[m][k] * B[k][n], A packed by pack_gemm_a. Every output
/// is one fused multiply-add chain over k in ascending order (blocking over
/// k only spills the partial sum to C), so a column's result does not depend
/// on how many columns are computed with it.
inline void gemm_fixed_order(const float* apacked, const float* b, float* c, int m, int n, int k) {
  constexpr int kCols = kGemmCols, kRows = kGemmRows;
  const int mp = gemm_padded_rows(m);
  std::vector<float> bpack, apanel(std::size_t(kGemmDepth) * kRows);
  const int nblocks = (n + kCols - 1) / kCols;
  for (int k0 = 0; k0 < k; k0 += kGemmDepth) {
    const int kc = std::min(kGemmDepth, k - k0);
    const bool first = k0 == 0;
    // B chunk as [n-block][k][8], zero-filled past n.
    bpack.assign(std::size_t(nblocks) * kc * kCols, 0.0f);
    for (int nb = 0; nb < nblocks; ++nb) {
      const int n0 = nb * kCols, nc = std::min(kCols, n - n0);
      float* dst = bpack.data() + std::size_t(nb) * kc * kCols;
      for (int kk = 0; kk < kc; ++kk) std::memcpy(dst + std::size_t(kk) * kCols, b + std::size_t(k0 + kk) * n + n0, sizeof(float) * nc);
    }
    for (int m0 = 0; m0 < m; m0 += kRows) {
      const int rc = std::min(kRows, m - m0);
      std::memcpy(apanel.data(), apacked + std::size_t(k0) * mp + std::size_t(m0) * kc, sizeof(float) * kc * kRows);
      const float* ap = apanel.data();
      for (int nb = 0; nb < nblocks; ++nb) {
        const int n0 = nb * kCols, nc = std::min(kCols, n - n0);
        const float* bp = bpack.data() + std::size_t(nb) * kc * kCols;
        alignas(64) float acc[kCols][kRows] = {};
        if (!first) {
          for (int r = 0; r < rc; ++r)
            for (int j = 0; j < nc; ++j) acc[j][r] = c[std::size_t(m0 + r) * n + n0 + j];
        }
#if defined(__AVX512F__)
        micro_kernel_32x8(ap, bp, kc, &acc[0][0], &acc[0][0]);
#else
        for (int j = 0; j < nc; ++j)
          for (int r = 0; r < kRows; ++r)
            for (int kk = 0; kk < kc; ++kk) acc[j][r] = std::fma(ap[kk * kRows + r], bp[kk * kCols + j], acc[j][r]);
#endif
        for (int r = 0; r < rc; ++r)
          for (int j = 0; j < nc; ++j) c[std::size_t(m0 + r) * n + n0 + j] = acc[j][r];
      }
    }
  }
}

}  // namespace detail

inline void ConvLayer::pack() { packed = detail::pack_gemm_a(weight.data(), out_channels, in_channels * 9); }

/// Applies one layer to a batch of equally sized tensors in a single product.
inline std::vector<FeatureTensor> conv3x3_relu(const std::vector<FeatureTensor>& in, const ConvLayer& layer) {
  if (in.empty()) return {};
  const int h = in.front().height, w = in.front().width;
  for (const FeatureTensor& t : in) {
    if (t.channels != layer.in_channels) {
      throw ValidationError("convolution expects " + std::to_string(layer.in_channels) +
                            " input channels, got " + std::to_string(t.channels));
    }
    if (t.height != h || t.width != w) throw ValidationError("batched tensors differ in size");
  }
  if (layer.packed.size() != std::size_t(detail::gemm_padded_rows(layer.out_channels)) * layer.in_channels * 9) throw ValidationError("convolution layer is not packed");
  const std::size_t hw = std::size_t(h) * w;
  const std::size_t n = hw * in.size();
  const int k = layer.in_channels * 9;

  // im2col: row (c, ky, kx), column (sample, y, x); zero padding.
  std::vector<float> cols(std::size_t(k) * n, 0.0f);
  for (std::size_t s = 0; s < in.size(); ++s) {
    for (int c = 0; c < layer.in_channels; ++c) {
      const float* src = in[s].plane(c);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          float* dst = cols.data() + std::size_t(c * 9 + ky * 3 + kx) * n + s * hw;
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h || x1 <= x0) continue;
            std::memcpy(dst + std::size_t(y) * w + x0, src + std::size_t(sy) * w + x0 + dx,
                        sizeof(float) * std::size_t(x1 - x0));
          }
        }
      }
    }
  }

  std::vector<float> prod(std::size_t(layer.out_channels) * n);
  detail::gemm_fixed_order(layer.packed.data(), cols.data(), prod.data(), layer.out_channels, int(n), k);

  std::vector<FeatureTensor> out(in.size(), FeatureTensor(layer.out_channels, h, w));
  for (int o = 0; o < layer.out_channels; ++o) {
    const float b = layer.bias[o];
    for (std::size_t s = 0; s < in.size(); ++s) {
      const float* p = prod.data() + std::size_t(o) * n + s * hw;
      float* d = out[s].plane(o);
      for (std::size_t i = 0; i < hw; ++i) d[i] = std::max(p[i] + b, 0.0f);
    }
  }
  return out;
}

inline FeatureTensor conv3x3_relu(const FeatureTensor& in, const ConvLayer& layer) {
  return std::move(conv3x3_relu(std::vector<FeatureTensor>{in}, layer).front());
}

/// 2x2 max-pool, stride 2; odd trailing rows/columns are dropped.
inline FeatureTensor max_pool2(const FeatureTensor& in) {
  FeatureTensor out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        out.at(c, y, x) = std::max({in.at(c, 2 * y, 2 * x), in.at(c, 2 * y, 2 * x + 1),
                                    in.at(c, 2 * y + 1, 2 * x), in.at(c, 2 * y + 1, 2 * x + 1)});
      }
    }
  }
  return out;
}

/// Convolutional feature extractor over single-channel patches. Built-in
/// (seeded Gaussian) and file-loaded weights share the same topology.
class FeatureExtractor {
 public:
  static FeatureExtractor builtin(std::uint64_t seed) {
    FeatureExtractor fx;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int cin = 1;
    for (std::size_t s = 0; s < kVggChannels.size(); ++s) {
      ConvLayer layer;
      layer.in_channels = cin;
      layer.out_channels = kVggChannels[s];
      layer.pool_after = kVggPoolAfter[s];
      const double scale = std::sqrt(2.0 / (9.0 * cin));
      layer.weight.resize(std::size_t(layer.out_channels) * cin * 9);
      for (float& v : layer.weight) v = float(gauss(rng) * scale);
      layer.bias.assign(layer.out_channels, 0.0f);
      layer.pack();
      fx.layers_.push_back(std::move(layer));
      cin = kVggChannels[s];
    }
    return fx;
  }

  /// Expects conv1..conv8 weights ("convN" or "convN.weight", shape
  /// [out, in, 3, 3]) and biases ("convN.bias", shape [out]).
  static FeatureExtractor from_tensors(const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const NamedTensor& t : tensors) by_name[t.name] = &t;
    auto find = [&](std::initializer_list<std::string> names) -> const NamedTensor* {
      for (const auto& n : names) {
        if (auto it = by_name.find(n); it != by_name.end()) return it->second;
      }
      return nullptr;
    };
    FeatureExtractor fx;
    int cin = 1;
    for (std::size_t s = 0; s < kVggChannels.size(); ++s) {
      const std::string base = "conv" + std::to_string(s + 1);
      const NamedTensor* w = find({base, base + ".weight"});
      const NamedTensor* b = find({base + ".bias"});
      if (!w || !b) throw ValidationError("weight file lacks tensors for " + base);
      const int cout = kVggChannels[s];
      const std::vector<std::uint32_t> want_w = {std::uint32_t(cout), std::uint32_t(cin), 3, 3};
      if (w->dims != want_w) throw ValidationError(base + " weight has the wrong shape");
      if (b->dims != std::vector<std::uint32_t>{std::uint32_t(cout)}) {
        throw ValidationError(base + " bias has the wrong shape");
      }
      ConvLayer layer{cin, cout, w->data, b->data, kVggPoolAfter[s], {}};
      layer.pack();
      fx.layers_.push_back(std::move(layer));
      cin = cout;
    }
    return fx;
  }

  static FeatureExtractor from_config(const FeatureProviderConfig& cfg) {
    if (cfg.kind == FeatureProviderConfig::Kind::builtin) return builtin(cfg.seed);
    return from_tensors(load_tensor_file(cfg.weight_path));
  }

  const std::vector<ConvLayer>& layers() const noexcept { return layers_; }

  /// Weights in the tensor-file layout read by from_tensors().
  std::vector<NamedTensor> to_tensors() const {
    std::vector<NamedTensor> out;
    for (std::size_t s = 0; s < layers_.size(); ++s) {
      const ConvLayer& l = layers_[s];
      const std::string base = "conv" + std::to_string(s + 1);
      out.push_back({base + ".weight",
                     {std::uint32_t(l.out_channels), std::uint32_t(l.in_channels), 3, 3},
                     l.weight});
      out.push_back({base + ".bias", {std::uint32_t(l.out_channels)}, l.bias});
    }
    return out;
  }

  FeatureTensor extract(const Block& patch) const {
    return std::move(extract_batch(std::vector<Block>{patch}).front());
  }

  /// Features of several equally sized patches. Each result is bit-identical
  /// to extracting that patch alone.
  std::vector<FeatureTensor> extract_batch(const std::vector<Block>& patches) const {
    std::vector<FeatureTensor> t;
    for (const Block& p : patches) {
      if (p.width() < kFeatureStride || p.height() < kFeatureStride) {
        throw ValidationError("feature patch " + std::to_string(p.width()) + "x" +
                              std::to_string(p.height()) + " is smaller than 16x16");
      }
      if (p.width() != patches.front().width() || p.height() != patches.front().height()) {
        throw ValidationError("batched patches differ in size");
      }
      t.push_back(normalize_patch(p));
    }
    for (const ConvLayer& layer : layers_) {
      t = conv3x3_relu(t, layer);
      if (layer.pool_after) {
        for (FeatureTensor& x : t) x = max_pool2(x);
      }
    }
    return t;
  }

 private:
  std::vector<ConvLayer> layers_;
};

}  // namespace mvrd
