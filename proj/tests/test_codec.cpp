#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mvrd/mvrd.hpp"
#include "rdo_oracle.hpp"
#include "test_util.hpp"

namespace mvrd {
namespace {

// Constant feature distance: MSFD no longer tells the modes apart.
class ConstantDistance final : public WindowDistance {
 public:
  double distance(const BlockRegion&, const Block&, const Block&) override { return 0.3; }
};

Plane<double> naive_dct(const Plane<double>& x) {
  const int n = x.width();
  Plane<double> y(n, n);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      double s = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          s += x(j, i) * std::cos(std::numbers::pi * (2 * i + 1) * u / (2.0 * n)) *
               std::cos(std::numbers::pi * (2 * j + 1) * v / (2.0 * n));
      const double cu = u ? std::sqrt(2.0 / n) : std::sqrt(1.0 / n);
      const double cv = v ? std::sqrt(2.0 / n) : std::sqrt(1.0 / n);
      y(v, u) = cu * cv * s;
    }
  return y;
}

TEST(Intra, DcOfUniformReferences) {
  Frame recon(16, 16, std::uint8_t(77));
  const Block p = predict_intra(recon, {4, 4, 4, 4}, IntraMode::dc);
  for (auto v : p.samples()) EXPECT_EQ(v, 77);
}

TEST(Intra, HorizontalAndVerticalCopyReferences) {
  Frame recon(16, 16, std::uint8_t(0));
  for (int i = 0; i < 16; ++i) {
    recon(3, i) = std::uint8_t(10 + i);
    recon(i, 3) = std::uint8_t(100 + i);
  }
  const Block h = predict_intra(recon, {4, 4, 8, 8}, IntraMode::horizontal);
  const Block v = predict_intra(recon, {4, 4, 8, 8}, IntraMode::vertical);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(h(x, y), 10 + 4 + y);
      EXPECT_EQ(v(x, y), 100 + 4 + x);
    }
}

TEST(Intra, TopLeftWithoutReferencesIs128) {
  Frame recon(16, 16, std::uint8_t(3));
  for (int m = 0; m < kIntraModeCount; ++m) {
    const Block p = predict_intra(recon, {0, 0, 8, 8}, IntraMode(m));
    for (auto v : p.samples()) EXPECT_EQ(v, 128);
  }
}

TEST(Intra, PlanarOfFlatReferencesIsFlat) {
  Frame recon(32, 32, std::uint8_t(200));
  const Block p = predict_intra(recon, {8, 8, 16, 16}, IntraMode::planar);
  for (auto v : p.samples()) EXPECT_EQ(v, 200);
}

TEST(Transform, MatchesNaiveDct) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-255, 255);
  for (int n : {4, 8, 16, 32}) {
    Plane<double> x(n, n);
    for (double& v : x.samples()) v = u(rng);
    const Plane<double> got = forward_dct(x), want = naive_dct(x);
    for (std::size_t i = 0; i < got.area(); ++i) EXPECT_NEAR(got.samples()[i], want.samples()[i], 1e-9);
    const Plane<double> back = inverse_dct(got);
    for (std::size_t i = 0; i < x.area(); ++i) EXPECT_NEAR(back.samples()[i], x.samples()[i], 1e-9);
  }
}

TEST(Quantization, ZeroResidualAndLargeStep) {
  for (int qp = 0; qp <= 51; ++qp) {
    const Coefficients c = transform_quantize(Residual(8, 8), qp);
    for (int v : c.samples()) EXPECT_EQ(v, 0);
  }
  Residual r(4, 4);
  r(1, 2) = 3;
  r(0, 0) = -2;
  // |coefficients| <= sum |r| = 5 < step / 2 at QP 51.
  EXPECT_GT(quant_step(51), 10.0);
  const Coefficients c = transform_quantize(r, 51);
  for (int v : c.samples()) EXPECT_EQ(v, 0);
  EXPECT_THROW(transform_quantize(Residual(4, 8), 30), ValidationError);
  EXPECT_THROW(transform_quantize(Residual(6, 6), 30), ValidationError);
}

TEST(Quantization, ReconstructionErrorBound) {
  std::mt19937_64 rng(62);
  std::uniform_int_distribution<int> d(-255, 255);
  for (int qp = 0; qp <= 51; ++qp) {
    for (int n : {4, 8, 16}) {
      Residual r(n, n);
      Plane<double> x(n, n);
      for (std::size_t i = 0; i < r.area(); ++i) x.samples()[i] = r.samples()[i] = d(rng);
      const Coefficients levels = transform_quantize(r, qp);
      const double step = quant_step(qp);
      const Plane<double> oracle = naive_dct(x);
      for (std::size_t i = 0; i < levels.area(); ++i) {
        EXPECT_LE(std::abs(levels.samples()[i] * step - oracle.samples()[i]), step / 2 + 1e-9);
      }
      // Orthonormal inverse: per-sample error <= L2 error <= n * step / 2.
      const Plane<double> back = dequantize_inverse(levels, qp);
      for (std::size_t i = 0; i < back.area(); ++i) {
        EXPECT_LE(std::abs(back.samples()[i] - r.samples()[i]), n * step / 2 + 1e-9);
      }
    }
  }
}

TEST(Entropy, ExpGolombLengths) {
  EXPECT_EQ(ue_length(0), 1);
  EXPECT_EQ(ue_length(1), 3);
  EXPECT_EQ(ue_length(2), 3);
  EXPECT_EQ(ue_length(3), 5);
  EXPECT_EQ(se_length(1), 3);
  EXPECT_EQ(se_length(-1), 3);
  EXPECT_EQ(se_length(3), 5);
}

TEST(Entropy, AllZeroBlockIsOneBit) {
  std::size_t bits = 0;
  entropy_code(Coefficients(8, 8), &bits);
  EXPECT_EQ(bits, 1u);
}

TEST(Entropy, HandBuiltBlockLength) {
  // Zigzag 0 (raster 0) = 3, zigzag 2 (raster 4) = -1, zigzag 5 (raster 2) = 2.
  Coefficients c(4, 4);
  c.samples()[0] = 3;
  c.samples()[4] = -1;
  c.samples()[2] = 2;
  EXPECT_EQ(zigzag_order(4)[2], 4);
  EXPECT_EQ(zigzag_order(4)[5], 2);
  // flag + unary(0) + se(3) | flag + unary(1) + se(-1) | flag + unary(2) + se(2) | end
  const std::size_t want = (1 + 1 + 5) + (1 + 2 + 3) + (1 + 3 + 5) + 1;
  std::size_t bits = 0;
  const auto bytes = entropy_code(c, &bits);
  EXPECT_EQ(bits, want);
  EXPECT_EQ(coefficient_bits(c), want);
  EXPECT_EQ(entropy_decode(bytes, bits, 4), c);
}

TEST(Entropy, RandomSparseRoundTrip) {
  std::mt19937_64 rng(63);
  std::uniform_int_distribution<int> level(-300, 300);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 4 << (trial % 4);
    Coefficients c(n, n);
    for (int& v : c.samples()) v = (rng() % 7 == 0) ? level(rng) : 0;
    std::size_t bits = 0;
    const auto bytes = entropy_code(c, &bits);
    EXPECT_EQ(entropy_decode(bytes, bits, n), c);
  }
}

TEST(Entropy, ZigzagIsAPermutation) {
  for (int n : {4, 8, 16, 32, 64}) {
    std::vector<int> z = zigzag_order(n);
    std::sort(z.begin(), z.end());
    for (int i = 0; i < n * n; ++i) EXPECT_EQ(z[i], i);
  }
}

TEST(Rdo, FlatCtuStaysWhole) {
  Frame orig(64, 64, std::uint8_t(90));
  Frame recon(64, 64, std::uint8_t(0));
  ConstantDistance src;
  const CtuDecision d = rdo_select(orig, recon, 0, 0, 64, 30, RdoConfig{}, src);
  ASSERT_EQ(d.nodes.size(), 1u);
  EXPECT_FALSE(d.nodes[0].split);
  EXPECT_EQ(d.nodes[0].mode, IntraMode::dc);
  int nonzero = 0;
  for (int v : d.nodes[0].levels.samples()) nonzero += v != 0;
  EXPECT_LE(nonzero, 1);
  EXPECT_LE(std::abs(int(recon(10, 10)) - 90), 1);
}

TEST(Rdo, MatchesPartitionEnumeration) {
  std::mt19937_64 rng(64);
  const FeatureExtractor fx = FeatureExtractor::builtin(9);
  for (int trial = 0; trial < 4; ++trial) {
    const Frame orig = test::random_frame(16, 16, rng, 40, 200);
    const int qp = 24 + 6 * trial;
    RdoConfig cfg;
    Frame recon(16, 16, std::uint8_t(0));
    ExtractorDistance src(fx), oracle_src(fx);
    const CtuDecision d = rdo_select(orig, recon, 0, 0, 16, qp, cfg, src);
    int trees = 0;
    EXPECT_EQ(d.cost, test::PartitionOracle(orig, qp, cfg, oracle_src).minimum(&trees)) << trial;
    EXPECT_EQ(trees, 17);
  }
}

TEST(Rdo, BetaShiftsChoiceTowardLowerMse) {
  std::mt19937_64 rng(65);
  ConstantDistance src;
  bool found = false;
  for (int trial = 0; trial < 200 && !found; ++trial) {
    Frame orig = test::random_frame(32, 32, rng, 0, 255);
    const BlockRegion cu{16, 16, 16, 16};
    Frame base = orig;  // neighbours reconstructed perfectly
    std::vector<double> mses;
    std::vector<std::size_t> bits;
    for (int m = 0; m < kIntraModeCount; ++m) {
      const LeafTrial t = code_leaf(orig, base, cu, IntraMode(m), 40);
      mses.push_back(mse(extract_block(orig, cu, false), t.recon));
      bits.push_back(t.coeff_bits);
    }
    const int low_mse = int(std::min_element(mses.begin(), mses.end()) - mses.begin());
    const int low_bits = int(std::min_element(bits.begin(), bits.end()) - bits.begin());
    if (mses[low_bits] <= mses[low_mse]) continue;
    found = true;

    auto choose = [&](double beta) {
      RdoConfig cfg;
      cfg.min_cu = 16;
      cfg.distortion.beta = beta;
      Frame recon = base;
      return rdo_select(orig, recon, 16, 16, 16, 40, cfg, src).nodes.at(0).mode;
    };
    EXPECT_EQ(int(choose(0.0)), low_bits);
    EXPECT_EQ(int(choose(1e6)), low_mse);
  }
  EXPECT_TRUE(found);
}

struct Encoded {
  EncodeResult result;
  Frame input;
};

Encoded encode_random(int w, int h, int ctu, std::optional<double> bpp, std::optional<int> qp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Frame f = test::random_frame(w, h, rng, 30, 220);
  const CtuGrid g = partition_ctus(f, ctu);
  const RoimMap roim = build_roim(g, BoxSet(w, h, {{w / 4, h / 4, w / 2, h / 2}}));
  EncoderConfig cfg;
  cfg.ctu_size = ctu;
  cfg.target_bpp = bpp;
  cfg.qp_anchor = qp;
  ConstantDistance src;
  return {encode_frame(f, roim, cfg, src), f};
}

TEST(Bitstream, RoundTripOddSizes) {
  for (auto [w, h] : {std::pair{16, 16}, std::pair{37, 21}, std::pair{50, 33}, std::pair{3, 70}}) {
    const Encoded e = encode_random(w, h, 16, 1.0, std::nullopt, 66 + w);
    const Frame dec = decode_frame(e.result.bitstream);
    EXPECT_EQ(dec, e.result.recon) << w << "x" << h;
    EXPECT_EQ(dec.width(), w);
    EXPECT_EQ(dec.height(), h);
  }
}

TEST(Bitstream, RoundTripAtQpAnchors) {
  for (int qp : {0, 28, 46, 51}) {
    const Encoded e = encode_random(48, 32, 16, std::nullopt, qp, 67);
    EXPECT_EQ(decode_frame(e.result.bitstream), e.result.recon) << qp;
  }
}

TEST(Bitstream, FileRoundTrip) {
  const Encoded e = encode_random(32, 32, 16, 0.5, std::nullopt, 68);
  test::TempPath p("x.rdmc");
  store_bytes(e.result.bitstream, p.str());
  EXPECT_EQ(load_bytes(p.str()), e.result.bitstream);
}

TEST(Bitstream, DecoderRejectsMalformedInput) {
  const std::vector<std::uint8_t> good = encode_random(32, 32, 16, 0.5, std::nullopt, 69).result.bitstream;
  EXPECT_THROW(decode_frame({}), ValidationError);
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_frame(bad), ValidationError);
  bad = good;
  bad.pop_back();
  EXPECT_THROW(decode_frame(bad), ValidationError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(decode_frame(bad), ValidationError);
  bad = good;
  bad[14] = 17;  // CTU size
  EXPECT_THROW(decode_frame(bad), ValidationError);
  bad = good;
  bad[16] = 60;  // picture QP
  EXPECT_THROW(decode_frame(bad), ValidationError);
  // Random payload corruption must be caught or decode to some picture, never crash.
  std::mt19937_64 rng(70);
  for (int trial = 0; trial < 200; ++trial) {
    bad = good;
    bad[kStreamHeaderBytes + rng() % (bad.size() - kStreamHeaderBytes)] ^= std::uint8_t(1 << (rng() % 8));
    try {
      (void)decode_frame(bad);
    } catch (const ValidationError&) {
    }
  }
}

TEST(Encoder, ConfigErrors) {
  Frame f(32, 32, std::uint8_t(0));
  const RoimMap roim = build_roim(partition_ctus(f, 16), BoxSet(32, 32, {}));
  ConstantDistance src;
  EncoderConfig cfg;
  cfg.ctu_size = 16;
  EXPECT_THROW(encode_frame(f, roim, cfg, src), UsageError);
  cfg.target_bpp = 0.1;
  cfg.qp_anchor = 30;
  EXPECT_THROW(encode_frame(f, roim, cfg, src), UsageError);
  cfg.qp_anchor.reset();
  cfg.target_bpp = -1.0;
  EXPECT_THROW(encode_frame(f, roim, cfg, src), ValidationError);
  cfg.target_bpp = 0.1;
  cfg.ctu_size = 32;
  EXPECT_THROW(encode_frame(f, roim, cfg, src), ValidationError);
  cfg.ctu_size = 16;
  cfg.alpha = -1;
  EXPECT_THROW(encode_frame(f, roim, cfg, src), ValidationError);
  cfg.alpha = 0;
  cfg.constant_qp = true;
  EXPECT_THROW(encode_frame(f, roim, cfg, src), UsageError);
}

TEST(Encoder, StatsAreConsistent) {
  const Encoded e = encode_random(64, 48, 16, 0.8, std::nullopt, 71);
  const EncodeResult& r = e.result;
  ASSERT_EQ(r.ctus.size(), 12u);
  long long sum = 0;
  for (const CtuStats& s : r.ctus) {
    sum += s.actual_bits;
    if (!s.overrun) EXPECT_LE(std::llabs(s.uncoded_target_sum - s.remaining_before), s.uncoded_count);
    const std::optional<int> anchor = s.anchor_index >= 0 ? std::optional<int>(s.anchor_qp) : std::nullopt;
    const std::optional<double> mc =
        s.anchor_index >= 0 ? std::optional<double>(s.anchor_connectivity) : std::nullopt;
    EXPECT_EQ(s.qp_final, constrain_qp(s.qp_est, anchor, mc, s.mean_reference));
  }
  // Header plus CTU payload, padded to whole bytes.
  EXPECT_EQ((sum + 7) / 8 + (long long)kStreamHeaderBytes, (long long)r.bitstream.size());
  EXPECT_EQ(stats_csv(r.ctus).substr(0, 5), "index");
}

}  // namespace
}  // namespace mvrd
