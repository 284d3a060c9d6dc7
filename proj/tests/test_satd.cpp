#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "mvrd/satd.hpp"
#include "test_util.hpp"

namespace mvrd {
namespace {

// Sylvester H8 by the recursive definition, and a triple-loop H * X * H^T.
int h8(int r, int c) { return (std::popcount(unsigned(r & c)) % 2) ? -1 : 1; }

Block8x8 naive_hadamard(const Block8x8& x) {
  Block8x8 t{}, c{};
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k) t[i][j] += h8(i, k) * x[k][j];
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k) c[i][j] += t[i][k] * h8(j, k);
  return c;
}

double naive_satd(const Block8x8& x) {
  const Block8x8 c = naive_hadamard(x);
  double s = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i || j) s += std::abs(c[i][j]);
  return s / 8.0;
}

Block8x8 random_block(std::mt19937_64& rng, int lo = 0, int hi = 255) {
  std::uniform_int_distribution<int> d(lo, hi);
  Block8x8 b{};
  for (auto& row : b)
    for (int& v : row) v = d(rng);
  return b;
}

TEST(Hadamard, ConstantBlockConcentratesInDc) {
  Block8x8 b{};
  for (auto& row : b) row.fill(7);
  const Block8x8 c = hadamard8(b);
  EXPECT_EQ(c[0][0], 64 * 7);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i || j) EXPECT_EQ(c[i][j], 0);
}

TEST(Hadamard, ImpulseSpreadsEvenly) {
  for (int pos = 0; pos < 64; ++pos) {
    Block8x8 b{};
    b[pos / 8][pos % 8] = 5;
    for (const auto& row : hadamard8(b))
      for (int v : row) EXPECT_EQ(std::abs(v), 5);
  }
}

TEST(Hadamard, MatchesMatrixOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const Block8x8 b = random_block(rng, -255, 255);
    EXPECT_EQ(hadamard8(b), naive_hadamard(b));
  }
}

TEST(BlockSatd, Examples) {
  Block8x8 flat{};
  for (auto& row : flat) row.fill(200);
  EXPECT_EQ(block_satd(flat), 0.0);
  Block8x8 impulse{};
  impulse[0][0] = 8;
  EXPECT_EQ(block_satd(impulse), 63.0);
}

TEST(BlockSatd, OffsetInvariance) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    Block8x8 b = random_block(rng, 0, 200);
    const double before = block_satd(b);
    EXPECT_EQ(before, naive_satd(b));
    const int c = int(rng() % 56);
    for (auto& row : b)
      for (int& v : row) v += c;
    EXPECT_EQ(block_satd(b), before);
  }
}

TEST(CtuSatd, FlatIsZeroAndSingleTileIsAdditive) {
  Frame f(64, 64, std::uint8_t(90));
  EXPECT_EQ(ctu_satd(f, {0, 0, 64, 64}), 0.0);
  std::mt19937_64 rng(23);
  Block8x8 tile = random_block(rng);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f(24 + x, 16 + y) = std::uint8_t(tile[y][x]);
  EXPECT_EQ(ctu_satd(f, {0, 0, 64, 64}), block_satd(tile));
}

TEST(CtuSatd, MatchesTileOracle) {
  std::mt19937_64 rng(24);
  const Frame f = test::random_frame(64, 64, rng);
  double expect = 0;
  for (int ty = 0; ty < 64; ty += 8)
    for (int tx = 0; tx < 64; tx += 8) {
      Block8x8 b{};
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) b[y][x] = f(tx + x, ty + y);
      expect += naive_satd(b);
    }
  EXPECT_EQ(ctu_satd(f, {0, 0, 64, 64}), expect);
}

TEST(CtuSatd, BorderTilesAreEdgeReplicated) {
  std::mt19937_64 rng(25);
  const Frame f = test::random_frame(13, 11, rng);
  Block8x8 b{};
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) b[y][x] = f(std::min(8 + x, 12), std::min(8 + y, 10));
  const double whole = ctu_satd(f, {0, 0, 13, 11});
  double expect = naive_satd(b);
  for (int ty : {0, 8})
    for (int tx : {0, 8}) {
      if (tx == 8 && ty == 8) continue;
      Block8x8 t{};
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) t[y][x] = f(std::min(tx + x, 12), std::min(ty + y, 10));
      expect += naive_satd(t);
    }
  EXPECT_EQ(whole, expect);
}

TEST(CtuSatd, FrameOffsetInvarianceAndZeroIffTilewiseConstant) {
  std::mt19937_64 rng(26);
  Frame f = test::random_frame(128, 96, rng, 0, 180);
  const CtuGrid g = partition_ctus(f, 32);
  const SatdReport a = analyze_satd(f, g);
  for (auto& v : f.samples()) v = std::uint8_t(v + 75);
  const SatdReport b = analyze_satd(f, g);
  EXPECT_EQ(a.per_ctu, b.per_ctu);
  for (double v : a.per_ctu) EXPECT_GT(v, 0.0);

  Frame tiles(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) tiles(x, y) = std::uint8_t((x / 8) * 30 + (y / 8) * 3);
  EXPECT_EQ(ctu_satd(tiles, {0, 0, 64, 64}), 0.0);
}

}  // namespace
}  // namespace mvrd
