#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mvrd/features.hpp"
#include "test_util.hpp"

namespace mvrd {
namespace {

FeatureTensor random_tensor(std::mt19937_64& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  FeatureTensor t(c, h, w);
  for (float& v : t.data) v = float(u(rng));
  return t;
}

ConvLayer random_layer(std::mt19937_64& rng, int cin, int cout) {
  std::normal_distribution<double> g(0.0, 0.3);
  ConvLayer l;
  l.in_channels = cin;
  l.out_channels = cout;
  l.weight.resize(std::size_t(cout) * cin * 9);
  for (float& v : l.weight) v = float(g(rng));
  l.bias.resize(cout);
  for (float& v : l.bias) v = float(g(rng));
  l.pack();
  return l;
}

// Direct zero-padded 3x3 convolution in double.
FeatureTensor naive_conv(const FeatureTensor& in, const ConvLayer& l) {
  FeatureTensor out(l.out_channels, in.height, in.width);
  for (int o = 0; o < l.out_channels; ++o)
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double s = l.bias[o];
        for (int c = 0; c < l.in_channels; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || xx < 0 || yy >= in.height || xx >= in.width) continue;
              s += double(l.weight[((std::size_t(o) * l.in_channels + c) * 3 + dy + 1) * 3 + dx + 1]) *
                   in.at(c, yy, xx);
            }
        out.at(o, y, x) = float(std::max(s, 0.0));
      }
  return out;
}

TEST(FeatureDistance, AnalyticCases) {
  FeatureTensor a(3, 1, 1), b(3, 1, 1);
  a.data = {1, 0, 0};
  b.data = {0, 1, 0};
  EXPECT_EQ(feature_distance(a, a), 0.0);
  EXPECT_EQ(feature_distance(a, b), 1.0);
  b.data = {-1, 0, 0};
  EXPECT_EQ(feature_distance(a, b), 2.0);
  a.data = {0.5f, -2.0f, 3.0f};
  b.data = {-0.5f, 2.0f, -3.0f};
  EXPECT_EQ(feature_distance(a, b), 2.0);
}

TEST(FeatureDistance, ZeroTensors) {
  FeatureTensor z(2, 2, 2), a(2, 2, 2);
  a.data[3] = 1.0f;
  EXPECT_EQ(feature_distance(z, z), 0.0);
  EXPECT_EQ(feature_distance(z, a), 1.0);
  EXPECT_EQ(feature_distance(a, z), 1.0);
}

TEST(FeatureDistance, ShapeMismatchThrows) {
  EXPECT_THROW(feature_distance(FeatureTensor(1, 2, 2), FeatureTensor(2, 1, 2)), ValidationError);
}

TEST(FeatureDistanceProperties, BoundsSymmetryScaleInvariance) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + int(rng() % 64);
    const FeatureTensor a = random_tensor(rng, n, 1, 1);
    const FeatureTensor b = random_tensor(rng, n, 1, 1);
    const double d = feature_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
    EXPECT_EQ(d, feature_distance(b, a));
    // Power-of-two scaling is exact in float; arbitrary scaling rounds.
    FeatureTensor a2 = a, as = a;
    const double s = scale(rng);
    for (float& v : a2.data) v *= 4.0f;
    for (float& v : as.data) v = float(v * s);
    EXPECT_EQ(feature_distance(a2, b), d);
    EXPECT_LE(std::abs(feature_distance(as, b) - d), 1e-6 * std::max(1.0, d));
  }
}

TEST(TensorFile, RoundTrip) {
  std::mt19937_64 rng(42);
  std::vector<NamedTensor> ts;
  for (int i = 0; i < 5; ++i) {
    NamedTensor t{"t" + std::to_string(i), {2, std::uint32_t(i + 1), 3}, {}};
    const FeatureTensor r = random_tensor(rng, 1, 1, int(t.element_count()));
    t.data = r.data;
    ts.push_back(t);
  }
  ts.push_back({"scalar", {}, {7.5f}});
  EXPECT_EQ(decode_tensor_file(encode_tensor_file(ts)), ts);

  test::TempPath p("w.ften");
  store_tensor_file(ts, p.str());
  EXPECT_EQ(load_tensor_file(p.str()), ts);
}

TEST(TensorFile, Errors) {
  const std::vector<NamedTensor> ts{{"conv1.weight", {2, 2}, {1, 2, 3, 4}}};
  const std::string good = encode_tensor_file(ts);

  try {
    decode_tensor_file(good.substr(0, good.size() - 3));
    FAIL() << "truncated file accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1.weight"), std::string::npos) << e.what();
  }

  std::string nan = good;
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  for (int i = 0; i < 4; ++i) nan[nan.size() - 4 + i] = char((bits >> (8 * i)) & 0xFF);
  EXPECT_THROW(decode_tensor_file(nan), ValidationError);

  EXPECT_THROW(decode_tensor_file("FTEX" + good.substr(4)), ValidationError);
  EXPECT_THROW(decode_tensor_file(good + "x"), ValidationError);
  std::string version = good;
  version[4] = 9;
  EXPECT_THROW(decode_tensor_file(version), ValidationError);
  EXPECT_THROW(encode_tensor_file({{"bad", {3}, {1, 2}}}), ValidationError);
  EXPECT_THROW(load_tensor_file("/nonexistent/w.ften"), IoError);
}

TEST(Conv, MatchesDirectConvolution) {
  std::mt19937_64 rng(43);
  for (auto [cin, cout, h, w] : {std::array{1, 64, 16, 16}, std::array{3, 40, 11, 13}, std::array{70, 33, 5, 7},
                                 std::array{300, 9, 2, 3}}) {
    const ConvLayer l = random_layer(rng, cin, cout);
    const FeatureTensor in = random_tensor(rng, cin, h, w);
    const FeatureTensor got = conv3x3_relu(in, l);
    const FeatureTensor want = naive_conv(in, l);
    ASSERT_TRUE(got.same_shape(want));
    double scale = 0.0;
    for (float v : want.data) scale = std::max(scale, double(std::abs(v)));
    for (std::size_t i = 0; i < got.data.size(); ++i) {
      EXPECT_NEAR(got.data[i], want.data[i], 1e-5 * std::max(1.0, scale)) << cin << "x" << cout << " at " << i;
    }
  }
}

TEST(Conv, BatchedEqualsSingleBitForBit) {
  std::mt19937_64 rng(44);
  const ConvLayer l = random_layer(rng, 20, 37);
  std::vector<FeatureTensor> in;
  for (int i = 0; i < 5; ++i) in.push_back(random_tensor(rng, 20, 6, 9));
  const std::vector<FeatureTensor> batched = conv3x3_relu(in, l);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(batched[i], conv3x3_relu(in[i], l));
}

TEST(MaxPool, Halves) {
  FeatureTensor t(1, 4, 4);
  for (int i = 0; i < 16; ++i) t.data[i] = float(i);
  const FeatureTensor p = max_pool2(t);
  EXPECT_EQ(p.height, 2);
  EXPECT_EQ(p.width, 2);
  EXPECT_EQ(p.data, (std::vector<float>{5, 7, 13, 15}));
}

TEST(Extractor, OutputShapes) {
  const FeatureExtractor fx = FeatureExtractor::builtin(7);
  std::mt19937_64 rng(45);
  const FeatureTensor a = fx.extract(test::random_frame(16, 16, rng));
  EXPECT_EQ(a.channels, 512);
  EXPECT_EQ(a.height, 1);
  EXPECT_EQ(a.width, 1);
  const FeatureTensor b = fx.extract(test::random_frame(48, 32, rng));
  EXPECT_EQ(b.channels, 512);
  EXPECT_EQ(b.height, 2);
  EXPECT_EQ(b.width, 3);
  EXPECT_THROW(fx.extract(test::random_frame(15, 32, rng)), ValidationError);
}

TEST(Extractor, DeterministicAndBatchInvariant) {
  std::mt19937_64 rng(46);
  std::vector<Block> patches;
  for (int i = 0; i < 4; ++i) patches.push_back(test::random_frame(24, 24, rng));
  const FeatureExtractor a = FeatureExtractor::builtin(11), b = FeatureExtractor::builtin(11);
  const auto batch = a.extract_batch(patches);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(batch[i], a.extract(patches[i]));
    EXPECT_EQ(batch[i], b.extract(patches[i]));
  }
  EXPECT_NE(FeatureExtractor::builtin(12).extract(patches[0]), batch[0]);
  patches.push_back(test::random_frame(32, 24, rng));
  EXPECT_THROW(a.extract_batch(patches), ValidationError);
}

TEST(Extractor, TensorFileRoundTrip) {
  const FeatureExtractor fx = FeatureExtractor::builtin(13);
  test::TempPath p("vgg.ften");
  store_tensor_file(fx.to_tensors(), p.str());
  FeatureProviderConfig cfg;
  cfg.kind = FeatureProviderConfig::Kind::weight_file;
  cfg.weight_path = p.str();
  const FeatureExtractor back = FeatureExtractor::from_config(cfg);
  std::mt19937_64 rng(47);
  const Block patch = test::random_frame(32, 32, rng);
  EXPECT_EQ(back.extract(patch), fx.extract(patch));
}

TEST(Extractor, AcceptsBareWeightNamesAndRejectsBadShapes) {
  std::vector<NamedTensor> ts = FeatureExtractor::builtin(14).to_tensors();
  for (NamedTensor& t : ts) {
    if (t.name.ends_with(".weight")) t.name.resize(t.name.size() - 7);
  }
  EXPECT_NO_THROW(FeatureExtractor::from_tensors(ts));

  std::vector<NamedTensor> missing(ts.begin(), ts.end() - 1);
  EXPECT_THROW(FeatureExtractor::from_tensors(missing), ValidationError);

  std::vector<NamedTensor> shape = ts;
  shape[0].dims = {64, 3, 3, 3};
  shape[0].data.resize(64 * 27);
  EXPECT_THROW(FeatureExtractor::from_tensors(shape), ValidationError);
}

}  // namespace
}  // namespace mvrd
