#include <gtest/gtest.h>

#include <cstring>

#include "helpers.hpp"
#include "oracles.hpp"
#include "transweather/error.hpp"
#include "transweather/losses.hpp"
#include "transweather/network.hpp"
#include "transweather/optim.hpp"

using namespace tw;
using testing_support::random_image;
using testing_support::tiny_config;

namespace {

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

}  // namespace

TEST(Encoder, PyramidDimsAtSixtyFour) {
  TransWeather<float> net(NetworkConfig{});
  NoGradGuard no_grad;
  const auto p = net.encode(random_image<float>(1, 1, 64, 64));
  ASSERT_EQ(p.stages.size(), 4u);
  const std::size_t side[] = {32, 16, 8, 4};
  const auto dims = pyramid_dims(net.config());
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(p.stages[i].shape(), (Shape{1, dims[i], side[i], side[i]})) << "stage " << i + 1;
}

TEST(Encoder, PyramidFollowsStrideProduct) {
  const auto cfg = tiny_config();
  TransWeather<float> net(cfg);
  NoGradGuard no_grad;
  for (std::size_t h : {32u, 64u}) {
    const auto p = net.encode(random_image<float>(h, 2, h, 2 * h));
    std::size_t s = 1;
    for (std::size_t i = 0; i < 4; ++i) {
      s *= cfg.stages[i].stride;
      EXPECT_EQ(p.stages[i].dim(2), h / s);
      EXPECT_EQ(p.stages[i].dim(3), 2 * h / s);
    }
  }
}

TEST(Encoder, MergeKernelNotExceedingStrideIsConfigError) {
  ParameterStore<float> store(1);
  EXPECT_THROW(make_overlapped_patch_merge(store, "m", 3, 8, 2, 2), ConfigError);
  auto cfg = tiny_config();
  cfg.stages[1].merge_kernel = 2;
  EXPECT_THROW(TransWeather<float>{cfg}, ConfigError);
}

TEST(Encoder, OverlappedMergeHalvesGrid) {
  ParameterStore<float> store(1);
  const auto merge = make_overlapped_patch_merge(store, "m", 3, 8, 7, 2);
  NoGradGuard no_grad;
  const auto g = merge(random_image<float>(2, 1, 16, 12));
  EXPECT_EQ(g.height, 8u);
  EXPECT_EQ(g.width, 6u);
  EXPECT_EQ(g.tokens.shape(), (Shape{1, 48, 8}));
}

TEST(Encoder, ZeroedResidualBranchesAreIdentity) {
  ParameterStore<float> store(4);
  TransformerBlock<float> block(store, "b", AttentionConfig{8, 2, 2}, 2);
  DwcFfn<float> ffn(store, "f", 8, 2);
  store.fill_zero("b.attn.proj");
  store.fill_zero("b.ffn.fc2");
  store.fill_zero("f.fc2");
  Rng rng(2);
  std::vector<float> d(2 * 16 * 8);
  for (auto& v : d) v = static_cast<float>(rng.uniform(-1, 1));
  const Tensor<float> x({2, 16, 8}, d);
  NoGradGuard no_grad;
  EXPECT_TRUE(bit_equal(block(x, 4, 4), x));
  EXPECT_TRUE(bit_equal(ffn(x, 4, 4), x));
}

TEST(Encoder, QuadrantSplitRoundTrip) {
  const auto x = random_image<float>(9, 2, 6, 8);
  const auto q = split_quadrants(x);
  ASSERT_EQ(q.shape(), (Shape{8, 3, 3, 4}));
  // Quadrant-major: entry 2 (= TR quadrant of batch 0) starts at x[0,0,0,4].
  EXPECT_EQ(q.data()[2 * 3 * 3 * 4], x.data()[4]);
  // Entry 7 (= BR quadrant of batch 1) starts at x[1,0,3,4].
  EXPECT_EQ(q.data()[7 * 3 * 3 * 4], x.data()[3 * 6 * 8 + 3 * 8 + 4]);
  EXPECT_TRUE(bit_equal(merge_quadrants(q), x));
  EXPECT_THROW(split_quadrants(random_image<float>(1, 1, 5, 4)), DimensionError);
}

TEST(Encoder, InputNotDivisibleIsConfigError) {
  TransWeather<float> net(tiny_config());
  EXPECT_EQ(net.config().required_divisor(), 32u);
  try {
    net.restore(random_image<float>(1, 1, 48, 32));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos);
  }
  auto cfg = tiny_config();
  cfg.intra_pt = false;
  EXPECT_EQ(cfg.required_divisor(), 16u);
  NoGradGuard no_grad;
  EXPECT_EQ(TransWeather<float>(cfg).restore(random_image<float>(1, 1, 48, 32)).shape(), (Shape{1, 3, 48, 32}));
}

TEST(Encoder, IntraPtWithoutHierarchyIsRejected) {
  auto cfg = tiny_config();
  cfg.hierarchical = false;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Network, RestorePreservesDims) {
  TransWeather<float> net(NetworkConfig{});
  NoGradGuard no_grad;
  for (std::size_t h : {32u, 64u, 96u}) {
    const auto y = net.restore(random_image<float>(h, 1, h, h));
    EXPECT_EQ(y.shape(), (Shape{1, 3, h, h}));
    for (float v : y.data()) {
      ASSERT_GT(v, -1.0f);
      ASSERT_LT(v, 1.0f);
    }
  }
}

TEST(Network, OutputsAreFiniteAndDeterministic) {
  const auto x = random_image<float>(5, 2, 32, 32);
  NoGradGuard no_grad;
  const auto a = TransWeather<float>(tiny_config(11)).restore(x);
  const auto b = TransWeather<float>(tiny_config(11)).restore(x);
  EXPECT_TRUE(bit_equal(a, b));
  for (float v : a.data()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_FALSE(bit_equal(a, TransWeather<float>(tiny_config(12)).restore(x)));
}

TEST(Network, BatchRowsAreIndependent) {
  TransWeather<float> net(tiny_config());
  const auto x = random_image<float>(6, 2, 32, 32);
  NoGradGuard no_grad;
  const auto both = net.restore(x);
  const auto first = net.restore(slice(x, 0, 0, 1));
  for (std::size_t i = 0; i < first.numel(); ++i) EXPECT_NEAR(both.data()[i], first.data()[i], 1e-6);
}

TEST(Decoder, ZeroUpdatesLeaveQueriesUntouched) {
  TransWeather<float> net(tiny_config());
  net.parameters().fill_zero("decoder.block0.attn.proj");
  net.parameters().fill_zero("decoder.block0.fc2");
  NoGradGuard no_grad;
  const auto pyramid = net.encode(random_image<float>(1, 2, 32, 32));
  const auto task = net.decode(pyramid);
  const auto q = net.parameters().get("decoder.queries");
  ASSERT_EQ(task.decoded.shape(), (Shape{2, 4, 32}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < q.numel(); ++i) EXPECT_EQ(task.decoded.data()[b * q.numel() + i], q.data()[i]);
}

TEST(Decoder, AttentionRowsSumToOne) {
  TransWeather<float> net(tiny_config());
  NoGradGuard no_grad;
  const auto task = net.decode(net.encode(random_image<float>(1, 1, 64, 64)));
  const std::size_t n4 = task.attention.dim(3);
  EXPECT_EQ(n4, 16u);
  for (std::size_t row = 0; row < task.attention.numel() / n4; ++row) {
    double s = 0;
    for (std::size_t j = 0; j < n4; ++j) s += task.attention.data()[row * n4 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Decoder, SingleQueryPoolsToItself) {
  auto cfg = tiny_config();
  cfg.num_queries = 1;
  TransWeather<float> net(cfg);
  NoGradGuard no_grad;
  const auto task = net.decode(net.encode(random_image<float>(1, 1, 32, 32)));
  EXPECT_TRUE(bit_equal(task.pooled, reshape(task.decoded, Shape{1, 32})));
}

TEST(Decoder, ZeroFusionIsBitExact) {
  TransWeather<float> net(tiny_config());
  net.parameters().fill_zero("fusion");
  NoGradGuard no_grad;
  const auto t = net.trace(random_image<float>(1, 1, 32, 32));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(bit_equal(t.fused.stages[i], t.pyramid.stages[i]));
}

TEST(Decoder, QueriesReceiveGradientAndMove) {
  TransWeather<float> net(tiny_config());
  auto& store = net.parameters();
  const auto x = random_image<float>(1, 1, 32, 32);
  const auto gt = random_image<float>(2, 1, 32, 32);
  store.zero_grad();
  backward(smooth_l1(net.restore(x), gt));
  double norm = 0;
  for (float g : store.get("decoder.queries").grad()) norm += double(g) * g;
  EXPECT_GT(norm, 0.0);
  const auto q = store.get("decoder.queries");
  const std::vector<float> before(q.data().begin(), q.data().end());
  Adam adam(store);
  adam.step(store, 2e-4);
  EXPECT_NE(before, std::vector<float>(q.data().begin(), q.data().end()));
}

TEST(Tail, SkipMismatchesAreReported) {
  ParameterStore<float> store(1);
  ProjectionTail<float> tail(store, "tail", {8, 16, 16, 32}, {16, 8, 8, 3});
  FeaturePyramid<float> p;
  p.stages = {Tensor<float>::zeros({1, 8, 16, 16}), Tensor<float>::zeros({1, 16, 8, 8}),
              Tensor<float>::zeros({1, 16, 3, 3}), Tensor<float>::zeros({1, 32, 2, 2})};
  EXPECT_THROW(tail(p), ContractError);
  p.stages[2] = Tensor<float>::zeros({1, 4, 4, 4});
  EXPECT_THROW(tail(p), DimensionError);
  p.stages[2] = Tensor<float>::zeros({1, 16, 4, 4});
  NoGradGuard no_grad;
  EXPECT_EQ(tail(p).shape(), (Shape{1, 3, 32, 32}));
  p.stages.pop_back();
  EXPECT_THROW(tail(p), ContractError);
}

TEST(Ablation, ParameterCountLadderIncreases) {
  NetworkConfig base, he, intra, full;
  base.hierarchical = base.intra_pt = base.weather_queries = false;
  he.intra_pt = he.weather_queries = false;
  intra.weather_queries = false;
  const auto n = [](const NetworkConfig& c) { return TransWeather<float>(c).parameters().parameter_count(); };
  EXPECT_LT(n(base), n(he));
  EXPECT_LT(n(he), n(intra));
  EXPECT_LT(n(intra), n(full));
  for (const auto* c : {&base, &he, &intra, &full}) EXPECT_EQ(n(*c), oracle::parameter_count(*c));
}

TEST(Ablation, BaseVariantRestoresFullSize) {
  NetworkConfig base;
  base.hierarchical = base.intra_pt = base.weather_queries = false;
  TransWeather<float> net(base);
  EXPECT_FALSE(net.has_decoder());
  NoGradGuard no_grad;
  EXPECT_EQ(net.encode(random_image<float>(1, 1, 64, 32)).stages.size(), 1u);
  EXPECT_EQ(net.restore(random_image<float>(1, 1, 64, 32)).shape(), (Shape{1, 3, 64, 32}));
}

TEST(Ablation, ZeroInitIntraPtEqualsDisabled) {
  auto on = tiny_config();
  auto off = on;
  off.intra_pt = false;
  TransWeather<float> with(on), without(off);
  testing_support::zero_matching(with.parameters(), ".intra.");
  EXPECT_EQ(testing_support::copy_shared(with.parameters(), without.parameters()), without.parameters().size());
  const auto x = random_image<float>(8, 2, 64, 64);
  NoGradGuard no_grad;
  EXPECT_TRUE(bit_equal(with.restore(x), without.restore(x)));
}
