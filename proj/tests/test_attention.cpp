#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <numeric>

#include "oracles.hpp"
#include "transweather/attention.hpp"
#include "transweather/error.hpp"

using namespace tw;

namespace {

Tensor<float> random_tokens(std::uint64_t seed, std::size_t b, std::size_t n, std::size_t c) {
  Rng rng(seed);
  std::vector<float> d(b * n * c);
  for (auto& v : d) v = static_cast<float>(rng.uniform(-1, 1));
  return Tensor<float>(Shape{b, n, c}, std::move(d));
}

std::vector<double> as_double(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

class NaiveEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(NaiveEquivalence, ReductionOneMatchesOracle) {
  const std::size_t n = GetParam(), c = 16, heads = 4;
  ParameterStore<float> store(9);
  EfficientSelfAttention<float> attn(store, "attn", AttentionConfig{c, heads, 1});
  // The recovery map starts as the identity at R = 1.
  const auto reduce = store.get("attn.reduce.weight");
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) ASSERT_EQ(reduce.data()[i * c + j], i == j ? 1.0f : 0.0f);
  // Non-zero output bias so the oracle exercises it.
  auto bias = store.get("attn.proj.bias");
  for (std::size_t j = 0; j < c; ++j) bias.data()[j] = 0.01f * static_cast<float>(j);

  const auto x = random_tokens(n, 2, n, c);
  NoGradGuard no_grad;
  const auto y = attn(x);
  for (std::size_t b = 0; b < 2; ++b) {
    const std::vector<double> xb(x.data().begin() + b * n * c, x.data().begin() + (b + 1) * n * c);
    const auto ref = oracle::naive_attention(xb, n, c, heads, as_double(store.get("attn.q.weight")),
                                             as_double(store.get("attn.k.weight")),
                                             as_double(store.get("attn.v.weight")),
                                             as_double(store.get("attn.proj.weight")), as_double(bias));
    for (std::size_t i = 0; i < n * c; ++i) EXPECT_NEAR(y.data()[b * n * c + i], ref[i], 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(TokenCounts, NaiveEquivalence, ::testing::Values(4, 16, 64));

TEST(SelfAttention, SingleTokenPassesValueThroughProjection) {
  ParameterStore<float> store(1);
  EfficientSelfAttention<float> attn(store, "a", AttentionConfig{8, 2, 1});
  const auto x = random_tokens(3, 1, 1, 8);
  NoGradGuard no_grad;
  const auto r = attn.forward(x);
  for (float w : r.weights.data()) EXPECT_EQ(w, 1.0f);
  const auto v = linear(x, store.get("a.v.weight"));
  const auto expect = linear(v, store.get("a.proj.weight"), store.get("a.proj.bias"));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.output.data()[i], expect.data()[i], 1e-7);
}

TEST(SelfAttention, IdenticalKeysGiveUniformWeights) {
  ParameterStore<float> store(2);
  EfficientSelfAttention<float> attn(store, "a", AttentionConfig{8, 2, 2});
  // Every token identical -> every reduced key identical.
  std::vector<float> row(8);
  Rng rng(4);
  for (auto& v : row) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> d;
  for (int i = 0; i < 12; ++i) d.insert(d.end(), row.begin(), row.end());
  NoGradGuard no_grad;
  const auto r = attn.forward(Tensor<float>({1, 12, 8}, d));
  ASSERT_EQ(r.weights.shape(), (Shape{1, 2, 12, 6}));
  for (float w : r.weights.data()) EXPECT_NEAR(w, 1.0 / 6, 1e-6);
}

TEST(SelfAttention, ReductionShrinksKeyCountAndRowsSumToOne) {
  ParameterStore<float> store(5);
  EfficientSelfAttention<float> attn(store, "a", AttentionConfig{16, 4, 4});
  NoGradGuard no_grad;
  const auto r = attn.forward(random_tokens(8, 2, 64, 16));
  EXPECT_EQ(r.output.shape(), (Shape{2, 64, 16}));
  ASSERT_EQ(r.weights.shape(), (Shape{2, 4, 64, 16}));
  for (std::size_t row = 0; row < 2 * 4 * 64; ++row) {
    double s = 0;
    for (std::size_t j = 0; j < 16; ++j) s += r.weights.data()[row * 16 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  // 8x8 stage grid of queries -> weights reshape to 64 = 8 * 8 without remainder.
  EXPECT_EQ(r.weights.dim(2), 8u * 8u);
}

TEST(SelfAttention, IndivisibleTokenCountIsConfigError) {
  ParameterStore<float> store(5);
  EfficientSelfAttention<float> attn(store, "a", AttentionConfig{8, 2, 4});
  EXPECT_THROW(attn(random_tokens(1, 1, 10, 8)), ConfigError);
  EXPECT_THROW(AttentionConfig({10, 3, 1}).validate(), ConfigError);
  EXPECT_THROW(AttentionConfig({8, 2, 0}).validate(), ConfigError);
}

TEST(ScaledDotProduct, JointKeyValuePermutationLeavesOutputUnchanged) {
  const std::size_t n = 10, d = 4;
  const auto q = random_tokens(1, 1, 3, d), k = random_tokens(2, 1, n, d), v = random_tokens(3, 1, n, d);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(6);
  rng.shuffle(perm.begin(), perm.end());
  auto permute_rows = [&](const Tensor<float>& t) {
    std::vector<float> out(t.numel());
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(t.data().begin() + perm[i] * d, d, out.begin() + i * d);
    return Tensor<float>(t.shape(), out);
  };
  NoGradGuard no_grad;
  const auto a = scaled_dot_product(q, k, v).output;
  const auto b = scaled_dot_product(q, permute_rows(k), permute_rows(v)).output;
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
}

TEST(CrossAttention, SingleQuerySingleToken) {
  ParameterStore<float> store(7);
  CrossAttention<float> attn(store, "x", AttentionConfig{8, 2, 1});
  const auto q = random_tokens(1, 1, 1, 8), m = random_tokens(2, 1, 1, 8);
  NoGradGuard no_grad;
  const auto r = attn.forward(q, m);
  for (float w : r.weights.data()) EXPECT_EQ(w, 1.0f);
  const auto expect = linear(linear(m, store.get("x.v.weight")), store.get("x.proj.weight"), store.get("x.proj.bias"));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.output.data()[i], expect.data()[i], 1e-7);
}

TEST(CrossAttention, DuplicateQueriesGiveDuplicateRows) {
  ParameterStore<float> store(8);
  CrossAttention<float> attn(store, "x", AttentionConfig{8, 2, 1});
  const auto one = random_tokens(3, 1, 1, 8);
  const auto q = concat<float>({one, one}, 1);
  NoGradGuard no_grad;
  const auto r = attn.forward(q, random_tokens(4, 1, 6, 8));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(r.output.data()[i], r.output.data()[8 + i]);
  for (std::size_t row = 0; row < r.weights.numel() / 6; ++row) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += r.weights.data()[row * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(CrossAttention, EmbedMismatchIsDimensionError) {
  ParameterStore<float> store(8);
  CrossAttention<float> attn(store, "x", AttentionConfig{8, 2, 1});
  EXPECT_THROW(attn.forward(random_tokens(1, 1, 2, 8), random_tokens(1, 1, 2, 4)), DimensionError);
}

TEST(SelfAttention, ReductionFourIsFasterAtLongSequences) {
  const std::size_t n = 1024, c = 32;
  const auto x = random_tokens(1, 1, n, c);
  auto median_ms = [&](std::size_t r) {
    ParameterStore<float> store(1);
    EfficientSelfAttention<float> attn(store, "a", AttentionConfig{c, 1, r});
    NoGradGuard no_grad;
    std::vector<double> times;
    for (int i = 0; i < 5; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto y = attn(x);
      times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[2];
  };
  const double full = median_ms(1), reduced = median_ms(4);
  RecordProperty("r1_ms", std::to_string(full));
  RecordProperty("r4_ms", std::to_string(reduced));
  EXPECT_LT(reduced, full);
}
