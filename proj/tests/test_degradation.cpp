#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "transweather/degradation.hpp"
#include "transweather/error.hpp"
#include "transweather/image.hpp"
#include "transweather/metrics.hpp"
#include "transweather/rng.hpp"

using namespace tw;
namespace fs = std::filesystem;

namespace {

Image random_image(Rng& rng, std::size_t c, std::size_t h, std::size_t w, double lo = 0, double hi = 1) {
  Image img(c, h, w);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tw_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Single-channel maps broadcast over the colour channels.
double map_value(const Image& m, std::size_t c, std::size_t i) {
  return m.channels == 1 ? m.data[i] : m.data[c * m.plane() + i];
}

}  // namespace

TEST(Apply, HandArithmetic) {
  const Image b(3, 2, 2, 0.5f);
  EXPECT_FLOAT_EQ(apply_raindrop(b, Image(1, 2, 2, 0.2f), Image(3, 2, 2, 0.15f)).data[0], 0.55f);
  // 0.5 * (0.4 + 0.2) + 0.5 * 0.8
  const auto fog = apply_rain_fog(Image(3, 2, 2, 0.4f), Image(1, 2, 2, 0.5f), {Image(3, 2, 2, 0.2f)},
                                  {0.8f, 0.8f, 0.8f});
  EXPECT_FLOAT_EQ(fog.data[0], 0.7f);
  // 0.5 * 1 + 0.5 * 0.2
  EXPECT_FLOAT_EQ(apply_snow(Image(3, 2, 2, 0.2f), Image(1, 2, 2, 0.5f), Image(3, 2, 2, 1.0f)).data[0], 0.6f);
}

TEST(Apply, LimitCasesAreExact) {
  Rng rng(1);
  const auto b = random_image(rng, 3, 8, 8);
  const auto r = random_image(rng, 3, 8, 8);
  const Image zeros1(1, 8, 8, 0.0f), ones1(1, 8, 8, 1.0f), zeros3(3, 8, 8, 0.0f);
  EXPECT_EQ(apply_raindrop(b, zeros1, zeros3), b);
  EXPECT_EQ(apply_rain_fog(b, ones1, {zeros3}, {0.7f, 0.8f, 0.9f}), b);
  const std::array<float, 3> airlight{0.7f, 0.8f, 0.9f};
  const auto fog = apply_rain_fog(b, zeros1, {r}, airlight);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(fog.data[c * 64 + i], airlight[c]);
  EXPECT_EQ(apply_snow(b, zeros1, r), b);
  EXPECT_EQ(apply_snow(b, ones1, r), r);
}

TEST(Apply, ClampOnlyWhenRequested) {
  const Image b(3, 1, 1, 0.9f), m(1, 1, 1, 0.0f), r(3, 1, 1, 0.5f);
  EXPECT_EQ(apply_raindrop(b, m, r).data[0], 1.0f);
  EXPECT_FLOAT_EQ(apply_raindrop(b, m, r, false).data[0], 1.4f);
}

TEST(Apply, WithinOneUlpOfDoubleOracle) {
  Rng rng(2024);
  std::int64_t worst = 0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t h = 4 + rng.below(6), w = 4 + rng.below(6);
    const auto b = random_image(rng, 3, h, w);
    const auto m = random_image(rng, 1, h, w), r = random_image(rng, 3, h, w, 0, 0.5);
    const auto t = random_image(rng, 1, h, w);
    std::vector<Image> streaks;
    for (std::size_t s = 0, ns = 1 + rng.below(3); s < ns; ++s) streaks.push_back(random_image(rng, 3, h, w, 0, 0.3));
    const std::array<float, 3> a{float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
    const auto flakes = random_image(rng, 3, h, w, 0.7, 1.0);

    const auto drop = apply_raindrop(b, m, r, false);
    const auto fog = apply_rain_fog(b, t, streaks, a, false);
    const auto snow = apply_snow(b, m, flakes, false);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < h * w; ++i) {
        const std::size_t k = c * h * w + i;
        const double bv = b.data[k], mv = map_value(m, c, i), tv = map_value(t, c, i);
        double rain = 0;
        for (const auto& s : streaks) rain += s.data[k];
        const double e_drop = (1 - mv) * bv + r.data[k];
        const double e_fog = tv * (bv + rain) + (1 - tv) * a[c];
        const double e_snow = mv * flakes.data[k] + (1 - mv) * bv;
        worst = std::max({worst, oracle::ulp_distance(drop.data[k], float(e_drop)),
                          oracle::ulp_distance(fog.data[k], float(e_fog)),
                          oracle::ulp_distance(snow.data[k], float(e_snow))});
      }
    }
  }
  EXPECT_LE(worst, 1);
}

TEST(Apply, RaindropInvertsWhereMaskBelowOne) {
  Rng rng(3);
  const auto b = random_image(rng, 3, 6, 6);
  const auto m = random_image(rng, 1, 6, 6, 0, 0.9), r = random_image(rng, 3, 6, 6, 0, 0.1);
  const auto i = apply_raindrop(b, m, r, false);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 36; ++p) {
      const double back = (double(i.data[c * 36 + p]) - r.data[c * 36 + p]) / (1 - m.data[p]);
      EXPECT_NEAR(back, b.data[c * 36 + p], 1e-5);
    }
}

TEST(Apply, Errors) {
  const Image b(3, 4, 4, 0.5f);
  EXPECT_THROW(apply_raindrop(b, Image(1, 4, 5, 0.f), Image(3, 4, 4, 0.f)), DimensionError);
  EXPECT_THROW(apply_raindrop(b, Image(1, 4, 4, 1.5f), Image(3, 4, 4, 0.f)), ContractError);
  EXPECT_THROW(apply_rain_fog(b, Image(1, 4, 4, 0.5f), {}, {0, 0, 0}), ContractError);
  EXPECT_THROW(apply_snow(b, Image(1, 4, 4, -0.1f), Image(3, 4, 4, 1.f)), ContractError);
}

class PerKind : public ::testing::TestWithParam<WeatherKind> {};

TEST_P(PerKind, FaintWeatherBarelyChangesScene) {
  const auto clean = make_clean_scene(5, 64, 64);
  const auto p = gen_params(GetParam(), 9, 0.01, 64, 64);
  EXPECT_GT(psnr(clean, apply(clean, p)), 40.0);
}

TEST_P(PerKind, CoverageGrowsWithIntensity) {
  double last = -1;
  for (double s : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double c = coverage(gen_params(GetParam(), 17, s, 64, 64));
    EXPECT_GE(c, last) << "intensity " << s;
    last = c;
  }
  EXPECT_GT(last, 0.0);
}

TEST_P(PerKind, SameSeedSameParams) {
  const auto clean = make_clean_scene(6, 32, 32);
  const auto a = apply(clean, gen_params(GetParam(), 42, 0.7, 32, 32));
  EXPECT_EQ(a, apply(clean, gen_params(GetParam(), 42, 0.7, 32, 32)));
  EXPECT_NE(a, apply(clean, gen_params(GetParam(), 43, 0.7, 32, 32)));
  for (float v : a.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST_P(PerKind, IntensityOutOfRangeIsInputError) {
  EXPECT_THROW(gen_params(GetParam(), 1, 0.0, 8, 8), InputError);
  EXPECT_THROW(gen_params(GetParam(), 1, 1.5, 8, 8), InputError);
}

INSTANTIATE_TEST_SUITE_P(Kinds, PerKind, ::testing::ValuesIn(kAllWeatherKinds),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Kinds, ParseRoundTripAndUnknown) {
  for (auto k : kAllWeatherKinds) EXPECT_EQ(parse_weather_kind(to_string(k)), k);
  EXPECT_THROW(parse_weather_kind("hail"), InputError);
}

TEST(Scenes, AllKindsInUnitRange) {
  for (auto k : {SceneKind::kGradient, SceneKind::kBlobs, SceneKind::kChecker}) {
    const auto s = make_clean_scene(k, 3, 16, 24);
    EXPECT_EQ(s.channels, 3u);
    EXPECT_EQ(s.width, 24u);
    for (float v : s.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Mix, AllocateCounts) {
  EXPECT_EQ(allocate_counts(6, WeatherMix::uniform()), (std::array<std::size_t, 3>{2, 2, 2}));
  const auto c = allocate_counts(7, WeatherMix::uniform());
  EXPECT_EQ(c[0] + c[1] + c[2], 7u);
  const auto p = allocate_counts(19069, WeatherMix::paper());
  EXPECT_EQ(p, (std::array<std::size_t, 3>{1069, 9000, 9000}));
  const auto q = allocate_counts(1000, WeatherMix::paper());
  EXPECT_NEAR(q[0] / 1000.0, 0.056, 0.001);
  EXPECT_NEAR(q[1] / 1000.0, 0.472, 0.001);
  EXPECT_NEAR(q[2] / 1000.0, 0.472, 0.001);
}

TEST(Mix, Parse) {
  const auto m = WeatherMix::parse("raindrop:0.25,rain_fog:0,snow:0.75");
  EXPECT_DOUBLE_EQ(m.weights[0], 0.25);
  EXPECT_DOUBLE_EQ(m.weights[1], 0.0);
  EXPECT_DOUBLE_EQ(m.weights[2], 0.75);
  EXPECT_THROW(WeatherMix::parse("fog:1"), InputError);
  EXPECT_THROW(WeatherMix::parse("raindrop:1,snow:3"), InputError);
  EXPECT_THROW(WeatherMix::parse("raindrop:0,snow:0"), InputError);
}

TEST(Dataset, RegenerationIsByteIdentical) {
  DatasetOptions o;
  o.count = 5;
  o.seed = 77;
  o.height = o.width = 32;
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  const auto rows = gen_dataset(o, a);
  gen_dataset(o, b);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_EQ(slurp(a / r.clean), slurp(b / r.clean));
    EXPECT_EQ(slurp(a / r.degraded), slurp(b / r.degraded));
  }
  EXPECT_EQ(slurp(a / "manifest.tsv"), slurp(b / "manifest.tsv"));
  o.seed = 78;
  const auto c = scratch("gen_c");
  gen_dataset(o, c);
  EXPECT_NE(slurp(a / rows[0].degraded), slurp(c / rows[0].degraded));
}

TEST(Dataset, ManifestRoundTripAndMalformedRow) {
  const auto dir = scratch("manifest");
  std::vector<ManifestRow> rows{{"clean/a.twimg", "degraded/a.twimg", WeatherKind::kSnow, 12345}};
  write_manifest(dir / "manifest.tsv", rows);
  const auto back = read_manifest(dir / "manifest.tsv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].clean, dir / "clean/a.twimg");
  EXPECT_EQ(back[0].kind, WeatherKind::kSnow);
  EXPECT_EQ(back[0].seed, 12345u);
  std::ofstream(dir / "bad.tsv") << "only\ttwo\n";
  EXPECT_THROW(read_manifest(dir / "bad.tsv"), FormatError);
  EXPECT_THROW(read_manifest(dir / "missing.tsv"), IoError);
}

TEST(Formats, TwimgRoundTripIsBitwise) {
  Rng rng(8);
  const auto img = random_image(rng, 3, 5, 7, -2, 2);
  const auto dir = scratch("twimg");
  write_twimg(dir / "x.twimg", img);
  EXPECT_EQ(read_twimg(dir / "x.twimg"), img);
  EXPECT_EQ(fs::file_size(dir / "x.twimg"), 6u + 12u + img.size() * 4);
}

TEST(Formats, TwimgBadMagicAndTruncation) {
  const auto dir = scratch("twimg_bad");
  std::ofstream(dir / "bad.twimg", std::ios::binary) << "TWIMG2xxxxxxxxxxxx";
  EXPECT_THROW(read_twimg(dir / "bad.twimg"), FormatError);
  write_twimg(dir / "ok.twimg", Image(3, 4, 4, 0.5f));
  fs::resize_file(dir / "ok.twimg", fs::file_size(dir / "ok.twimg") - 4);
  EXPECT_THROW(read_twimg(dir / "ok.twimg"), IoError);
  EXPECT_THROW(read_twimg(dir / "none.twimg"), IoError);
}

TEST(Formats, PngRoundTripQuantises) {
  Rng rng(9);
  auto img = random_image(rng, 3, 6, 5);
  const auto dir = scratch("png");
  write_image(dir / "x.png", img);
  const auto back = read_image(dir / "x.png");
  ASSERT_TRUE(back.same_dims(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255 + 1e-6);
}
