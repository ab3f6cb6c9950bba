#pragma once

// Synthetic weather degradations over procedural clean scenes.
//
//   raindrop : I = (1 - M) * B + R_drop
//   rain_fog : I = T * (B + sum_i R_i) + (1 - T) * A
//   snow     : I = z * S + (1 - z) * B
//
// Every apply_* evaluates its formula in double and rounds once to float, then
// clamps to [0,1] unless `clamp` is false.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "transweather/image.hpp"

namespace tw {

enum class WeatherKind { kRaindrop, kRainFog, kSnow };

inline constexpr std::array<WeatherKind, 3> kAllWeatherKinds{WeatherKind::kRaindrop, WeatherKind::kRainFog,
                                                             WeatherKind::kSnow};

std::string_view to_string(WeatherKind kind);
// Throws InputError for anything but raindrop, rain_fog, snow.
WeatherKind parse_weather_kind(std::string_view name);

enum class SceneKind { kGradient, kBlobs, kChecker };

// [3, H, W] in [0, 1]; the scene kind is drawn from the seed.
Image make_clean_scene(std::uint64_t seed, std::size_t height, std::size_t width);
Image make_clean_scene(SceneKind kind, std::uint64_t seed, std::size_t height, std::size_t width);

struct DegradationParams {
  WeatherKind kind = WeatherKind::kRaindrop;
  // raindrop
  Image mask;      // M [1, H, W]
  Image residual;  // R_drop [3, H, W]
  // rain_fog
  Image transmission;          // T [1, H, W]
  std::vector<Image> streaks;  // R_i [3, H, W], n >= 1
  std::array<float, 3> airlight{};
  // snow
  Image snow_mask;  // z [1, H, W]
  Image flakes;     // S [3, H, W]
};

Image apply_raindrop(const Image& background, const Image& mask, const Image& residual, bool clamp = true);
Image apply_rain_fog(const Image& background, const Image& transmission, const std::vector<Image>& streaks,
                     const std::array<float, 3>& airlight, bool clamp = true);
Image apply_snow(const Image& background, const Image& snow_mask, const Image& flakes, bool clamp = true);

Image apply(const Image& background, const DegradationParams& params, bool clamp = true);

// Procedural parameters for one sample; intensity in (0, 1]. Element counts
// grow as round(intensity * max), always drawing the same prefix of one
// seeded sequence, so coverage is monotone in intensity for a fixed seed.
DegradationParams gen_params(WeatherKind kind, std::uint64_t seed, double intensity, std::size_t height,
                             std::size_t width);

// Mean fraction of the image affected: mean(M), mean(min(1, (1-T) + sum R)), mean(z).
double coverage(const DegradationParams& params);

struct WeatherMix {
  std::array<double, 3> weights{1.0 / 3, 1.0 / 3, 1.0 / 3};  // raindrop, rain_fog, snow

  static WeatherMix uniform() { return {}; }
  // Proportions of the combined training set: 9000 snow, 1069 raindrop, 9000 rain+fog.
  static WeatherMix paper() { return {{1069.0 / 19069, 9000.0 / 19069, 9000.0 / 19069}}; }
  // "uniform", "paper" or "raindrop:w,rain_fog:w,snow:w".
  static WeatherMix parse(std::string_view text);
};

// Largest-remainder split of `count` over the mix weights.
std::array<std::size_t, 3> allocate_counts(std::size_t count, const WeatherMix& mix);

struct DatasetOptions {
  std::size_t count = 8;
  WeatherMix mix;
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  double min_intensity = 0.5;
  double max_intensity = 1.0;
};

struct ManifestRow {
  std::filesystem::path clean;
  std::filesystem::path degraded;
  WeatherKind kind = WeatherKind::kRaindrop;
  std::uint64_t seed = 0;
};

struct DatasetSample {
  Image clean;
  Image degraded;
  WeatherKind kind;
  std::uint64_t seed;
};

// Sample i of a dataset, without touching the filesystem.
DatasetSample make_sample(const DatasetOptions& options, WeatherKind kind, std::size_t index);

// Writes clean/NNNNN.twimg, degraded/NNNNN.twimg and manifest.tsv under
// out_dir. Returns the manifest rows (paths relative to out_dir).
std::vector<ManifestRow> gen_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
// Relative paths are resolved against the manifest's directory.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace tw
