#include "transweather/degradation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "transweather/error.hpp"
#include "transweather/rng.hpp"

namespace tw {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

float finish(double v, bool clamp) {
  const auto f = static_cast<float>(v);
  return clamp ? std::clamp(f, 0.0f, 1.0f) : f;
}

void require_dims(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || (b.channels != 1 && b.channels != a.channels)) {
    throw DimensionError(std::string(what) + ": " + std::to_string(b.channels) + "x" + std::to_string(b.height) +
                         "x" + std::to_string(b.width) + " does not match background " +
                         std::to_string(a.channels) + "x" + std::to_string(a.height) + "x" +
                         std::to_string(a.width));
  }
}

void require_unit_range(const Image& m, const char* what) {
  for (float v : m.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError(std::string(what) + " must lie in [0,1]");
  }
}

// Index into a map that is either single-channel or per-channel.
float map_at(const Image& m, std::size_t c, std::size_t i) {
  return m.data[(m.channels == 1 ? 0 : c) * m.plane() + i];
}

// Random low-frequency field normalised to [0, 1].
std::vector<double> smooth_field(Rng& rng, std::size_t h, std::size_t w, int terms) {
  std::vector<double> f(h * w, 0.0);
  for (int k = 0; k < terms; ++k) {
    const double fx = rng.uniform(0.3, 1.5), fy = rng.uniform(0.3, 1.5);
    const double phase = rng.uniform(0.0, kTwoPi), amp = rng.uniform(0.5, 1.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        f[y * w + x] += amp * std::cos(kTwoPi * (fx * x / w + fy * y / h) + phase);
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double min = *lo, span = *hi - *lo;
  for (auto& v : f) v = span > 0 ? (v - min) / span : 0.0;
  return f;
}

std::size_t scaled_count(double intensity, std::size_t max) {
  return static_cast<std::size_t>(std::lround(intensity * static_cast<double>(max)));
}

// Soft disc stamped into `field` with max-compositing; returns nothing but
// records which stamp owns each pixel in `owner`.
void stamp_disc(std::vector<double>& field, std::vector<int>& owner, int id, std::size_t h, std::size_t w,
                double cx, double cy, double rx, double ry, double peak) {
  const auto y0 = static_cast<long>(std::floor(cy - ry)), y1 = static_cast<long>(std::ceil(cy + ry));
  const auto x0 = static_cast<long>(std::floor(cx - rx)), x1 = static_cast<long>(std::ceil(cx + rx));
  for (long y = std::max(0L, y0); y <= std::min<long>(static_cast<long>(h) - 1, y1); ++y) {
    for (long x = std::max(0L, x0); x <= std::min<long>(static_cast<long>(w) - 1, x1); ++x) {
      const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
      const double v = peak * smoothstep(1.0 - std::sqrt(dx * dx + dy * dy));
      const std::size_t i = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
      if (v > field[i]) {
        field[i] = v;
        owner[i] = id;
      }
    }
  }
}

DegradationParams gen_raindrop(std::uint64_t seed, double intensity, std::size_t h, std::size_t w) {
  DegradationParams p;
  p.kind = WeatherKind::kRaindrop;
  const std::size_t max_drops = std::max<std::size_t>(1, h * w / 96);
  const std::size_t n = scaled_count(intensity, max_drops);
  const double max_radius = 2.0 + 0.08 * static_cast<double>(std::min(h, w));
  Rng rng(derive_seed(seed, 1));
  std::vector<double> field(h * w, 0.0);
  std::vector<int> owner(h * w, -1);
  std::vector<std::array<double, 3>> colors;
  for (std::size_t k = 0; k < n; ++k) {
    const double cx = rng.uniform(0.0, static_cast<double>(w)), cy = rng.uniform(0.0, static_cast<double>(h));
    const double r = rng.uniform(2.0, max_radius), stretch = rng.uniform(1.0, 1.5);
    const double peak = rng.uniform(0.6, 0.95);
    const double grey = rng.uniform(0.5, 0.9);
    colors.push_back({grey * rng.uniform(0.9, 1.05), grey * rng.uniform(0.9, 1.05), grey * rng.uniform(0.95, 1.1)});
    stamp_disc(field, owner, static_cast<int>(k), h, w, cx, cy, r, r * stretch, peak);
  }
  p.mask = Image(1, h, w);
  p.residual = Image(3, h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto m = static_cast<float>(field[i]);
    p.mask.data[i] = m;
    if (owner[i] < 0) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      // R_drop <= M keeps (1 - M) B + R_drop inside [0, 1].
      p.residual.data[c * h * w + i] = static_cast<float>(m * std::min(1.0, colors[owner[i]][c]));
    }
  }
  return p;
}

// Anti-aliased line of unit peak, centred in a (2r+1)^2 kernel.
std::vector<double> line_kernel(double angle, double length, long radius) {
  const long side = 2 * radius + 1;
  std::vector<double> k(static_cast<std::size_t>(side * side), 0.0);
  const double ux = std::cos(angle), uy = std::sin(angle);
  for (long y = -radius; y <= radius; ++y) {
    for (long x = -radius; x <= radius; ++x) {
      const double along = x * ux + y * uy;
      const double across = -x * uy + y * ux;
      if (std::abs(along) > length / 2) continue;
      const double v = std::max(0.0, 1.0 - std::abs(across));
      k[static_cast<std::size_t>((y + radius) * side + (x + radius))] = v;
    }
  }
  return k;
}

DegradationParams gen_rain_fog(std::uint64_t seed, double intensity, std::size_t h, std::size_t w) {
  DegradationParams p;
  p.kind = WeatherKind::kRainFog;
  Rng fog(derive_seed(seed, 1));
  const auto field = smooth_field(fog, h, w, 3);
  p.transmission = Image(1, h, w);
  for (std::size_t i = 0; i < h * w; ++i) p.transmission.data[i] = static_cast<float>(1.0 - intensity * field[i]);
  for (auto& a : p.airlight) a = static_cast<float>(fog.uniform(0.7, 0.95));

  Rng layout(derive_seed(seed, 2));
  const std::size_t layers = 1 + layout.below(2);
  const std::size_t max_points = std::max<std::size_t>(1, h * w / 40);
  const std::size_t n = scaled_count(intensity, max_points);
  const double amplitude = 0.3 * intensity;
  for (std::size_t l = 0; l < layers; ++l) {
    const double angle = std::numbers::pi / 2 + 0.2 * layout.normal();
    const double length = layout.uniform(5.0, 12.0);
    const long radius = static_cast<long>(std::ceil(length / 2)) + 1;
    const auto kernel = line_kernel(angle, length, radius);
    const long side = 2 * radius + 1;
    // Sparse noise convolved with the kernel, evaluated as a scatter.
    Rng noise(derive_seed(seed, 16 + l));
    std::vector<double> acc(h * w, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto px = static_cast<long>(noise.below(w)), py = static_cast<long>(noise.below(h));
      const double weight = noise.uniform(0.5, 1.0);
      for (long dy = -radius; dy <= radius; ++dy) {
        const long y = py + dy;
        if (y < 0 || y >= static_cast<long>(h)) continue;
        for (long dx = -radius; dx <= radius; ++dx) {
          const long x = px + dx;
          if (x < 0 || x >= static_cast<long>(w)) continue;
          acc[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] +=
              weight * kernel[static_cast<std::size_t>((dy + radius) * side + (dx + radius))];
        }
      }
    }
    Image streak(3, h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
      const auto v = static_cast<float>(amplitude * std::min(1.0, acc[i]));
      for (std::size_t c = 0; c < 3; ++c) streak.data[c * h * w + i] = v;
    }
    p.streaks.push_back(std::move(streak));
  }
  return p;
}

DegradationParams gen_snow(std::uint64_t seed, double intensity, std::size_t h, std::size_t w) {
  DegradationParams p;
  p.kind = WeatherKind::kSnow;
  // Jittered grid: one candidate flake per 4x4 cell visited in a seeded
  // order, which spreads flakes like blue noise.
  constexpr std::size_t kCell = 4;
  const std::size_t gh = std::max<std::size_t>(1, h / kCell), gw = std::max<std::size_t>(1, w / kCell);
  std::vector<std::size_t> cells(gh * gw);
  std::iota(cells.begin(), cells.end(), 0);
  Rng order(derive_seed(seed, 1));
  order.shuffle(cells.begin(), cells.end());
  const std::size_t n = scaled_count(intensity, std::max<std::size_t>(1, cells.size() / 2));

  Rng rng(derive_seed(seed, 2));
  std::vector<double> field(h * w, 0.0);
  std::vector<int> owner(h * w, -1);
  const double ch = static_cast<double>(h) / gh, cw = static_cast<double>(w) / gw;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t cell = cells[k];
    const double cy = (cell / gw + rng.uniform()) * ch, cx = (cell % gw + rng.uniform()) * cw;
    const double r = rng.uniform(0.8, 2.4);
    stamp_disc(field, owner, static_cast<int>(k), h, w, cx, cy, r, r, rng.uniform(0.8, 1.0));
  }
  p.snow_mask = Image(1, h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    p.snow_mask.data[i] = static_cast<float>(std::clamp((field[i] - 0.15) / 0.7, 0.0, 1.0));
  }
  Rng texture(derive_seed(seed, 3));
  p.flakes = Image(3, h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double base = texture.uniform(0.85, 1.0);
    p.flakes.data[i] = static_cast<float>(base * 0.97);
    p.flakes.data[h * w + i] = static_cast<float>(base * 0.98);
    p.flakes.data[2 * h * w + i] = static_cast<float>(base);
  }
  return p;
}

Image scene_gradient(Rng& rng, std::size_t h, std::size_t w) {
  Image img(3, h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    const double a = rng.uniform(0.2, 0.8), bx = rng.uniform(-0.4, 0.4), by = rng.uniform(-0.4, 0.4);
    const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0), ph = rng.uniform(0.0, kTwoPi);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double u = static_cast<double>(x) / w - 0.5, v = static_cast<double>(y) / h - 0.5;
        const double val = a + bx * u + by * v + 0.15 * std::cos(kTwoPi * (fx * u + fy * v) + ph);
        img.at(c, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return img;
}

Image scene_blobs(Rng& rng, std::size_t h, std::size_t w) {
  struct Blob {
    double cx, cy, sigma;
    std::array<double, 3> color;
  };
  const std::array<double, 3> bg{rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.6)};
  std::vector<Blob> blobs(4 + rng.below(5));
  const double scale = static_cast<double>(std::min(h, w));
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.0, static_cast<double>(w));
    b.cy = rng.uniform(0.0, static_cast<double>(h));
    b.sigma = rng.uniform(0.06, 0.2) * scale;
    b.color = {rng.uniform(), rng.uniform(), rng.uniform()};
  }
  Image img(3, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double total = 0.5;
      std::array<double, 3> acc{0.5 * bg[0], 0.5 * bg[1], 0.5 * bg[2]};
      for (const auto& b : blobs) {
        const double dx = x + 0.5 - b.cx, dy = y + 0.5 - b.cy;
        const double g = 3.0 * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
        total += g;
        for (std::size_t c = 0; c < 3; ++c) acc[c] += g * b.color[c];
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(acc[c] / total);
    }
  }
  return img;
}

Image scene_checker(Rng& rng, std::size_t h, std::size_t w) {
  const std::size_t cell = 4 + rng.below(9);
  std::array<double, 3> a{}, b{};
  for (std::size_t c = 0; c < 3; ++c) {
    a[c] = rng.uniform(0.05, 0.45);
    b[c] = rng.uniform(0.55, 0.95);
  }
  Image shade = scene_gradient(rng, h, w);
  Image img(3, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const bool odd = ((x / cell) + (y / cell)) % 2 == 1;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = 0.7 * (odd ? b[c] : a[c]) + 0.3 * shade.at(c, y, x);
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace

std::string_view to_string(WeatherKind kind) {
  switch (kind) {
    case WeatherKind::kRaindrop:
      return "raindrop";
    case WeatherKind::kRainFog:
      return "rain_fog";
    case WeatherKind::kSnow:
      return "snow";
  }
  return "?";
}

WeatherKind parse_weather_kind(std::string_view name) {
  for (auto k : kAllWeatherKinds) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown weather kind '" + std::string(name) + "' (expected raindrop, rain_fog or snow)");
}

Image make_clean_scene(SceneKind kind, std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(seed);
  switch (kind) {
    case SceneKind::kGradient:
      return scene_gradient(rng, height, width);
    case SceneKind::kBlobs:
      return scene_blobs(rng, height, width);
    case SceneKind::kChecker:
      return scene_checker(rng, height, width);
  }
  throw InputError("unknown scene kind");
}

Image make_clean_scene(std::uint64_t seed, std::size_t height, std::size_t width) {
  const auto kind = static_cast<SceneKind>(splitmix64(seed) % 3);
  return make_clean_scene(kind, derive_seed(seed, 1), height, width);
}

Image apply_raindrop(const Image& background, const Image& mask, const Image& residual, bool clamp) {
  require_dims(background, mask, "raindrop mask");
  require_dims(background, residual, "raindrop residual");
  require_unit_range(mask, "raindrop mask M");
  Image out(background.channels, background.height, background.width);
  const std::size_t plane = background.plane();
  for (std::size_t c = 0; c < background.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double b = background.data[c * plane + i];
      const double m = map_at(mask, c, i), r = map_at(residual, c, i);
      out.data[c * plane + i] = finish((1.0 - m) * b + r, clamp);
    }
  }
  return out;
}

Image apply_rain_fog(const Image& background, const Image& transmission, const std::vector<Image>& streaks,
                     const std::array<float, 3>& airlight, bool clamp) {
  if (streaks.empty()) throw ContractError("rain_fog needs at least one streak layer");
  if (background.channels > airlight.size()) throw DimensionError("rain_fog: at most 3 channels");
  require_dims(background, transmission, "transmission");
  require_unit_range(transmission, "transmission T");
  for (const auto& s : streaks) require_dims(background, s, "streak layer");
  Image out(background.channels, background.height, background.width);
  const std::size_t plane = background.plane();
  for (std::size_t c = 0; c < background.channels; ++c) {
    const double a = airlight[c];
    for (std::size_t i = 0; i < plane; ++i) {
      double rain = 0.0;
      for (const auto& s : streaks) rain += map_at(s, c, i);
      const double b = background.data[c * plane + i];
      const double t = map_at(transmission, c, i);
      out.data[c * plane + i] = finish(t * (b + rain) + (1.0 - t) * a, clamp);
    }
  }
  return out;
}

Image apply_snow(const Image& background, const Image& snow_mask, const Image& flakes, bool clamp) {
  require_dims(background, snow_mask, "snow mask");
  require_dims(background, flakes, "snow flakes");
  require_unit_range(snow_mask, "snow mask z");
  Image out(background.channels, background.height, background.width);
  const std::size_t plane = background.plane();
  for (std::size_t c = 0; c < background.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double b = background.data[c * plane + i];
      const double z = map_at(snow_mask, c, i), s = map_at(flakes, c, i);
      out.data[c * plane + i] = finish(z * s + (1.0 - z) * b, clamp);
    }
  }
  return out;
}

Image apply(const Image& background, const DegradationParams& params, bool clamp) {
  switch (params.kind) {
    case WeatherKind::kRaindrop:
      return apply_raindrop(background, params.mask, params.residual, clamp);
    case WeatherKind::kRainFog:
      return apply_rain_fog(background, params.transmission, params.streaks, params.airlight, clamp);
    case WeatherKind::kSnow:
      return apply_snow(background, params.snow_mask, params.flakes, clamp);
  }
  throw InputError("unknown weather kind");
}

DegradationParams gen_params(WeatherKind kind, std::uint64_t seed, double intensity, std::size_t height,
                             std::size_t width) {
  if (!(intensity > 0.0 && intensity <= 1.0)) {
    throw InputError("intensity must lie in (0, 1], got " + std::to_string(intensity));
  }
  if (height == 0 || width == 0) throw InputError("degradation maps need positive dimensions");
  switch (kind) {
    case WeatherKind::kRaindrop:
      return gen_raindrop(seed, intensity, height, width);
    case WeatherKind::kRainFog:
      return gen_rain_fog(seed, intensity, height, width);
    case WeatherKind::kSnow:
      return gen_snow(seed, intensity, height, width);
  }
  throw InputError("unknown weather kind");
}

double coverage(const DegradationParams& p) {
  double total = 0.0;
  std::size_t n = 0;
  switch (p.kind) {
    case WeatherKind::kRaindrop:
      for (float m : p.mask.data) total += m;
      n = p.mask.size();
      break;
    case WeatherKind::kRainFog: {
      const std::size_t plane = p.transmission.plane();
      for (std::size_t i = 0; i < plane; ++i) {
        double rain = 0.0;
        for (const auto& s : p.streaks) rain += s.data[i];
        total += std::min(1.0, (1.0 - p.transmission.data[i]) + rain);
      }
      n = plane;
      break;
    }
    case WeatherKind::kSnow:
      for (float z : p.snow_mask.data) total += z;
      n = p.snow_mask.size();
      break;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

WeatherMix WeatherMix::parse(std::string_view text) {
  if (text == "uniform") return uniform();
  if (text == "paper") return paper();
  WeatherMix mix{{0.0, 0.0, 0.0}};
  std::string spec(text);
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InputError("mix entry '" + item + "' is not kind:weight");
    const auto kind = parse_weather_kind(item.substr(0, colon));
    const std::string value = item.substr(colon + 1);
    double w = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), w);
    if (ec != std::errc() || ptr != value.data() + value.size() || !(w >= 0.0)) {
      throw InputError("bad mix weight '" + value + "'");
    }
    mix.weights[static_cast<std::size_t>(kind)] = w;
  }
  const double sum = mix.weights[0] + mix.weights[1] + mix.weights[2];
  if (std::abs(sum - 1.0) > 1e-6) throw InputError("mix weights must sum to 1, got " + std::to_string(sum));
  return mix;
}

std::array<std::size_t, 3> allocate_counts(std::size_t count, const WeatherMix& mix) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = static_cast<double>(count) * mix.weights[k];
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t j = 0; assigned < count; j = (j + 1) % 3, ++assigned) ++counts[order[j]];
  return counts;
}

DatasetSample make_sample(const DatasetOptions& options, WeatherKind kind, std::size_t index) {
  if (!(options.min_intensity > 0.0 && options.min_intensity <= options.max_intensity &&
        options.max_intensity <= 1.0)) {
    throw InputError("intensity range must satisfy 0 < min <= max <= 1");
  }
  DatasetSample s;
  s.kind = kind;
  s.seed = derive_seed(options.seed, index);
  s.clean = make_clean_scene(derive_seed(s.seed, 0), options.height, options.width);
  const double intensity = Rng(derive_seed(s.seed, 1)).uniform(options.min_intensity, options.max_intensity);
  const auto params = gen_params(kind, derive_seed(s.seed, 2), intensity, options.height, options.width);
  s.degraded = apply(s.clean, params);
  return s;
}

std::vector<ManifestRow> gen_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir) {
  if (options.count == 0) throw InputError("dataset count must be >= 1");
  const auto counts = allocate_counts(options.count, options.mix);
  std::vector<WeatherKind> kinds;
  for (std::size_t k = 0; k < 3; ++k) kinds.insert(kinds.end(), counts[k], kAllWeatherKinds[k]);
  Rng order(derive_seed(options.seed, 0x6B696E64));
  order.shuffle(kinds.begin(), kinds.end());

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clean", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "degraded", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const auto sample = make_sample(options, kinds[i], i);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.twimg", i);
    ManifestRow row{std::filesystem::path("clean") / name, std::filesystem::path("degraded") / name, sample.kind,
                    sample.seed};
    write_twimg(out_dir / row.clean, sample.clean);
    write_twimg(out_dir / row.degraded, sample.degraded);
    rows.push_back(std::move(row));
  }
  write_manifest(out_dir / "manifest.tsv", rows);
  return rows;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) {
    out << r.clean.generic_string() << '\t' << r.degraded.generic_string() << '\t' << to_string(r.kind) << '\t'
        << r.seed << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestRow> rows;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 4) throw FormatError(where + ": expected 4 tab-separated fields");
    ManifestRow row;
    row.clean = base / fields[0];
    row.degraded = base / fields[1];
    try {
      row.kind = parse_weather_kind(fields[2]);
    } catch (const InputError& e) {
      throw FormatError(where + ": " + e.what());
    }
    const auto& s = fields[3];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), row.seed);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(where + ": bad seed '" + s + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": manifest has no rows");
  return rows;
}

}  // namespace tw
