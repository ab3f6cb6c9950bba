#pragma once

// Planar float images [C, H, W] and their on-disk formats.
//
// TWIMG1: "TWIMG1", u32 C, u32 H, u32 W (little-endian), then C*H*W
// little-endian f32 values in row-major order.

#include <cstddef>
#include <filesystem>
#include <vector>

namespace tw {

struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return data.size(); }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  bool same_dims(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

void write_twimg(const std::filesystem::path& path, const Image& image);
// Throws FormatError on bad magic, IoError when unreadable or truncated.
Image read_twimg(const std::filesystem::path& path);

// 8-bit RGB. Values are clamped to [0,1] and rounded on write.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

// Dispatches on extension: ".png" or anything else as TWIMG1.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

}  // namespace tw
