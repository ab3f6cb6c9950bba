#pragma once

// Binary checkpoint, all integers little-endian:
//
//   "TWCKPT" u32 version u32 count
//   count x { u16 name_len, name, u8 rank, rank x u32 dim, f32 data }
//   u32 count, then the optimizer moments with the same framing ("m/<name>", "v/<name>")
//   u64 step

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "transweather/optim.hpp"
#include "transweather/parameters.hpp"

namespace tw {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> optimizer;
  std::uint64_t step = 0;
};

Checkpoint make_checkpoint(const ParameterStore<float>& store, const Adam* optimizer, std::uint64_t step);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// FormatError on bad magic/version/layout, IoError on truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters (and moments, if given) into live objects; every name and
// shape must match. Returns the stored step counter.
std::uint64_t restore_checkpoint(const Checkpoint& checkpoint, ParameterStore<float>& store, Adam* optimizer);

}  // namespace tw
