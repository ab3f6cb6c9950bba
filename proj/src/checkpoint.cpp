#include "transweather/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "transweather/error.hpp"

namespace tw {

namespace {

constexpr std::array<char, 6> kMagic{'T', 'W', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    if (!in_.read(dst, static_cast<std::streamsize>(n))) throw IoError(path_ + ": truncated checkpoint");
  }

  const std::string& path() const { return path_; }

 private:
  std::istream& in_;
  std::string path_;
};

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("tensor name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
  }
}

std::vector<NamedTensor> read_tensors(Reader& r) {
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(r.get<std::uint16_t>());
    r.bytes(t.name.data(), t.name.size());
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint32_t>());
    const std::size_t n = shape_numel(t.shape);
    if (n > (std::size_t{1} << 32)) throw FormatError(r.path() + ": implausible tensor size for " + t.name);
    t.data.resize(n);
    r.bytes(reinterpret_cast<char*>(t.data.data()), n * 4);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

NamedTensor named(const std::string& name, const Shape& shape, std::span<const float> data) {
  return {name, shape, std::vector<float>(data.begin(), data.end())};
}

}  // namespace

Checkpoint make_checkpoint(const ParameterStore<float>& store, const Adam* optimizer, std::uint64_t step) {
  Checkpoint c;
  c.step = step;
  for (const auto& e : store.entries()) c.parameters.push_back(named(e.name, e.tensor.shape(), e.tensor.data()));
  if (optimizer) {
    for (const auto& name : optimizer->names()) {
      const auto& shape = store.get(name).shape();
      const auto& m = optimizer->moments(name);
      c.optimizer.push_back(named("m/" + name, shape, m.m));
      c.optimizer.push_back(named("v/" + name, shape, m.v));
    }
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  write_tensors(out, checkpoint.parameters);
  write_tensors(out, checkpoint.optimizer);
  put<std::uint64_t>(out, checkpoint.step);
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(in, path.string());
  std::array<char, 6> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.parameters = read_tensors(r);
  c.optimizer = read_tensors(r);
  c.step = r.get<std::uint64_t>();
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return c;
}

std::uint64_t restore_checkpoint(const Checkpoint& checkpoint, ParameterStore<float>& store, Adam* optimizer) {
  if (checkpoint.parameters.size() != store.size()) {
    throw FormatError("checkpoint holds " + std::to_string(checkpoint.parameters.size()) +
                      " tensors, network expects " + std::to_string(store.size()) + " (config mismatch?)");
  }
  for (const auto& t : checkpoint.parameters) {
    if (!store.contains(t.name)) throw FormatError("checkpoint tensor '" + t.name + "' unknown to this network");
    auto live = store.get(t.name);
    if (live.shape() != t.shape) {
      throw FormatError("checkpoint tensor '" + t.name + "' has shape " + shape_str(t.shape) + ", network expects " +
                        shape_str(live.shape()));
    }
    std::copy(t.data.begin(), t.data.end(), live.data().begin());
  }
  if (optimizer) {
    std::unordered_map<std::string, const NamedTensor*> byname;
    for (const auto& t : checkpoint.optimizer) byname[t.name] = &t;
    for (const auto& name : optimizer->names()) {
      auto& mom = optimizer->moments(name);
      for (auto [prefix, dst] : {std::pair{"m/", &mom.m}, std::pair{"v/", &mom.v}}) {
        const auto it = byname.find(prefix + name);
        if (it == byname.end()) throw FormatError("checkpoint lacks optimizer state " + std::string(prefix) + name);
        if (it->second->data.size() != dst->size()) throw FormatError("optimizer state size mismatch for " + name);
        *dst = it->second->data;
      }
    }
    optimizer->set_steps(checkpoint.step);
  }
  return checkpoint.step;
}

}  // namespace tw
