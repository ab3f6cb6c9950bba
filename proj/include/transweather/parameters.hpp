#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "transweather/rng.hpp"
#include "transweather/tensor.hpp"

namespace tw {

enum class InitKind {
  kZeros,
  kOnes,
  kTruncatedNormal,  // sigma = Init::scale, cut at 2 sigma
  kFanInUniform,     // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kIdentity,         // square matrix
};

struct Init {
  InitKind kind = InitKind::kZeros;
  double scale = 0.02;
  std::size_t fan_in = 1;

  static Init zeros() { return {InitKind::kZeros}; }
  static Init ones() { return {InitKind::kOnes}; }
  static Init trunc_normal(double sigma = 0.02) { return {InitKind::kTruncatedNormal, sigma}; }
  static Init fan_in_uniform(std::size_t fan_in) { return {InitKind::kFanInUniform, 0.0, fan_in}; }
  static Init identity() { return {InitKind::kIdentity}; }
};

// Named trainable tensors in registration order. Initial values are drawn in
// double precision from one seeded stream, so a float store and a double
// store built with the same seed hold the same values up to rounding.
template <typename Real>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> tensor;
  };

  explicit ParameterStore(std::uint64_t seed) : rng_(seed) {}

  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Tensor<Real> add(const std::string& name, Shape shape, Init init, bool trainable = true);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<Real> get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Scalar count over every registered tensor.
  std::size_t parameter_count() const;
  std::size_t trainable_count() const;

  void zero_grad();
  // Sets every tensor whose name starts with `prefix` to zero.
  void fill_zero(std::string_view prefix);

 private:
  Rng rng_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace tw
