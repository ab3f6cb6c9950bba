#include "transweather/parameters.hpp"

#include <cmath>

#include "transweather/error.hpp"

namespace tw {

template <typename Real>
Tensor<Real> ParameterStore<Real>::add(const std::string& name, Shape shape, Init init, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t n = shape_numel(shape);
  std::vector<Real> values(n, Real(0));
  switch (init.kind) {
    case InitKind::kZeros:
      break;
    case InitKind::kOnes:
      std::fill(values.begin(), values.end(), Real(1));
      break;
    case InitKind::kTruncatedNormal:
      for (auto& v : values) v = static_cast<Real>(rng_.truncated_normal(init.scale));
      break;
    case InitKind::kFanInUniform: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(init.fan_in));
      for (auto& v : values) v = static_cast<Real>(rng_.uniform(-bound, bound));
      break;
    }
    case InitKind::kIdentity:
      if (shape.size() != 2 || shape[0] != shape[1]) {
        throw ConfigError("identity init needs a square matrix, got " + shape_str(shape) + " for " + name);
      }
      for (std::size_t i = 0; i < shape[0]; ++i) values[i * shape[0] + i] = Real(1);
      break;
  }
  Tensor<Real> t(std::move(shape), std::move(values), trainable);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, t});
  return t;
}

template <typename Real>
Tensor<Real> ParameterStore<Real>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

template <typename Real>
std::size_t ParameterStore<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename Real>
std::size_t ParameterStore<Real>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.tensor.requires_grad()) n += e.tensor.numel();
  }
  return n;
}

template <typename Real>
void ParameterStore<Real>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename Real>
void ParameterStore<Real>::fill_zero(std::string_view prefix) {
  for (auto& e : entries_) {
    if (std::string_view(e.name).substr(0, prefix.size()) == prefix) {
      auto d = e.tensor.data();
      std::fill(d.begin(), d.end(), Real(0));
    }
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace tw
