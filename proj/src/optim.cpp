#include "transweather/optim.hpp"

#include <cmath>

#include "transweather/error.hpp"

namespace tw {

void Schedule::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base learning rate must be positive");
  if (total_epochs == 0) throw ConfigError("total_epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  for (std::size_t i = 0; i < halve_epochs.size(); ++i) {
    if (halve_epochs[i] >= total_epochs) {
      throw ConfigError("halving epoch " + std::to_string(halve_epochs[i]) + " not below total_epochs " +
                        std::to_string(total_epochs));
    }
    if (i > 0 && halve_epochs[i] <= halve_epochs[i - 1]) throw ConfigError("halving epochs must strictly increase");
  }
}

double lr_at(std::size_t epoch, const Schedule& schedule) {
  if (epoch >= schedule.total_epochs) {
    throw InputError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(schedule.total_epochs) +
                     ")");
  }
  int halvings = 0;
  for (std::size_t e : schedule.halve_epochs) halvings += e <= epoch ? 1 : 0;
  return std::ldexp(schedule.base_lr, -halvings);
}

Adam::Adam(const ParameterStore<float>& store) {
  for (const auto& e : store.entries()) {
    if (!e.tensor.requires_grad()) continue;
    names_.push_back(e.name);
    state_[e.name] = Moments{std::vector<float>(e.tensor.numel(), 0.0f), std::vector<float>(e.tensor.numel(), 0.0f)};
  }
}

Adam::Moments& Adam::moments(const std::string& name) {
  const auto it = state_.find(name);
  if (it == state_.end()) throw ContractError("no optimizer state for '" + name + "'");
  return it->second;
}

const Adam::Moments& Adam::moments(const std::string& name) const {
  return const_cast<Adam*>(this)->moments(name);
}

void Adam::step(ParameterStore<float>& store, double lr) {
  for (const auto& e : store.entries()) {
    if (e.tensor.requires_grad() && !e.tensor.has_grad()) {
      throw ContractError("parameter '" + e.name + "' has no gradient");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (const auto& e : store.entries()) {
    if (!e.tensor.requires_grad()) continue;
    auto& s = moments(e.name);
    Tensor<float> param = e.tensor;  // shared storage
    auto p = param.data();
    const auto g = e.tensor.grad_buffer();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double m = kBeta1 * s.m[i] + (1.0 - kBeta1) * gi;
      const double v = kBeta2 * s.v[i] + (1.0 - kBeta2) * gi * gi;
      s.m[i] = static_cast<float>(m);
      s.v[i] = static_cast<float>(v);
      const double update = lr * (m / c1) / (std::sqrt(v / c2) + kEps);
      p[i] = static_cast<float>(p[i] - update);
    }
  }
}

double grad_norm(const ParameterStore<float>& store) {
  double acc = 0.0;
  for (const auto& e : store.entries()) {
    if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad_buffer()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

double clip_grad_norm(ParameterStore<float>& store, double max_norm) {
  const double norm = grad_norm(store);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (const auto& e : store.entries()) {
      if (!e.tensor.requires_grad() || !e.tensor.has_grad()) continue;
      for (auto& g : e.tensor.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

}  // namespace tw
