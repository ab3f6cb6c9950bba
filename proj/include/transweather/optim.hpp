#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "transweather/parameters.hpp"

namespace tw {

struct Schedule {
  double base_lr = 0.0002;
  std::vector<std::size_t> halve_epochs{100, 150};
  std::size_t total_epochs = 200;
  std::size_t batch_size = 4;

  // Throws ConfigError unless halvings strictly increase and precede total_epochs.
  void validate() const;
};

// base_lr / 2^(number of halvings <= epoch). Throws InputError outside [0, total_epochs).
double lr_at(std::size_t epoch, const Schedule& schedule);

// Bias-corrected Adam over the trainable tensors of a store.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };

  explicit Adam(const ParameterStore<float>& store);

  // One update at learning rate `lr`; throws ContractError naming any
  // trainable parameter without a gradient.
  void step(ParameterStore<float>& store, double lr);

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  const std::vector<std::string>& names() const { return names_; }
  Moments& moments(const std::string& name);
  const Moments& moments(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Moments> state_;
  std::uint64_t t_ = 0;
};

// Global L2 norm over all trainable gradients.
double grad_norm(const ParameterStore<float>& store);
// Rescales gradients so the global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(ParameterStore<float>& store, double max_norm);

}  // namespace tw
