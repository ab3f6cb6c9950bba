#pragma once

// Central finite-difference verification of recorded backward rules, run in
// double precision. Each check reduces the op output to a scalar through a
// fixed random weighting, sum(out * W), so every output element contributes.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "transweather/tensor.hpp"

namespace tw {

struct GradCheckOptions {
  double step = 1e-3;
  // Coordinates with |analytic| below this are compared absolutely.
  double small_gradient = 1e-6;
  std::size_t max_coords_per_input = 48;
  std::uint64_t seed = 1;
  // Registers a deliberately wrong backward as a negative control.
  bool inject_fault = false;
};

struct GradCheckResult {
  std::string name;
  double tolerance = 0.0;
  double max_rel_error = 0.0;  // over coordinates with |analytic| >= small_gradient
  double max_abs_error_small = 0.0;  // over the remaining coordinates
  std::size_t coords = 0;
  bool passed = false;
};

using GradCheckFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares backward() against central differences for every sampled input coordinate.
GradCheckResult check_gradient(const std::string& name, const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                               double tolerance, const GradCheckOptions& options);

struct GradCheckCase {
  std::string name;
  double tolerance;
  std::function<GradCheckResult(const GradCheckOptions&)> run;
};

// Every differentiable op and composite module, each exactly once.
std::vector<GradCheckCase> gradcheck_registry(const GradCheckOptions& options);

// Full network + total loss on a 1x3xSxS input, perturbing at least one
// coordinate of every parameter tensor and at least `min_coords` overall.
GradCheckResult check_network_gradient(const GradCheckOptions& options, std::size_t image_size = 32,
                                       std::size_t min_coords = 20, double tolerance = 1e-2);

// tanh forward with a wrong backward (1 - y instead of 1 - y^2).
Tensor<double> faulty_tanh(const Tensor<double>& x);

}  // namespace tw
