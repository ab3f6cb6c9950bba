#include "transweather/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "transweather/attention.hpp"
#include "transweather/decoder.hpp"
#include "transweather/encoder.hpp"
#include "transweather/error.hpp"
#include "transweather/losses.hpp"
#include "transweather/network.hpp"
#include "transweather/ops.hpp"
#include "transweather/rng.hpp"

namespace tw {

namespace {

using T = Tensor<double>;

T random_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
  std::vector<double> d(shape_numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return T(std::move(shape), std::move(d), requires_grad);
}

double weighted_sum(const T& out, const std::vector<double>& w) {
  const auto d = out.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) acc += d[i] * w[i];
  return acc;
}

struct Coordinate {
  std::size_t input;
  std::size_t index;
};

GradCheckResult compare(const std::string& name, const std::function<double()>& objective,
                        std::vector<T>& inputs, const std::vector<Coordinate>& coords,
                        const std::vector<std::vector<double>>& analytic, double tolerance,
                        const GradCheckOptions& options) {
  GradCheckResult r;
  r.name = name;
  r.tolerance = tolerance;
  r.coords = coords.size();
  bool ok = true;
  NoGradGuard no_grad;
  for (const auto& c : coords) {
    auto data = inputs[c.input].data();
    const double saved = data[c.index];
    data[c.index] = saved + options.step;
    const double plus = objective();
    data[c.index] = saved - options.step;
    const double minus = objective();
    data[c.index] = saved;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const double a = analytic[c.input][c.index];
    if (std::abs(a) < options.small_gradient) {
      const double err = std::abs(a - numeric);
      r.max_abs_error_small = std::max(r.max_abs_error_small, err);
      ok = ok && err <= options.small_gradient;
    } else {
      const double err = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
      r.max_rel_error = std::max(r.max_rel_error, err);
      ok = ok && err <= tolerance;
    }
  }
  r.passed = ok;
  return r;
}

std::vector<Coordinate> sample_coords(const std::vector<T>& inputs, std::size_t per_input, Rng& rng) {
  std::vector<Coordinate> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    const std::size_t n = inputs[i].numel();
    if (n <= per_input) {
      for (std::size_t k = 0; k < n; ++k) coords.push_back({i, k});
      continue;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(per_input);
    std::sort(idx.begin(), idx.end());
    for (std::size_t k : idx) coords.push_back({i, k});
  }
  return coords;
}

std::vector<std::vector<double>> analytic_gradients(const std::vector<T>& inputs) {
  std::vector<std::vector<double>> g;
  for (const auto& t : inputs) g.push_back(t.requires_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0));
  return g;
}

// Parameter stores start at structured values (zero biases, unit gains, identity
// maps); perturb them so every backward path carries a generic signal.
void jitter(ParameterStore<double>& store, Rng& rng) {
  for (const auto& e : store.entries()) {
    T t = e.tensor;
    for (auto& v : t.data()) v += rng.uniform(-0.3, 0.3);
  }
}

// FNV-1a; names seed their own input streams.
std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : name) h = (h ^ c) * 0x100000001B3ULL;
  return h;
}

GradCheckCase op_case(std::string name, double tol, std::function<T(const std::vector<T>&)> fn,
                      std::vector<Shape> shapes) {
  return {name, tol, [name, tol, fn, shapes](const GradCheckOptions& o) {
            Rng rng(derive_seed(o.seed, name_hash(name)));
            std::vector<T> inputs;
            for (const auto& s : shapes) inputs.push_back(random_tensor(rng, s));
            return check_gradient(name, fn, inputs, tol, o);
          }};
}

// Module checks own a double-precision parameter store; inputs = data + every parameter.
template <typename Build>
GradCheckCase module_case(std::string name, double tol, std::vector<Shape> data_shapes, Build build) {
  return {name, tol, [name, tol, data_shapes, build](const GradCheckOptions& o) {
            Rng rng(derive_seed(o.seed, name_hash(name)));
            ParameterStore<double> store(derive_seed(o.seed, 99));
            auto fn = build(store);
            jitter(store, rng);
            std::vector<T> inputs;
            for (const auto& s : data_shapes) inputs.push_back(random_tensor(rng, s));
            for (const auto& e : store.entries()) inputs.push_back(e.tensor);
            return check_gradient(name, fn, inputs, tol, o);
          }};
}

}  // namespace

T faulty_tanh(const T& x) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in[i]);
  T result(x.shape(), std::move(out));
  if (needs_grad({x})) {
    T y = result;
    record_op<double>("faulty_tanh", result, {x}, [x, y](std::span<const double> g) {
      auto gx = x.grad_buffer();
      const auto yv = y.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - yv[i]);
    });
  }
  return result;
}

GradCheckResult check_gradient(const std::string& name, const GradCheckFn& fn, std::vector<T> inputs,
                               double tolerance, const GradCheckOptions& options) {
  Rng rng(derive_seed(options.seed, 0x57454947ULL));
  auto& graph = Graph<double>::current();
  graph.clear();
  for (auto& t : inputs) t.zero_grad();
  const T out = fn(inputs);
  std::vector<double> w(out.numel());
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  const T loss = sum(mul(out, T(out.shape(), w)));
  backward(loss);
  const auto analytic = analytic_gradients(inputs);
  const auto coords = sample_coords(inputs, options.max_coords_per_input, rng);
  const auto objective = [&] { return weighted_sum(fn(inputs), w); };
  return compare(name, objective, inputs, coords, analytic, tolerance, options);
}

std::vector<GradCheckCase> gradcheck_registry(const GradCheckOptions& options) {
  constexpr double kOp = 1e-3;
  constexpr double kModule = 1e-2;
  std::vector<GradCheckCase> r;
  r.push_back(op_case("matmul", kOp, [](const auto& in) { return matmul(in[0], in[1]); }, {{3, 3}, {3, 3}}));
  r.push_back(op_case("matmul_batched", kOp, [](const auto& in) { return matmul(in[0], in[1]); },
                      {{2, 2, 3, 4}, {2, 1, 4, 3}}));
  r.push_back(op_case("linear", kOp, [](const auto& in) { return linear(in[0], in[1], in[2]); },
                      {{2, 3, 4}, {4, 5}, {5}}));
  r.push_back(op_case("conv2d", kOp,
                      [](const auto& in) { return conv2d(in[0], in[1], in[2], Conv2dOptions{1, 1, 1}); },
                      {{1, 2, 4, 4}, {3, 2, 3, 3}, {3}}));
  r.push_back(op_case("conv2d_strided", kOp,
                      [](const auto& in) { return conv2d(in[0], in[1], in[2], Conv2dOptions{2, 1, 1}); },
                      {{2, 2, 6, 6}, {3, 2, 3, 3}, {3}}));
  r.push_back(op_case("conv2d_depthwise", kOp,
                      [](const auto& in) { return conv2d(in[0], in[1], in[2], Conv2dOptions{1, 1, 4}); },
                      {{1, 4, 5, 5}, {4, 1, 3, 3}, {4}}));
  r.push_back(op_case("add", kOp, [](const auto& in) { return add(in[0], in[1]); }, {{2, 3, 4}, {3, 1}}));
  r.push_back(op_case("sub", kOp, [](const auto& in) { return sub(in[0], in[1]); }, {{2, 1, 4}, {3, 4}}));
  r.push_back(op_case("mul", kOp, [](const auto& in) { return mul(in[0], in[1]); }, {{2, 3, 4}, {4}}));
  r.push_back(op_case("scale", kOp, [](const auto& in) { return scale(in[0], 1.7); }, {{3, 4}}));
  r.push_back(op_case("add_scalar", kOp, [](const auto& in) { return add_scalar(in[0], 0.3); }, {{3, 4}}));
  r.push_back(op_case("tanh", kOp, [](const auto& in) { return tanh(in[0]); }, {{3, 4}}));
  r.push_back(op_case("gelu", kOp, [](const auto& in) { return gelu(in[0]); }, {{3, 4}}));
  r.push_back(op_case("broadcast_to", kOp, [](const auto& in) { return broadcast_to(in[0], Shape{2, 3, 4}); },
                      {{3, 1}}));
  r.push_back(op_case("softmax", kOp, [](const auto& in) { return softmax(in[0], -1); }, {{5}}));
  r.push_back(op_case("softmax_axis", kOp, [](const auto& in) { return softmax(in[0], 1); }, {{2, 4, 3}}));
  r.push_back(op_case("layernorm", kOp, [](const auto& in) { return layernorm(in[0], in[1], in[2]); },
                      {{3, 6}, {6}, {6}}));
  r.push_back(op_case("sum", kOp, [](const auto& in) { return sum(in[0]); }, {{3, 4}}));
  r.push_back(op_case("mean", kOp, [](const auto& in) { return mean(in[0]); }, {{3, 4}}));
  r.push_back(op_case("mean_axis", kOp, [](const auto& in) { return mean_axis(in[0], 1); }, {{2, 3, 4}}));
  r.push_back(op_case("reshape", kOp, [](const auto& in) { return reshape(in[0], Shape{2, 6}); }, {{4, 3}}));
  r.push_back(op_case("permute", kOp, [](const auto& in) { return permute(in[0], {2, 0, 1}); }, {{2, 3, 4}}));
  r.push_back(op_case("transpose", kOp, [](const auto& in) { return transpose(in[0], -2, -1); }, {{2, 3, 4}}));
  r.push_back(op_case("concat", kOp, [](const auto& in) { return concat<double>({in[0], in[1], in[0]}, 1); },
                      {{2, 3, 2}, {2, 1, 2}}));
  r.push_back(op_case("slice", kOp, [](const auto& in) { return slice(in[0], 1, 1, 2); }, {{2, 4, 3}}));
  r.push_back(op_case("upsample_nearest", kOp, [](const auto& in) { return upsample_nearest(in[0], 2); },
                      {{1, 2, 3, 3}}));
  r.push_back(op_case("avg_pool2d", kOp, [](const auto& in) { return avg_pool2d(in[0], 2); }, {{1, 2, 4, 4}}));
  r.push_back(op_case("to_tokens", kOp, [](const auto& in) { return to_tokens(in[0]); }, {{2, 3, 2, 2}}));
  r.push_back(op_case("to_spatial", kOp, [](const auto& in) { return to_spatial(in[0], 2, 3); }, {{2, 6, 4}}));
  r.push_back(op_case("smooth_l1", kOp, [](const auto& in) { return smooth_l1(scale(in[0], 2.0), in[1]); },
                      {{3, 5}, {3, 5}}));
  r.push_back(op_case("split_quadrants", kOp, [](const auto& in) { return split_quadrants(in[0]); },
                      {{2, 2, 4, 4}}));
  r.push_back(op_case("merge_quadrants", kOp, [](const auto& in) { return merge_quadrants(in[0]); },
                      {{4, 2, 2, 2}}));

  r.push_back(module_case("feature_loss", kModule, {{1, 3, 8, 8}, {1, 3, 8, 8}}, [](ParameterStore<double>&) {
    auto extractor = std::make_shared<FeatureExtractor<double>>(7);
    return GradCheckFn([extractor](const std::vector<T>& in) { return feature_loss(in[0], in[1], *extractor); });
  }));
  r.push_back(module_case("self_attention", kModule, {{2, 8, 8}}, [](ParameterStore<double>& s) {
    auto m = std::make_shared<EfficientSelfAttention<double>>(s, "attn", AttentionConfig{8, 2, 2});
    return GradCheckFn([m](const std::vector<T>& in) { return (*m)(in[0]); });
  }));
  r.push_back(module_case("cross_attention", kModule, {{2, 3, 8}, {2, 5, 8}}, [](ParameterStore<double>& s) {
    auto m = std::make_shared<CrossAttention<double>>(s, "xattn", AttentionConfig{8, 2, 1});
    return GradCheckFn([m](const std::vector<T>& in) { return m->forward(in[0], in[1]).output; });
  }));
  r.push_back(module_case("dwc_ffn", kModule, {{1, 6, 8}}, [](ParameterStore<double>& s) {
    auto m = std::make_shared<DwcFfn<double>>(s, "ffn", 8, 2);
    return GradCheckFn([m](const std::vector<T>& in) { return (*m)(in[0], 2, 3); });
  }));
  r.push_back(module_case("transformer_block", kModule, {{1, 8, 8}}, [](ParameterStore<double>& s) {
    auto m = std::make_shared<TransformerBlock<double>>(s, "block", AttentionConfig{8, 2, 2}, 2);
    return GradCheckFn([m](const std::vector<T>& in) { return (*m)(in[0], 2, 4); });
  }));
  r.push_back(module_case("intra_pt", kModule, {{1, 3, 8, 8}}, [](ParameterStore<double>& s) {
    auto m = std::make_shared<IntraPatchTransformer<double>>(s, "intra", 3, StageConfig{1, 8, 2, 1, 2, 3, 2}, 2);
    return GradCheckFn([m](const std::vector<T>& in) { return (*m)(in[0]).tokens; });
  }));
  r.push_back(module_case("projection_tail", kModule, {{1, 4, 2, 2}, {1, 3, 4, 4}}, [](ParameterStore<double>& s) {
    auto m = std::make_shared<ProjectionTail<double>>(s, "tail", std::vector<std::size_t>{3, 4},
                                                      std::vector<std::size_t>{4, 3});
    return GradCheckFn([m](const std::vector<T>& in) { return (*m)(FeaturePyramid<double>{{in[1], in[0]}}); });
  }));
  if (options.inject_fault) {
    r.push_back(op_case("faulty_tanh", kOp, [](const auto& in) { return faulty_tanh(in[0]); }, {{3, 4}}));
  }
  return r;
}

GradCheckResult check_network_gradient(const GradCheckOptions& options, std::size_t image_size,
                                       std::size_t min_coords, double tolerance) {
  NetworkConfig config;
  config.seed = options.seed;
  TransWeather<double> net(config);
  auto& store = net.parameters();
  Rng rng(derive_seed(options.seed, 0x4E4554ULL));
  // Structured init (zero biases, unit gains) would hide terms of the
  // backward rules; move every parameter off its initial value.
  for (const auto& e : store.entries()) {
    T t = e.tensor;
    for (auto& v : t.data()) v += rng.uniform(-0.05, 0.05);
  }
  const Shape shape{1, 3, image_size, image_size};
  const T input = random_tensor(rng, shape, false);
  const T target = random_tensor(rng, shape, false);
  FeatureExtractor<double> extractor(options.seed);
  const auto objective = [&] { return total_loss(net.restore(input), target, extractor, 0.04).item(); };

  auto& graph = Graph<double>::current();
  graph.clear();
  store.zero_grad();
  backward(total_loss(net.restore(input), target, extractor, 0.04));

  std::vector<T> params;
  for (const auto& e : store.entries()) params.push_back(e.tensor);
  std::vector<Coordinate> coords;
  for (std::size_t i = 0; i < params.size(); ++i) coords.push_back({i, rng.below(params[i].numel())});
  while (coords.size() < min_coords) {
    const std::size_t i = rng.below(params.size());
    coords.push_back({i, rng.below(params[i].numel())});
  }
  return compare("network", objective, params, coords, analytic_gradients(params), tolerance, options);
}

}  // namespace tw
