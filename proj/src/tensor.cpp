#include "transweather/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "transweather/error.hpp"

namespace tw {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

NodeId next_node_id() {
  thread_local NodeId counter = 0;
  return ++counter;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<Real>>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->id = detail::next_node_id();
  set_requires_grad(requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  std::vector<Real> data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return Tensor(Shape{}, std::vector<Real>{value});
}

template <typename Real>
std::size_t Tensor<Real>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  // Leaves carry an accumulator from the start so unreachable leaves read zero.
  if (flag && impl_->is_leaf && impl_->grad.empty()) {
    impl_->grad.assign(impl_->data.size(), Real(0));
  }
}

template <typename Real>
std::vector<Real> Tensor<Real>::grad() const {
  if (impl_->grad.empty()) return std::vector<Real>(numel(), Real(0));
  return impl_->grad;
}

template <typename Real>
std::span<Real> Tensor<Real>::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename Real>
Graph<Real>& Graph<Real>::current() {
  thread_local Graph graph;
  return graph;
}

template <typename Real>
void Graph<Real>::record(const char* op, std::vector<NodeId> inputs, const Tensor<Real>& result,
                         Backward backward) {
  records_.push_back(Record{op, std::move(inputs), result.node_id(), result.impl(),
                            std::move(backward)});
}

template <typename Real>
void Graph<Real>::backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  auto buf = loss.grad_buffer();
  buf[0] += Real(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->result->grad.empty()) continue;  // not reachable from loss
    it->backward(std::span<const Real>(it->result->grad));
  }
  records_.clear();
}

template <typename Real>
void record_op(const char* op, Tensor<Real>& result, const std::vector<Tensor<Real>>& inputs,
               typename Graph<Real>::Backward backward) {
  result.impl()->is_leaf = false;
  result.impl()->requires_grad = true;
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const auto& t : inputs) ids.push_back(t.defined() ? t.node_id() : 0);
  Graph<Real>::current().record(op, std::move(ids), result, std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void record_op<float>(const char*, Tensor<float>&, const std::vector<Tensor<float>>&,
                               Graph<float>::Backward);
template void record_op<double>(const char*, Tensor<double>&, const std::vector<Tensor<double>>&,
                                Graph<double>::Backward);

}  // namespace tw
