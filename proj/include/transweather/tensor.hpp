#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Every operation whose inputs require gradients appends a record to the
// thread-local Graph of the matching scalar type. backward() walks the
// records in reverse order and frees the graph afterwards. Tensor<float>
// is used for training; Tensor<double> is the check mode used for
// finite-difference verification.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tw {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  NodeId id = 0;
};

NodeId next_node_id();

}  // namespace detail

template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  Real item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->is_leaf; }
  NodeId node_id() const { return impl_->id; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated.
  std::vector<Real> grad() const;
  // Allocates a zero accumulator on first use. Handle semantics: callable on
  // const handles because the storage is shared.
  std::span<Real> grad_buffer() const;
  void zero_grad();

  // Deep copy with no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl<Real>>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<Real>> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename Real>
class Graph {
 public:
  using Backward = std::function<void(std::span<const Real> grad_out)>;

  struct Record {
    const char* op;
    std::vector<NodeId> inputs;
    NodeId output;
    std::shared_ptr<detail::TensorImpl<Real>> result;
    Backward backward;
  };

  // Per-thread graph for this scalar type.
  static Graph& current();

  void record(const char* op, std::vector<NodeId> inputs, const Tensor<Real>& result,
              Backward backward);

  // Populates gradients of every reachable tensor, then clears the graph.
  void backward(const Tensor<Real>& loss);

  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

template <typename Real>
bool needs_grad(std::initializer_list<Tensor<Real>> inputs) {
  if (!grad_enabled()) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

// Marks `result` as an interior node and appends it to the current graph.
template <typename Real>
void record_op(const char* op, Tensor<Real>& result, const std::vector<Tensor<Real>>& inputs,
               typename Graph<Real>::Backward backward);

template <typename Real>
void backward(const Tensor<Real>& loss) {
  Graph<Real>::current().backward(loss);
}

}  // namespace tw
