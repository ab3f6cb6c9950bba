#pragma once

#include <cstddef>
#include <vector>

#include "transweather/ops.hpp"

namespace tw::detail {

// Output shape plus per-axis element strides of each operand (0 on
// broadcast axes).
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;
};

BroadcastPlan make_plan(const Shape& a, const Shape& b);

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t rank = plan.out.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t total = shape_numel(plan.out);
  if (total == 0) return;
  const std::size_t inner = plan.out[rank - 1];
  const std::size_t as = plan.a_stride[rank - 1];
  const std::size_t bs = plan.b_stride[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ao = 0, bo = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ao + j * as, bo + j * bs);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ao += plan.a_stride[d];
      bo += plan.b_stride[d];
      if (idx[d] < plan.out[d]) break;
      ao -= plan.a_stride[d] * plan.out[d];
      bo -= plan.b_stride[d] * plan.out[d];
      idx[d] = 0;
    }
  }
}

}  // namespace tw::detail
