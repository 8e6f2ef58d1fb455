// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense kernels with a serial reference and an OpenMP version. Both variants
// accumulate every output element in the same order, so results are
// bit-identical regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "immfm/tensor.hpp"

namespace immfm::kernels {

enum class Transpose { no, yes };

/// C (+)= op(A) * op(B). C must already have the product shape.
void gemm_serial(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
                 bool accumulate);
void gemm_parallel(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
                   bool accumulate);

/// Dispatches to the parallel kernel above a work threshold.
void gemm(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
          bool accumulate);

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
Tensor squared_distances_serial(std::span<const std::vector<double>> a,
                                std::span<const std::vector<double>> b);
Tensor squared_distances_parallel(std::span<const std::vector<double>> a,
                                  std::span<const std::vector<double>> b);

/// Work (multiply-adds) above which gemm() goes parallel.
inline constexpr std::size_t kParallelGemmThreshold = 1u << 15;

}  // namespace immfm::kernels
