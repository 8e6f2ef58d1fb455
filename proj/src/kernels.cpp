// SPDX-License-Identifier: Apache-2.0
#include "immfm/kernels.hpp"

#include <omp.h>

#include "immfm/error.hpp"

namespace immfm::kernels {
namespace {

struct GemmDims {
  std::size_t m, k, n;
};

GemmDims check_dims(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b,
                    const Tensor& c) {
  const std::size_t m = ta == Transpose::no ? a.rows() : a.cols();
  const std::size_t ka = ta == Transpose::no ? a.cols() : a.rows();
  const std::size_t kb = tb == Transpose::no ? b.rows() : b.cols();
  const std::size_t n = tb == Transpose::no ? b.cols() : b.rows();
  if (ka != kb || c.rows() != m || c.cols() != n) {
    throw DimensionError("gemm: incompatible shapes " + a.shape_string() +
                         (ta == Transpose::yes ? "^T" : "") + " * " + b.shape_string() +
                         (tb == Transpose::yes ? "^T" : "") + " -> " + c.shape_string());
  }
  return {m, ka, n};
}

// One output row. Accumulation order over k is fixed (ascending).
inline void gemm_row(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
                     std::size_t i, const GemmDims& d, bool accumulate) {
  double* out = c.row(i).data();
  if (!accumulate) {
    for (std::size_t j = 0; j < d.n; ++j) out[j] = 0.0;
  }
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t p = 0; p < d.k; ++p) {
    const double aip = ta == Transpose::no ? ad[i * a.cols() + p] : ad[p * a.cols() + i];
    if (tb == Transpose::no) {
      const double* brow = bd + p * b.cols();
      for (std::size_t j = 0; j < d.n; ++j) out[j] += aip * brow[j];
    } else {
      for (std::size_t j = 0; j < d.n; ++j) out[j] += aip * bd[j * b.cols() + p];
    }
  }
}

}  // namespace

void gemm_serial(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
                 bool accumulate) {
  const GemmDims d = check_dims(ta, tb, a, b, c);
  for (std::size_t i = 0; i < d.m; ++i) gemm_row(ta, tb, a, b, c, i, d, accumulate);
}

void gemm_parallel(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
                   bool accumulate) {
  const GemmDims d = check_dims(ta, tb, a, b, c);
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    gemm_row(ta, tb, a, b, c, static_cast<std::size_t>(i), d, accumulate);
  }
}

void gemm(Transpose ta, Transpose tb, const Tensor& a, const Tensor& b, Tensor& c,
          bool accumulate) {
  const std::size_t work = c.size() * (ta == Transpose::no ? a.cols() : a.rows());
  if (work >= kParallelGemmThreshold && omp_get_max_threads() > 1) {
    gemm_parallel(ta, tb, a, b, c, accumulate);
  } else {
    gemm_serial(ta, tb, a, b, c, accumulate);
  }
}

namespace {

double squared_distance(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw DimensionError("point dimensions differ: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

}  // namespace

Tensor squared_distances_serial(std::span<const std::vector<double>> a,
                                std::span<const std::vector<double>> b) {
  Tensor out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = squared_distance(a[i], b[j]);
  return out;
}

Tensor squared_distances_parallel(std::span<const std::vector<double>> a,
                                  std::span<const std::vector<double>> b) {
  Tensor out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != a[0].size()) throw DimensionError("ragged point set");
  }
  for (const auto& y : b) {
    if (y.size() != a[0].size()) throw DimensionError("point sets differ in dimension");
  }
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& x = a[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - b[j][k];
        s += diff * diff;
      }
      out(static_cast<std::size_t>(i), j) = s;
    }
  }
  return out;
}

}  // namespace immfm::kernels
