#pragma once

#include <cstddef>

// Dense matrix kernels. `serial` is the reference implementation; `parallel`
// distributes output rows over OpenMP threads. Both accumulate each output
// element in the same order, so their results are bitwise identical.
namespace semaug::kernels {

struct GemmDims {
  std::size_t m;  // rows of op(A) and C
  std::size_t k;  // inner dimension
  std::size_t n;  // cols of op(B) and C
};

namespace serial {
/// C (+)= op(A) * op(B). A is m x k (or k x m when trans_a), B is k x n (or n x k when trans_b).
void gemm(GemmDims d, const double* a, bool trans_a, const double* b, bool trans_b, double* c,
          bool accumulate);
}  // namespace serial

namespace parallel {
void gemm(GemmDims d, const double* a, bool trans_a, const double* b, bool trans_b, double* c,
          bool accumulate);

/// Below this many multiply-adds the parallel kernel runs on the calling thread.
inline constexpr std::size_t kMinParallelWork = 1u << 16;
}  // namespace parallel

/// Dispatches to the parallel kernel; used by the autodiff graph.
inline void gemm(GemmDims d, const double* a, bool trans_a, const double* b, bool trans_b, double* c,
                 bool accumulate) {
  parallel::gemm(d, a, trans_a, b, trans_b, c, accumulate);
}

}  // namespace semaug::kernels
