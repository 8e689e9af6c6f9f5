#include "semaug/kernels.hpp"

#include <cstdint>
#include <vector>

namespace semaug::kernels {
namespace {

// Row-major copy of op(P), or P itself when no transpose is needed.
const double* plain(const double* p, bool trans, std::size_t rows, std::size_t cols, std::vector<double>& buf) {
  if (!trans) return p;
  buf.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) buf[r * cols + c] = p[c * rows + r];
  return buf.data();
}

// C(i, j) is accumulated over p = 0..k-1 in order.
inline void gemm_row(GemmDims d, const double* a, const double* b, double* c, bool accumulate, std::size_t i) {
  double* crow = c + i * d.n;
  const double* arow = a + i * d.k;
  if (!accumulate)
    for (std::size_t j = 0; j < d.n; ++j) crow[j] = 0.0;
  for (std::size_t p = 0; p < d.k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

namespace serial {
void gemm(GemmDims d, const double* a, bool trans_a, const double* b, bool trans_b, double* c,
          bool accumulate) {
  std::vector<double> abuf, bbuf;
  a = plain(a, trans_a, d.m, d.k, abuf);
  b = plain(b, trans_b, d.k, d.n, bbuf);
  for (std::size_t i = 0; i < d.m; ++i) gemm_row(d, a, b, c, accumulate, i);
}
}  // namespace serial

namespace parallel {
void gemm(GemmDims d, const double* a, bool trans_a, const double* b, bool trans_b, double* c,
          bool accumulate) {
  const bool big = d.m * d.n * d.k >= kMinParallelWork && d.m > 1;
  const auto rows = static_cast<std::int64_t>(d.m);
  std::vector<double> abuf, bbuf;
  a = plain(a, trans_a, d.m, d.k, abuf);
  b = plain(b, trans_b, d.k, d.n, bbuf);
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t i = 0; i < rows; ++i) {
    gemm_row(d, a, b, c, accumulate, static_cast<std::size_t>(i));
  }
}
}  // namespace parallel

}  // namespace semaug::kernels
