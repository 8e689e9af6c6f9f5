// Serial vs OpenMP gemm. Prints one row per size: milliseconds per call for
// each kernel and whether the outputs agree bitwise.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "semaug/kernels.hpp"
#include "semaug/rng.hpp"

namespace k = semaug::kernels;

template <typename F>
double time_ms(F&& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
}

int main() {
  std::printf("threads %d\n", omp_get_max_threads());
  std::printf("%6s %6s %6s %5s %12s %12s %8s %s\n", "m", "k", "n", "trans", "serial_ms", "parallel_ms", "speedup",
              "bitwise");
  semaug::Rng rng(1);
  const std::size_t sizes[][3] = {{16, 32, 32}, {64, 64, 64}, {128, 128, 128}, {256, 256, 256}, {512, 256, 512}};
  for (const auto& s : sizes) {
    for (int trans = 0; trans < 2; ++trans) {
      const k::GemmDims d{s[0], s[1], s[2]};
      std::vector<double> a(d.m * d.k), b(d.k * d.n), c1(d.m * d.n), c2(d.m * d.n);
      for (double& x : a) x = rng.normal();
      for (double& x : b) x = rng.normal();
      const int reps = d.m * d.n * d.k > (1u << 24) ? 3 : 20;
      const double ts = time_ms([&] { k::serial::gemm(d, a.data(), trans, b.data(), trans, c1.data(), false); }, reps);
      const double tp = time_ms([&] { k::parallel::gemm(d, a.data(), trans, b.data(), trans, c2.data(), false); }, reps);
      const bool same = std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0;
      std::printf("%6zu %6zu %6zu %5d %12.3f %12.3f %8.2f %s\n", d.m, d.k, d.n, trans, ts, tp, ts / tp,
                  same ? "yes" : "NO");
    }
  }
}
