// Scratch benchmark (not part of the build): GFLOP/s on conv-typical shapes.
#include <chrono>
#include <cstdio>
#include <vector>

#include "atdt/tensor/gemm.hpp"

using namespace atdt;

int main() {
  struct Case { int m, n, k; const char* tag; };
  // im2col shapes: M=out_ch, K=in_ch*9, N=batch*out_hw
  Case cases[] = {
      {16, 8192, 27, "stem"},
      {16, 8192, 144, "res1"},
      {32, 2048, 144, "down2"},
      {32, 2048, 288, "res2"},
      {64, 512, 288, "down3"},
      {64, 512, 576, "res3/4"},
      {64, 2048, 576, "dec16"},
      {32, 8192, 576, "dec32"},
      {576, 64, 512, "dW res3"},
      {576, 512, 64, "dcol res3"},
  };
  for (auto& cs : cases) {
    std::vector<double> a(size_t(cs.m) * cs.k, 1.1), b(size_t(cs.k) * cs.n, 0.7),
        c(size_t(cs.m) * cs.n, 0.0);
    // warmup
    gemm(false, false, cs.m, cs.n, cs.k, a.data(), cs.k, b.data(), cs.n, 0.0, c.data(), cs.n);
    int reps = std::max(1, int(2e9 / (2.0 * cs.m * cs.n * cs.k)));
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r)
      gemm(false, false, cs.m, cs.n, cs.k, a.data(), cs.k, b.data(), cs.n, 0.0, c.data(), cs.n);
    auto t1 = std::chrono::steady_clock::now();
    double sec = std::chrono::duration<double>(t1 - t0).count();
    double gflops = 2.0 * cs.m * cs.n * cs.k * reps / sec / 1e9;
    std::printf("%-10s M=%-4d N=%-5d K=%-4d  %6.2f GFLOP/s\n", cs.tag, cs.m, cs.n, cs.k, gflops);
  }
  return 0;
}
