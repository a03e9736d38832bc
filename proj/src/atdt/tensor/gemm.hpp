#pragma once

#include <cstdint>

namespace atdt {

// Row-major C[m,n] = A_op[m,k] * B_op[k,n] + beta * C, where A_op/B_op are
// A/B optionally transposed. alpha is fixed at 1. Deterministic: the
// reduction order over k is sequential for every output element.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

// Triple-loop reference used by tests as the independent route.
void gemm_naive(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double beta, double* c, int ldc);

}  // namespace atdt
