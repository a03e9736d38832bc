#include "atdt/tensor/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace atdt {
namespace {

#if defined(__AVX512F__)
constexpr int MR = 8;
constexpr int NR = 16;
#elif defined(__AVX2__) && defined(__FMA__)
constexpr int MR = 4;
constexpr int NR = 8;
#else
constexpr int MR = 4;
constexpr int NR = 4;
#endif

constexpr int KC = 256;
constexpr int MC = 128;  // multiple of MR
constexpr int NC = 2048; // multiple of NR

inline double at(const double* p, int ld, bool trans, int row, int col) {
  return trans ? p[static_cast<int64_t>(col) * ld + row] : p[static_cast<int64_t>(row) * ld + col];
}

// A panel: for each MR-strip of rows, kc slices of MR contiguous values.
void pack_a(const double* a, int lda, bool trans, int m0, int mc, int k0, int kc, double* ap) {
  for (int i = 0; i < mc; i += MR) {
    const int ib = std::min(MR, mc - i);
    for (int k = 0; k < kc; ++k) {
      for (int r = 0; r < ib; ++r) *ap++ = at(a, lda, trans, m0 + i + r, k0 + k);
      for (int r = ib; r < MR; ++r) *ap++ = 0.0;
    }
  }
}

// B panel: for each NR-strip of columns, kc slices of NR contiguous values.
void pack_b(const double* b, int ldb, bool trans, int k0, int kc, int n0, int nc, double* bp) {
  for (int j = 0; j < nc; j += NR) {
    const int jb = std::min(NR, nc - j);
    for (int k = 0; k < kc; ++k) {
      for (int cidx = 0; cidx < jb; ++cidx) *bp++ = at(b, ldb, trans, k0 + k, n0 + j + cidx);
      for (int cidx = jb; cidx < NR; ++cidx) *bp++ = 0.0;
    }
  }
}

#if defined(__AVX512F__)

// 8x16 f64 microkernel: acc[r][0..1] are two zmm per row.
void kernel_full(int kc, const double* ap, const double* bp, double* c, int ldc, double beta) {
  __m512d acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm512_setzero_pd();
    acc[r][1] = _mm512_setzero_pd();
  }
  for (int k = 0; k < kc; ++k) {
    const __m512d b0 = _mm512_loadu_pd(bp + k * NR);
    const __m512d b1 = _mm512_loadu_pd(bp + k * NR + 8);
    const double* arow = ap + k * MR;
    for (int r = 0; r < MR; ++r) {
      const __m512d av = _mm512_set1_pd(arow[r]);
      acc[r][0] = _mm512_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + static_cast<int64_t>(r) * ldc;
    if (beta == 0.0) {
      _mm512_storeu_pd(crow, acc[r][0]);
      _mm512_storeu_pd(crow + 8, acc[r][1]);
    } else if (beta == 1.0) {
      _mm512_storeu_pd(crow, _mm512_add_pd(_mm512_loadu_pd(crow), acc[r][0]));
      _mm512_storeu_pd(crow + 8, _mm512_add_pd(_mm512_loadu_pd(crow + 8), acc[r][1]));
    } else {
      const __m512d bv = _mm512_set1_pd(beta);
      _mm512_storeu_pd(crow, _mm512_fmadd_pd(bv, _mm512_loadu_pd(crow), acc[r][0]));
      _mm512_storeu_pd(crow + 8, _mm512_fmadd_pd(bv, _mm512_loadu_pd(crow + 8), acc[r][1]));
    }
  }
}

#elif defined(__AVX2__) && defined(__FMA__)

void kernel_full(int kc, const double* ap, const double* bp, double* c, int ldc, double beta) {
  __m256d acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (int k = 0; k < kc; ++k) {
    const __m256d b0 = _mm256_loadu_pd(bp + k * NR);
    const __m256d b1 = _mm256_loadu_pd(bp + k * NR + 4);
    const double* arow = ap + k * MR;
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_set1_pd(arow[r]);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + static_cast<int64_t>(r) * ldc;
    if (beta == 0.0) {
      _mm256_storeu_pd(crow, acc[r][0]);
      _mm256_storeu_pd(crow + 4, acc[r][1]);
    } else if (beta == 1.0) {
      _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc[r][0]));
      _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc[r][1]));
    } else {
      const __m256d bv = _mm256_set1_pd(beta);
      _mm256_storeu_pd(crow, _mm256_fmadd_pd(bv, _mm256_loadu_pd(crow), acc[r][0]));
      _mm256_storeu_pd(crow + 4, _mm256_fmadd_pd(bv, _mm256_loadu_pd(crow + 4), acc[r][1]));
    }
  }
}

#else

void kernel_full(int kc, const double* ap, const double* bp, double* c, int ldc, double beta) {
  double acc[MR][NR] = {};
  for (int k = 0; k < kc; ++k) {
    const double* brow = bp + k * NR;
    const double* arow = ap + k * MR;
    for (int r = 0; r < MR; ++r)
      for (int j = 0; j < NR; ++j) acc[r][j] += arow[r] * brow[j];
  }
  for (int r = 0; r < MR; ++r) {
    double* crow = c + static_cast<int64_t>(r) * ldc;
    for (int j = 0; j < NR; ++j) crow[j] = beta == 0.0 ? acc[r][j] : acc[r][j] + beta * crow[j];
  }
}

#endif

// Partial tile: compute into a full MR x NR scratch, then copy the live part.
void kernel_edge(int kc, const double* ap, const double* bp, double* c, int ldc, double beta,
                 int mvalid, int nvalid) {
  double scratch[MR * NR];
  kernel_full(kc, ap, bp, scratch, NR, 0.0);
  for (int r = 0; r < mvalid; ++r) {
    double* crow = c + static_cast<int64_t>(r) * ldc;
    const double* srow = scratch + r * NR;
    for (int j = 0; j < nvalid; ++j)
      crow[j] = beta == 0.0 ? srow[j] : srow[j] + beta * crow[j];
  }
}

struct PackBuffers {
  std::vector<double> ap, bp;
};

PackBuffers& buffers() {
  thread_local PackBuffers bufs;
  return bufs;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i) {
      double* crow = c + static_cast<int64_t>(i) * ldc;
      if (beta == 0.0)
        std::memset(crow, 0, sizeof(double) * n);
      else
        for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    return;
  }

  auto& bufs = buffers();
  bufs.ap.resize(static_cast<size_t>(MC) * KC + MR * KC);
  bufs.bp.resize(static_cast<size_t>(NC) * KC + NR * KC);

  for (int n0 = 0; n0 < n; n0 += NC) {
    const int nc = std::min(NC, n - n0);
    for (int k0 = 0; k0 < k; k0 += KC) {
      const int kc = std::min(KC, k - k0);
      const double beta_eff = (k0 == 0) ? beta : 1.0;
      pack_b(b, ldb, trans_b, k0, kc, n0, nc, bufs.bp.data());
      const int ncr = (nc + NR - 1) / NR;  // packed NR-strips
      for (int m0 = 0; m0 < m; m0 += MC) {
        const int mc = std::min(MC, m - m0);
        pack_a(a, lda, trans_a, m0, mc, k0, kc, bufs.ap.data());
        for (int i = 0; i < mc; i += MR) {
          const int mvalid = std::min(MR, mc - i);
          const double* ap = bufs.ap.data() + static_cast<size_t>(i / MR) * MR * kc;
          for (int js = 0; js < ncr; ++js) {
            const int j = js * NR;
            const int nvalid = std::min(NR, nc - j);
            const double* bp = bufs.bp.data() + static_cast<size_t>(js) * NR * kc;
            double* ctile = c + static_cast<int64_t>(m0 + i) * ldc + n0 + j;
            if (mvalid == MR && nvalid == NR)
              kernel_full(kc, ap, bp, ctile, ldc, beta_eff);
            else
              kernel_edge(kc, ap, bp, ctile, ldc, beta_eff, mvalid, nvalid);
          }
        }
      }
    }
  }
}

void gemm_naive(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += at(a, lda, trans_a, i, p) * at(b, ldb, trans_b, p, j);
      double& out = c[static_cast<int64_t>(i) * ldc + j];
      out = beta == 0.0 ? s : s + beta * out;
    }
  }
}

}  // namespace atdt
