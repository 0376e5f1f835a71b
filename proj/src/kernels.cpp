#include "pianotx/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <vector>

#include "pianotx/vec.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pianotx::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// GEMM  C[M x N] (+)= A[M x K] * B[K x N]
//
// Microkernel: 6 rows of A broadcast against 16-column slices of B, FMA into
// twelve vector accumulators. Column tails use 8/4-wide vectors, then scalar.
// Each C element accumulates in ascending-k order on every path.
// ---------------------------------------------------------------------------

#if PIANOTX_VEC_EXT

namespace {

inline void gemm_micro_6x16(const double* a, const double* b, double* c, int n,
                            int k, int lda, bool accumulate) {
  v8d a0x = {}, a0y = {}, a1x = {}, a1y = {}, a2x = {}, a2y = {};
  v8d a3x = {}, a3y = {}, a4x = {}, a4y = {}, a5x = {}, a5y = {};
  for (int p = 0; p < k; ++p) {
    const v8d b0 = v8_load(b + (size_t)p * n);
    const v8d b1 = v8_load(b + (size_t)p * n + 8);
    const v8d x0 = v8_set(a[0 * (size_t)lda + p]);
    const v8d x1 = v8_set(a[1 * (size_t)lda + p]);
    const v8d x2 = v8_set(a[2 * (size_t)lda + p]);
    const v8d x3 = v8_set(a[3 * (size_t)lda + p]);
    const v8d x4 = v8_set(a[4 * (size_t)lda + p]);
    const v8d x5 = v8_set(a[5 * (size_t)lda + p]);
    a0x += x0 * b0; a0y += x0 * b1;
    a1x += x1 * b0; a1y += x1 * b1;
    a2x += x2 * b0; a2y += x2 * b1;
    a3x += x3 * b0; a3y += x3 * b1;
    a4x += x4 * b0; a4y += x4 * b1;
    a5x += x5 * b0; a5y += x5 * b1;
  }
  if (accumulate) {
    a0x += v8_load(c + 0 * (size_t)n); a0y += v8_load(c + 0 * (size_t)n + 8);
    a1x += v8_load(c + 1 * (size_t)n); a1y += v8_load(c + 1 * (size_t)n + 8);
    a2x += v8_load(c + 2 * (size_t)n); a2y += v8_load(c + 2 * (size_t)n + 8);
    a3x += v8_load(c + 3 * (size_t)n); a3y += v8_load(c + 3 * (size_t)n + 8);
    a4x += v8_load(c + 4 * (size_t)n); a4y += v8_load(c + 4 * (size_t)n + 8);
    a5x += v8_load(c + 5 * (size_t)n); a5y += v8_load(c + 5 * (size_t)n + 8);
  }
  v8_store(c + 0 * (size_t)n, a0x); v8_store(c + 0 * (size_t)n + 8, a0y);
  v8_store(c + 1 * (size_t)n, a1x); v8_store(c + 1 * (size_t)n + 8, a1y);
  v8_store(c + 2 * (size_t)n, a2x); v8_store(c + 2 * (size_t)n + 8, a2y);
  v8_store(c + 3 * (size_t)n, a3x); v8_store(c + 3 * (size_t)n + 8, a3y);
  v8_store(c + 4 * (size_t)n, a4x); v8_store(c + 4 * (size_t)n + 8, a4y);
  v8_store(c + 5 * (size_t)n, a5x); v8_store(c + 5 * (size_t)n + 8, a5y);
}

inline void gemm_micro_6x8(const double* a, const double* b, double* c, int n,
                           int k, int lda, bool accumulate) {
  v8d a0 = {}, a1 = {}, a2 = {}, a3 = {}, a4 = {}, a5 = {};
  for (int p = 0; p < k; ++p) {
    const v8d b0 = v8_load(b + (size_t)p * n);
    a0 += v8_set(a[0 * (size_t)lda + p]) * b0;
    a1 += v8_set(a[1 * (size_t)lda + p]) * b0;
    a2 += v8_set(a[2 * (size_t)lda + p]) * b0;
    a3 += v8_set(a[3 * (size_t)lda + p]) * b0;
    a4 += v8_set(a[4 * (size_t)lda + p]) * b0;
    a5 += v8_set(a[5 * (size_t)lda + p]) * b0;
  }
  if (accumulate) {
    a0 += v8_load(c + 0 * (size_t)n); a1 += v8_load(c + 1 * (size_t)n);
    a2 += v8_load(c + 2 * (size_t)n); a3 += v8_load(c + 3 * (size_t)n);
    a4 += v8_load(c + 4 * (size_t)n); a5 += v8_load(c + 5 * (size_t)n);
  }
  v8_store(c + 0 * (size_t)n, a0); v8_store(c + 1 * (size_t)n, a1);
  v8_store(c + 2 * (size_t)n, a2); v8_store(c + 3 * (size_t)n, a3);
  v8_store(c + 4 * (size_t)n, a4); v8_store(c + 5 * (size_t)n, a5);
}

inline void gemm_micro_6x4(const double* a, const double* b, double* c, int n,
                           int k, int lda, bool accumulate) {
  v4d a0 = {}, a1 = {}, a2 = {}, a3 = {}, a4 = {}, a5 = {};
  for (int p = 0; p < k; ++p) {
    const v4d b0 = v4_load(b + (size_t)p * n);
    a0 += v4_set(a[0 * (size_t)lda + p]) * b0;
    a1 += v4_set(a[1 * (size_t)lda + p]) * b0;
    a2 += v4_set(a[2 * (size_t)lda + p]) * b0;
    a3 += v4_set(a[3 * (size_t)lda + p]) * b0;
    a4 += v4_set(a[4 * (size_t)lda + p]) * b0;
    a5 += v4_set(a[5 * (size_t)lda + p]) * b0;
  }
  if (accumulate) {
    a0 += v4_load(c + 0 * (size_t)n); a1 += v4_load(c + 1 * (size_t)n);
    a2 += v4_load(c + 2 * (size_t)n); a3 += v4_load(c + 3 * (size_t)n);
    a4 += v4_load(c + 4 * (size_t)n); a5 += v4_load(c + 5 * (size_t)n);
  }
  v4_store(c + 0 * (size_t)n, a0); v4_store(c + 1 * (size_t)n, a1);
  v4_store(c + 2 * (size_t)n, a2); v4_store(c + 3 * (size_t)n, a3);
  v4_store(c + 4 * (size_t)n, a4); v4_store(c + 5 * (size_t)n, a5);
}

// rows < 6 or columns < 4: plain scalar with the same k-ascending order
inline void gemm_scalar(const double* a, const double* b, double* c, int rows,
                        int cols, int n, int k, int lda, bool accumulate) {
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[(size_t)i * lda + p] * b[(size_t)p * n + j];
      double* cp = c + (size_t)i * n + j;
      *cp = accumulate ? *cp + acc : acc;
    }
  }
}

inline void gemm_row_block(const double* a, const double* b, double* c, int rows,
                           int n, int k, int lda, bool accumulate) {
  int j = 0;
  if (rows == 6) {
    for (; j + 16 <= n; j += 16) gemm_micro_6x16(a, b + j, c + j, n, k, lda, accumulate);
    if (j + 8 <= n) { gemm_micro_6x8(a, b + j, c + j, n, k, lda, accumulate); j += 8; }
    if (j + 4 <= n) { gemm_micro_6x4(a, b + j, c + j, n, k, lda, accumulate); j += 4; }
  }
  if (j < n) gemm_scalar(a, b + j, c + j, rows, n - j, n, k, lda, accumulate);
}

}  // namespace

void gemm_nn(double* c, const double* a, const double* b, int m, int n, int k,
             bool accumulate) {
  const int nblk = (m + 5) / 6;
#pragma omp parallel for schedule(static) if (parallel_enabled() && nblk > 1)
  for (int blk = 0; blk < nblk; ++blk) {
    const int i0 = blk * 6;
    const int rows = std::min(6, m - i0);
    gemm_row_block(a + (size_t)i0 * k, b, c + (size_t)i0 * n, rows, n, k, k,
                   accumulate);
  }
}

// ---------------------------------------------------------------------------
// GEMM-TN  C[M x N] += A^T * B with A[K x M], B[K x N]
// Four adjacent columns of A broadcast from one cache line per k step.
// ---------------------------------------------------------------------------

namespace {

inline void tn_micro_4x16(const double* a, const double* b, double* c, int m,
                          int n, int k) {
  v8d a0x = {}, a0y = {}, a1x = {}, a1y = {}, a2x = {}, a2y = {}, a3x = {}, a3y = {};
  for (int p = 0; p < k; ++p) {
    const double* ap = a + (size_t)p * m;
    const v8d b0 = v8_load(b + (size_t)p * n);
    const v8d b1 = v8_load(b + (size_t)p * n + 8);
    const v8d x0 = v8_set(ap[0]);
    const v8d x1 = v8_set(ap[1]);
    const v8d x2 = v8_set(ap[2]);
    const v8d x3 = v8_set(ap[3]);
    a0x += x0 * b0; a0y += x0 * b1;
    a1x += x1 * b0; a1y += x1 * b1;
    a2x += x2 * b0; a2y += x2 * b1;
    a3x += x3 * b0; a3y += x3 * b1;
  }
  v8_store(c + 0 * (size_t)n, v8_load(c + 0 * (size_t)n) + a0x);
  v8_store(c + 0 * (size_t)n + 8, v8_load(c + 0 * (size_t)n + 8) + a0y);
  v8_store(c + 1 * (size_t)n, v8_load(c + 1 * (size_t)n) + a1x);
  v8_store(c + 1 * (size_t)n + 8, v8_load(c + 1 * (size_t)n + 8) + a1y);
  v8_store(c + 2 * (size_t)n, v8_load(c + 2 * (size_t)n) + a2x);
  v8_store(c + 2 * (size_t)n + 8, v8_load(c + 2 * (size_t)n + 8) + a2y);
  v8_store(c + 3 * (size_t)n, v8_load(c + 3 * (size_t)n) + a3x);
  v8_store(c + 3 * (size_t)n + 8, v8_load(c + 3 * (size_t)n + 8) + a3y);
}

inline void tn_scalar(const double* a, const double* b, double* c, int rows,
                      int cols, int m, int n, int k) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[(size_t)p * m + i] * b[(size_t)p * n + j];
      c[(size_t)i * n + j] += acc;
    }
}

}  // namespace

void gemm_tn(double* c, const double* a, const double* b, int k, int m, int n) {
  const int nblk = (m + 3) / 4;
#pragma omp parallel for schedule(static) if (parallel_enabled() && nblk > 1)
  for (int blk = 0; blk < nblk; ++blk) {
    const int i0 = blk * 4;
    const int rows = std::min(4, m - i0);
    int j = 0;
    if (rows == 4)
      for (; j + 16 <= n; j += 16)
        tn_micro_4x16(a + i0, b + j, c + (size_t)i0 * n + j, m, n, k);
    if (j < n) tn_scalar(a + i0, b + j, c + (size_t)i0 * n + j, rows, n - j, m, n, k);
  }
}

#else  // !PIANOTX_VEC_EXT — scalar fallbacks

void gemm_nn(double* c, const double* a, const double* b, int m, int n, int k,
             bool accumulate) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && m > 1)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[(size_t)i * k + p] * b[(size_t)p * n + j];
      double* cp = c + (size_t)i * n + j;
      *cp = accumulate ? *cp + acc : acc;
    }
}

void gemm_tn(double* c, const double* a, const double* b, int k, int m, int n) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && m > 1)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[(size_t)p * m + i] * b[(size_t)p * n + j];
      c[(size_t)i * n + j] += acc;
    }
}

#endif

void transpose(double* dst, const double* src, int rows, int cols) {
  constexpr int B = 32;
  for (int i0 = 0; i0 < rows; i0 += B)
    for (int j0 = 0; j0 < cols; j0 += B) {
      const int i1 = std::min(rows, i0 + B), j1 = std::min(cols, j0 + B);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j)
          dst[(size_t)j * rows + i] = src[(size_t)i * cols + j];
    }
}

// ---------------------------------------------------------------------------
// 3x3 NHWC convolution
// ---------------------------------------------------------------------------

namespace {

#if PIANOTX_VEC_EXT

// Four consecutive f positions, 16 output channels. Six input broadcasts per
// (dt, c) are shared across the three frequency taps.
inline void conv_micro_4x16(const double* __restrict xp, const double* __restrict k,
                            double* __restrict y, int fp, int c_in, int m, int m0,
                            int t, int f0, int f_len) {
  v8d a0x = {}, a0y = {}, a1x = {}, a1y = {}, a2x = {}, a2y = {}, a3x = {}, a3y = {};
  for (int dt = 0; dt < 3; ++dt) {
    const double* xt = xp + ((size_t)(t + dt) * fp + f0) * c_in;
    const double* kt = k + ((size_t)dt * 3 * c_in) * m + m0;
    for (int c = 0; c < c_in; ++c) {
      const v8d x0 = v8_set(xt[c]);
      const v8d x1 = v8_set(xt[(size_t)c_in + c]);
      const v8d x2 = v8_set(xt[2 * (size_t)c_in + c]);
      const v8d x3 = v8_set(xt[3 * (size_t)c_in + c]);
      const v8d x4 = v8_set(xt[4 * (size_t)c_in + c]);
      const v8d x5 = v8_set(xt[5 * (size_t)c_in + c]);
      {
        const double* kr = kt + (size_t)c * m;
        const v8d k0 = v8_load(kr), k1 = v8_load(kr + 8);
        a0x += x0 * k0; a0y += x0 * k1;
        a1x += x1 * k0; a1y += x1 * k1;
        a2x += x2 * k0; a2y += x2 * k1;
        a3x += x3 * k0; a3y += x3 * k1;
      }
      {
        const double* kr = kt + ((size_t)c_in + c) * m;
        const v8d k0 = v8_load(kr), k1 = v8_load(kr + 8);
        a0x += x1 * k0; a0y += x1 * k1;
        a1x += x2 * k0; a1y += x2 * k1;
        a2x += x3 * k0; a2y += x3 * k1;
        a3x += x4 * k0; a3y += x4 * k1;
      }
      {
        const double* kr = kt + (2 * (size_t)c_in + c) * m;
        const v8d k0 = v8_load(kr), k1 = v8_load(kr + 8);
        a0x += x2 * k0; a0y += x2 * k1;
        a1x += x3 * k0; a1y += x3 * k1;
        a2x += x4 * k0; a2y += x4 * k1;
        a3x += x5 * k0; a3y += x5 * k1;
      }
    }
  }
  double* y0 = y + ((size_t)t * f_len + f0) * m + m0;
  v8_store(y0, a0x); v8_store(y0 + 8, a0y);
  v8_store(y0 + m, a1x); v8_store(y0 + m + 8, a1y);
  v8_store(y0 + 2 * (size_t)m, a2x); v8_store(y0 + 2 * (size_t)m + 8, a2y);
  v8_store(y0 + 3 * (size_t)m, a3x); v8_store(y0 + 3 * (size_t)m + 8, a3y);
}

inline void conv_micro_1x16(const double* __restrict xp, const double* __restrict k,
                            double* __restrict y, int fp, int c_in, int m, int m0,
                            int t, int f, int f_len) {
  v8d ax = {}, ay = {};
  for (int dt = 0; dt < 3; ++dt) {
    const double* xt = xp + ((size_t)(t + dt) * fp + f) * c_in;
    const double* kt = k + ((size_t)dt * 3 * c_in) * m + m0;
    for (int c = 0; c < c_in; ++c) {
      for (int df = 0; df < 3; ++df) {
        const v8d xv = v8_set(xt[(size_t)df * c_in + c]);
        const double* kr = kt + ((size_t)df * c_in + c) * m;
        ax += xv * v8_load(kr);
        ay += xv * v8_load(kr + 8);
      }
    }
  }
  double* y0 = y + ((size_t)t * f_len + f) * m + m0;
  v8_store(y0, ax); v8_store(y0 + 8, ay);
}

template <typename V, V (*LOAD)(const double*), void (*STORE)(double*, V),
          V (*SET)(double)>
inline void conv_micro_4xV(const double* __restrict xp, const double* __restrict k,
                           double* __restrict y, int fp, int c_in, int m, int m0,
                           int t, int f0, int f_len) {
  V a0 = {}, a1 = {}, a2 = {}, a3 = {};
  for (int dt = 0; dt < 3; ++dt) {
    const double* xt = xp + ((size_t)(t + dt) * fp + f0) * c_in;
    const double* kt = k + ((size_t)dt * 3 * c_in) * m + m0;
    for (int c = 0; c < c_in; ++c) {
      const V x0 = SET(xt[c]);
      const V x1 = SET(xt[(size_t)c_in + c]);
      const V x2 = SET(xt[2 * (size_t)c_in + c]);
      const V x3 = SET(xt[3 * (size_t)c_in + c]);
      const V x4 = SET(xt[4 * (size_t)c_in + c]);
      const V x5 = SET(xt[5 * (size_t)c_in + c]);
      const V k0 = LOAD(kt + (size_t)c * m);
      const V k1 = LOAD(kt + ((size_t)c_in + c) * m);
      const V k2 = LOAD(kt + (2 * (size_t)c_in + c) * m);
      a0 += x0 * k0 + x1 * k1 + x2 * k2;
      a1 += x1 * k0 + x2 * k1 + x3 * k2;
      a2 += x2 * k0 + x3 * k1 + x4 * k2;
      a3 += x3 * k0 + x4 * k1 + x5 * k2;
    }
  }
  double* y0 = y + ((size_t)t * f_len + f0) * m + m0;
  STORE(y0, a0); STORE(y0 + m, a1);
  STORE(y0 + 2 * (size_t)m, a2); STORE(y0 + 3 * (size_t)m, a3);
}

template <typename V, V (*LOAD)(const double*), void (*STORE)(double*, V),
          V (*SET)(double)>
inline void conv_micro_1xV(const double* __restrict xp, const double* __restrict k,
                           double* __restrict y, int fp, int c_in, int m, int m0,
                           int t, int f, int f_len) {
  V a = {};
  for (int dt = 0; dt < 3; ++dt) {
    const double* xt = xp + ((size_t)(t + dt) * fp + f) * c_in;
    const double* kt = k + ((size_t)dt * 3 * c_in) * m + m0;
    for (int c = 0; c < c_in; ++c)
      for (int df = 0; df < 3; ++df)
        a += SET(xt[(size_t)df * c_in + c]) * LOAD(kt + ((size_t)df * c_in + c) * m);
  }
  STORE(y + ((size_t)t * f_len + f) * m + m0, a);
}

#endif  // PIANOTX_VEC_EXT

// scalar path, mb <= 8: used for channel tails and the no-vector-extension build
inline void conv_scalar(const double* __restrict xp, const double* __restrict k,
                        double* __restrict y, int fp, int c_in, int m, int m0,
                        int mb, int t, int f, int f_len) {
  double acc[8];
  for (int j = 0; j < mb; ++j) acc[j] = 0.0;
  for (int dt = 0; dt < 3; ++dt) {
    const double* xt = xp + ((size_t)(t + dt) * fp + f) * c_in;
    const double* kt = k + ((size_t)dt * 3 * c_in) * m + m0;
    for (int c = 0; c < c_in; ++c)
      for (int df = 0; df < 3; ++df) {
        const double xv = xt[(size_t)df * c_in + c];
        const double* kr = kt + ((size_t)df * c_in + c) * m;
        for (int j = 0; j < mb; ++j) acc[j] += xv * kr[j];
      }
  }
  double* y0 = y + ((size_t)t * f_len + f) * m + m0;
  for (int j = 0; j < mb; ++j) y0[j] = acc[j];
}

inline void conv_row(const double* xp, const double* k, double* y, int fp,
                     int c_in, int m, int t, int f_len) {
  int m0 = 0;
#if PIANOTX_VEC_EXT
  for (; m0 + 16 <= m; m0 += 16) {
    int f0 = 0;
    for (; f0 + 4 <= f_len; f0 += 4)
      conv_micro_4x16(xp, k, y, fp, c_in, m, m0, t, f0, f_len);
    for (; f0 < f_len; ++f0) conv_micro_1x16(xp, k, y, fp, c_in, m, m0, t, f0, f_len);
  }
  if (m0 + 8 <= m) {
    int f0 = 0;
    for (; f0 + 4 <= f_len; f0 += 4)
      conv_micro_4xV<v8d, v8_load, v8_store, v8_set>(xp, k, y, fp, c_in, m, m0, t, f0, f_len);
    for (; f0 < f_len; ++f0)
      conv_micro_1xV<v8d, v8_load, v8_store, v8_set>(xp, k, y, fp, c_in, m, m0, t, f0, f_len);
    m0 += 8;
  }
  if (m0 + 4 <= m) {
    int f0 = 0;
    for (; f0 + 4 <= f_len; f0 += 4)
      conv_micro_4xV<v4d, v4_load, v4_store, v4_set>(xp, k, y, fp, c_in, m, m0, t, f0, f_len);
    for (; f0 < f_len; ++f0)
      conv_micro_1xV<v4d, v4_load, v4_store, v4_set>(xp, k, y, fp, c_in, m, m0, t, f0, f_len);
    m0 += 4;
  }
#endif
  for (; m0 < m; m0 += 8) {
    const int mb = std::min(8, m - m0);
    for (int f = 0; f < f_len; ++f)
      conv_scalar(xp, k, y, fp, c_in, m, m0, mb, t, f, f_len);
  }
}

}  // namespace

void conv3x3_nhwc(double* y, const double* x_padded, const double* kernel,
                  const double* bias, int t_len, int f_len, int c_in, int m_out) {
  const int fp = f_len + 2;
  const int tb = 16;
  const int nblk = (t_len + tb - 1) / tb;
#pragma omp parallel for schedule(static) if (parallel_enabled() && nblk > 1)
  for (int blk = 0; blk < nblk; ++blk) {
    const int t1 = std::min(t_len, (blk + 1) * tb);
    for (int t = blk * tb; t < t1; ++t)
      conv_row(x_padded, kernel, y, fp, c_in, m_out, t, f_len);
  }
  if (bias) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && t_len > 1)
    for (int t = 0; t < t_len; ++t) {
      double* yt = y + (size_t)t * f_len * m_out;
      for (int f = 0; f < f_len; ++f)
        for (int j = 0; j < m_out; ++j) yt[(size_t)f * m_out + j] += bias[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution kernel gradient. Fixed time chunks accumulate private partials
// that are reduced in chunk order, independent of thread count.
// ---------------------------------------------------------------------------

void conv3x3_nhwc_grad_kernel(double* dw, const double* x_padded,
                              const double* dy, int t_len, int f_len, int c_in,
                              int m_out) {
  const int fp = f_len + 2;
  const size_t wsize = 9 * (size_t)c_in * m_out;
  const int nchunk = t_len >= 128 ? 8 : 1;
  const int chunk = (t_len + nchunk - 1) / nchunk;
  std::vector<double> partial(wsize * nchunk, 0.0);
#pragma omp parallel for schedule(static) if (parallel_enabled() && nchunk > 1)
  for (int ci = 0; ci < nchunk; ++ci) {
    double* w = partial.data() + wsize * ci;
    const int t1 = std::min(t_len, (ci + 1) * chunk);
    for (int t = ci * chunk; t < t1; ++t) {
      for (int dt = 0; dt < 3; ++dt) {
        const double* xt = x_padded + (size_t)(t + dt) * fp * c_in;
        for (int df = 0; df < 3; ++df) {
          double* wt = w + ((size_t)dt * 3 + df) * c_in * m_out;
          for (int f = 0; f < f_len; ++f) {
            const double* xv = xt + (size_t)(f + df) * c_in;
            const double* dyr = dy + ((size_t)t * f_len + f) * m_out;
            for (int c = 0; c < c_in; ++c) {
              const double x = xv[c];
              double* wr = wt + (size_t)c * m_out;
              for (int j = 0; j < m_out; ++j) wr[j] += x * dyr[j];
            }
          }
        }
      }
    }
  }
  for (int ci = 0; ci < nchunk; ++ci) {
    const double* w = partial.data() + wsize * ci;
    for (size_t i = 0; i < wsize; ++i) dw[i] += w[i];
  }
}

void pad_nhwc(double* padded, const double* x, int t_len, int f_len, int c) {
  const int fp = f_len + 2;
  std::memset(padded, 0, sizeof(double) * (size_t)(t_len + 2) * fp * c);
#pragma omp parallel for schedule(static) if (parallel_enabled() && t_len > 1)
  for (int t = 0; t < t_len; ++t)
    std::memcpy(padded + ((size_t)(t + 1) * fp + 1) * c,
                x + (size_t)t * f_len * c, sizeof(double) * (size_t)f_len * c);
}

double deterministic_sum(const double* p, size_t n) {
  constexpr size_t chunk = 4096;
  if (n <= chunk) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += p[i];
    return s;
  }
  const size_t nchunk = (n + chunk - 1) / chunk;
  std::vector<double> partial(nchunk);
#pragma omp parallel for schedule(static) if (parallel_enabled())
  for (long long ci = 0; ci < (long long)nchunk; ++ci) {
    const size_t lo = (size_t)ci * chunk, hi = std::min(n, lo + chunk);
    double s = 0.0;
    for (size_t i = lo; i < hi; ++i) s += p[i];
    partial[ci] = s;
  }
  double s = 0.0;
  for (size_t ci = 0; ci < nchunk; ++ci) s += partial[ci];
  return s;
}

}  // namespace pianotx::kernels
