#pragma once

#include <cstddef>

// Dense numeric kernels shared by the tensor ops. Every kernel computes each
// output element with a fixed serial accumulation order, so results are
// bit-identical whether the OpenMP path runs on one thread or many. The
// `parallel` switch selects between the OpenMP schedule and the plain serial
// loop over the same code; tests compare the two paths for exact equality.

namespace pianotx::kernels {

// Global switches. set_threads(0) keeps the OpenMP default.
void set_parallel(bool enabled);
bool parallel_enabled();
void set_threads(int n);
int max_threads();

// C[M x N] = (accumulate ? C : 0) + A[M x K] * B[K x N], all row-major.
void gemm_nn(double* c, const double* a, const double* b, int m, int n, int k,
             bool accumulate = false);

// C[M x N] += A^T * B where A is [K x M], B is [K x N], row-major.
void gemm_tn(double* c, const double* a, const double* b, int k, int m, int n);

// dst[cols x rows] = src[rows x cols]^T
void transpose(double* dst, const double* src, int rows, int cols);

// 3x3 convolution over a [T x F x C] channels-last input that has already
// been zero-padded to [T+2 x F+2 x C]. Kernel layout is [3][3][C][M]
// (tap-major, output channel contiguous). Output is [T x F x M].
void conv3x3_nhwc(double* y, const double* x_padded, const double* kernel,
                  const double* bias, int t_len, int f_len, int c_in, int m_out);

// Kernel gradient of the convolution above: dw[3][3][C][M] += sum over
// positions of x_padded patch x output gradient. Deterministic regardless of
// thread count (fixed time-chunk partial sums, combined in order).
void conv3x3_nhwc_grad_kernel(double* dw, const double* x_padded,
                              const double* dy, int t_len, int f_len, int c_in,
                              int m_out);

// Copy an unpadded [T x F x C] block into the center of a zeroed
// [T+2 x F+2 x C] buffer.
void pad_nhwc(double* padded, const double* x, int t_len, int f_len, int c);

// Sum with a fixed chunked accumulation tree; result does not depend on the
// number of threads.
double deterministic_sum(const double* p, size_t n);

}  // namespace pianotx::kernels
