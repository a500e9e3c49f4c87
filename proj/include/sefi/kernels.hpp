#ifndef SEFI_KERNELS_HPP
#define SEFI_KERNELS_HPP

#include <cstdint>

namespace sefi {
namespace kernels {

// Data-parallel primitives backing the graph ops. The default entry points
// are OpenMP-parallel over independent output elements; kernels::serial holds
// the plain-loop reference implementations kept for tests and benchmarks.
//
// Bit-exactness contract: every parallel kernel assigns each output element
// with the same serial accumulation as its reference twin, so serial and
// parallel results are bit-identical for any thread count. Reductions that
// would need a cross-thread combine (sum, mse) are serial-only by design.

// c[m,n] = a[m,k] * b[k,n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
// c[m,n] = a[m,k] * b[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
// c[k,n] = a[m,k]^T * b[m,n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);

// row-wise softmax; causal != 0 masks entries with col > row to -inf
void softmax_rows(const double* x, double* y, int rows, int cols, int causal);

// row-wise layer norm with per-column affine
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double eps, double* y, int rows, int cols);

void gelu(const double* x, double* y, int64_t n);
void add(const double* a, const double* b, double* y, int64_t n);
void scale(const double* x, double a, double* y, int64_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, int64_t n);

// per-channel bilinear interpolation, half-pixel centers (align_corners off)
void bilinear_resize(const double* src, double* dst, int channels,
                     int h, int w, int oh, int ow);
// scatter-add transpose of bilinear_resize: grad_src += W^T grad_dst
void bilinear_resize_backward(const double* grad_dst, double* grad_src, int channels,
                              int h, int w, int oh, int ow);

// serial-only reductions (fixed accumulation order)
double sum(const double* x, int64_t n);
double mse(const double* a, const double* b, int64_t n);

namespace serial {
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void softmax_rows(const double* x, double* y, int rows, int cols, int causal);
void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double eps, double* y, int rows, int cols);
void gelu(const double* x, double* y, int64_t n);
void add(const double* a, const double* b, double* y, int64_t n);
void scale(const double* x, double a, double* y, int64_t n);
void axpy(double alpha, const double* x, double* y, int64_t n);
void bilinear_resize(const double* src, double* dst, int channels,
                     int h, int w, int oh, int ow);
void bilinear_resize_backward(const double* grad_dst, double* grad_src, int channels,
                              int h, int w, int oh, int ow);
}  // namespace serial

}  // namespace kernels
}  // namespace sefi

#endif
