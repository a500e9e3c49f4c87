#include "sefi/kernels.hpp"

#include "kernels_detail.hpp"

namespace sefi {
namespace kernels {
namespace serial {

using namespace detail;

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int r = 0; r < m; ++r)
        for (int col = 0; col < n; ++col)
            c[static_cast<int64_t>(r) * n + col] = dot_nn(a + static_cast<int64_t>(r) * k, b, k, n, col);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int r = 0; r < m; ++r)
        for (int col = 0; col < n; ++col)
            c[static_cast<int64_t>(r) * n + col] =
                dot_nt(a + static_cast<int64_t>(r) * k, b + static_cast<int64_t>(col) * k, k);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int r = 0; r < k; ++r)
        for (int col = 0; col < n; ++col)
            c[static_cast<int64_t>(r) * n + col] = dot_tn(a, b, m, k, n, r, col);
}

void softmax_rows(const double* x, double* y, int rows, int cols, int causal) {
    for (int r = 0; r < rows; ++r) {
        int limit = causal ? std::min(r + 1, cols) : cols;
        softmax_row(x + static_cast<int64_t>(r) * cols, y + static_cast<int64_t>(r) * cols, cols, limit);
    }
}

void layernorm_rows(const double* x, const double* gamma, const double* beta,
                    double eps, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        layernorm_row(x + static_cast<int64_t>(r) * cols, gamma, beta, eps,
                      y + static_cast<int64_t>(r) * cols, cols);
}

void gelu(const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void add(const double* a, const double* b, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void scale(const double* x, double a, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] * a;
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void bilinear_resize(const double* src, double* dst, int channels, int h, int w, int oh, int ow) {
    for (int ch = 0; ch < channels; ++ch) {
        const double* plane = src + static_cast<int64_t>(ch) * h * w;
        double* out = dst + static_cast<int64_t>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                out[static_cast<int64_t>(oy) * ow + ox] = bilinear_one(plane, h, w, oy, ox, oh, ow);
    }
}

void bilinear_resize_backward(const double* grad_dst, double* grad_src, int channels,
                              int h, int w, int oh, int ow) {
    for (int ch = 0; ch < channels; ++ch) {
        const double* gout = grad_dst + static_cast<int64_t>(ch) * oh * ow;
        double* gin = grad_src + static_cast<int64_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            int y0, y1, x0, x1;
            double wy, wx;
            detail::bilin_coord(oy, h, oh, y0, y1, wy);
            for (int ox = 0; ox < ow; ++ox) {
                detail::bilin_coord(ox, w, ow, x0, x1, wx);
                double g = gout[static_cast<int64_t>(oy) * ow + ox];
                gin[static_cast<int64_t>(y0) * w + x0] += g * (1.0 - wy) * (1.0 - wx);
                gin[static_cast<int64_t>(y0) * w + x1] += g * (1.0 - wy) * wx;
                gin[static_cast<int64_t>(y1) * w + x0] += g * wy * (1.0 - wx);
                gin[static_cast<int64_t>(y1) * w + x1] += g * wy * wx;
            }
        }
    }
}

}  // namespace serial

double sum(const double* x, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double mse(const double* a, const double* b, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

}  // namespace kernels
}  // namespace sefi
