#ifndef SEFI_KERNELS_DETAIL_HPP
#define SEFI_KERNELS_DETAIL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

// Per-element routines shared by the serial and OpenMP kernel fronts. Both
// fronts call these exact functions, which is what makes them bit-identical.

namespace sefi {
namespace kernels {
namespace detail {

inline double dot_nn(const double* a_row, const double* b, int k, int n, int col) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += a_row[i] * b[static_cast<int64_t>(i) * n + col];
    return acc;
}

inline double dot_nt(const double* a_row, const double* b_row, int k) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += a_row[i] * b_row[i];
    return acc;
}

inline double dot_tn(const double* a, const double* b, int m, int k, int n, int row, int col) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i)
        acc += a[static_cast<int64_t>(i) * k + row] * b[static_cast<int64_t>(i) * n + col];
    return acc;
}

inline void softmax_row(const double* x, double* y, int cols, int limit) {
    // limit = number of unmasked leading entries; masked tail gets 0
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < limit; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (int j = 0; j < limit; ++j) {
        double e = std::exp(x[j] - mx);
        y[j] = e;
        s += e;
    }
    double inv = 1.0 / s;
    for (int j = 0; j < limit; ++j) y[j] *= inv;
    for (int j = limit; j < cols; ++j) y[j] = 0.0;
}

inline void layernorm_row(const double* x, const double* gamma, const double* beta,
                          double eps, double* y, int cols) {
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
        double d = x[j] - mean;
        var += d * d;
    }
    var /= cols;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) y[j] = (x[j] - mean) * inv * gamma[j] + beta[j];
}

inline double gelu_one(double x) {
    // exact erf form
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

// half-pixel source coordinate and clamped neighbor pair for bilinear
inline void bilin_coord(int o, int in_size, int out_size, int& i0, int& i1, double& w1) {
    double src = (o + 0.5) * (static_cast<double>(in_size) / out_size) - 0.5;
    double fl = std::floor(src);
    i0 = static_cast<int>(fl);
    w1 = src - fl;
    i1 = i0 + 1;
    if (i0 < 0) i0 = 0;
    if (i1 < 0) i1 = 0;
    if (i0 > in_size - 1) i0 = in_size - 1;
    if (i1 > in_size - 1) i1 = in_size - 1;
}

inline double bilinear_one(const double* plane, int h, int w, int oy, int ox, int oh, int ow) {
    int y0, y1, x0, x1;
    double wy, wx;
    bilin_coord(oy, h, oh, y0, y1, wy);
    bilin_coord(ox, w, ow, x0, x1, wx);
    double v00 = plane[static_cast<int64_t>(y0) * w + x0];
    double v01 = plane[static_cast<int64_t>(y0) * w + x1];
    double v10 = plane[static_cast<int64_t>(y1) * w + x0];
    double v11 = plane[static_cast<int64_t>(y1) * w + x1];
    double top = v00 + (v01 - v00) * wx;
    double bot = v10 + (v11 - v10) * wx;
    return top + (bot - top) * wy;
}

}  // namespace detail
}  // namespace kernels
}  // namespace sefi

#endif
