#ifndef SEFI_TENSOR_HPP
#define SEFI_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace sefi {

// Dense row-major tensor of doubles. All numerics in this project run in
// double precision; file payloads are raw little-endian f64.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0);
    static Tensor from(std::vector<int> s, std::vector<double> d);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // 2-D accessors (rows x cols)
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
Tensor zeros_like(const Tensor& t);

// max |a-b| over all entries; shapes must match
double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace sefi

#endif
