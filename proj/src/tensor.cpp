#include "sefi/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "sefi/errors.hpp"

namespace sefi {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
    if (shape_numel(s) != static_cast<int64_t>(d.size()))
        throw input_error("Tensor::from: " + shape_str(s) + " does not match " +
                          std::to_string(d.size()) + " values");
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw input_error("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw input_error("max_abs_diff: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace sefi
