#ifndef SEFI_RNG_HPP
#define SEFI_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "sefi/tensor.hpp"

namespace sefi {

// mt19937_64 with hand-rolled value mappings. std::*_distribution output is
// implementation-defined, which would break byte-identical reproducibility
// claims across toolchains, so every draw here is pinned to an exact formula.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit mantissa
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without caching: one normal per two uniform draws. Keeps the
    // draw sequence trivially auditable.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // [0, n) without modulo bias
    int uniform_int(int n) {
        uint64_t bound = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    bool bernoulli(double p) { return uniform() < p; }

    Tensor gaussian_tensor(std::vector<int> shape, double stddev, double mean = 0.0) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = gaussian(mean, stddev);
        return t;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace sefi

#endif
