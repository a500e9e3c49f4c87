#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "sefi/errors.hpp"
#include "sefi/graph.hpp"
#include "test_support.hpp"

using namespace sefi;
using test::rand_tensor;

namespace {

// central finite differences on every entry of the leaf against the tape
void check_grad(std::vector<int> shape, uint64_t seed,
                const std::function<Var(Graph&, Var)>& build, double tol = 2e-6) {
    Tensor x0 = rand_tensor(shape, seed, 0.8);
    Graph g;
    Var x = g.leaf(x0);
    Var loss = build(g, x);
    REQUIRE(g.value(loss).numel() == 1);
    g.backward(loss);
    Tensor analytic = g.grad(x);

    const double h = 1e-5;
    int64_t stride = std::max<int64_t>(1, x0.numel() / 7);  // probe up to ~8 entries
    for (int64_t i = 0; i < x0.numel(); i += stride) {
        auto eval = [&](double delta) {
            Tensor xp = x0;
            xp.data[static_cast<size_t>(i)] += delta;
            Graph g2;
            return g2.value(build(g2, g2.leaf(std::move(xp)))).data[0];
        };
        double fd = (eval(h) - eval(-h)) / (2 * h);
        double an = analytic.data[static_cast<size_t>(i)];
        CHECK(std::fabs(fd - an) <= tol * std::max({std::fabs(fd), std::fabs(an), 1.0}));
    }
}

}  // namespace

TEST_CASE("gradients: elementwise ops") {
    check_grad({3, 4}, 1, [](Graph& g, Var x) { return g.mean_all(g.add(x, g.constant(rand_tensor({3, 4}, 91)))); });
    check_grad({3, 4}, 2, [](Graph& g, Var x) { return g.mean_all(g.sub(g.constant(rand_tensor({3, 4}, 92)), x)); });
    check_grad({3, 4}, 3, [](Graph& g, Var x) { return g.mean_all(g.mul(x, g.constant(rand_tensor({3, 4}, 93)))); });
    check_grad({3, 4}, 4, [](Graph& g, Var x) { return g.mean_all(g.scale(x, -1.7)); });
    check_grad({3, 4}, 5, [](Graph& g, Var x) { return g.mean_all(g.gelu(x)); });
    check_grad({5, 3}, 6, [](Graph& g, Var x) {
        return g.mean_all(g.add_rowvec(x, g.constant(rand_tensor({3}, 94))));
    });
    check_grad({3}, 7, [](Graph& g, Var x) {
        return g.mean_all(g.add_rowvec(g.constant(rand_tensor({5, 3}, 95)), x));
    });
    // x used twice: accumulation across fan-out
    check_grad({4, 4}, 8, [](Graph& g, Var x) { return g.mean_all(g.mul(x, x)); });
}

TEST_CASE("gradients: matmul family") {
    check_grad({4, 6}, 10, [](Graph& g, Var x) { return g.mean_all(g.matmul(x, g.constant(rand_tensor({6, 3}, 96)))); });
    check_grad({6, 3}, 11, [](Graph& g, Var x) { return g.mean_all(g.matmul(g.constant(rand_tensor({4, 6}, 97)), x)); });
    check_grad({4, 6}, 12, [](Graph& g, Var x) {
        return g.mean_all(g.matmul_nt(x, g.constant(rand_tensor({5, 6}, 98))));
    });
    check_grad({5, 6}, 13, [](Graph& g, Var x) {
        return g.mean_all(g.matmul_nt(g.constant(rand_tensor({4, 6}, 99)), x));
    });
}

TEST_CASE("gradients: softmax and layer norm") {
    check_grad({5, 7}, 20, [](Graph& g, Var x) {
        return g.mse(g.softmax_rows(x), g.constant(rand_tensor({5, 7}, 90, 0.2)));
    });
    check_grad({5, 7}, 21, [](Graph& g, Var x) {
        return g.mse(g.softmax_rows(x, /*causal=*/true), g.constant(rand_tensor({5, 7}, 89, 0.2)));
    });
    check_grad({6, 5}, 22, [](Graph& g, Var x) {
        return g.mse(g.layernorm_rows(x, g.constant(rand_tensor({5}, 88, 0.4)),
                                      g.constant(rand_tensor({5}, 87, 0.4))),
                     g.constant(rand_tensor({6, 5}, 86)));
    });
    check_grad({5}, 23, [](Graph& g, Var x) {
        Var h = g.layernorm_rows(g.constant(rand_tensor({6, 5}, 85)), x, g.constant(rand_tensor({5}, 84)));
        return g.mean_all(h);
    });
    check_grad({5}, 24, [](Graph& g, Var x) {
        Var h = g.layernorm_rows(g.constant(rand_tensor({6, 5}, 83)), g.constant(rand_tensor({5}, 82)), x);
        return g.mean_all(h);
    });
}

TEST_CASE("gradients: shape plumbing") {
    check_grad({2, 3, 4}, 30, [](Graph& g, Var x) { return g.mean_all(g.reshape(x, {6, 4})); });
    check_grad({2, 5, 3}, 31, [](Graph& g, Var x) { return g.mean_all(g.slice_dim(x, 1, 1, 4)); });
    check_grad({3, 4}, 32, [](Graph& g, Var x) {
        return g.mean_all(g.concat_rows({x, g.constant(rand_tensor({2, 4}, 81)), x}));
    });
    check_grad({3, 4}, 33, [](Graph& g, Var x) {
        return g.mean_all(g.concat_cols({g.constant(rand_tensor({3, 2}, 80)), x}));
    });
    check_grad({4}, 34, [](Graph& g, Var x) {
        Var base = g.constant(rand_tensor({5, 4}, 79));
        return g.mean_all(g.splice_rows(base, {{1, x}, {3, x}}));
    });
    check_grad({3, 4, 4}, 35, [](Graph& g, Var x) { return g.mean_all(g.rows_from_channels(x, 3, 4, 4)); });
    check_grad({16, 3}, 36, [](Graph& g, Var x) { return g.mean_all(g.channels_from_rows(x, 4, 4, 3)); });
    check_grad({2 * 9, 5}, 37, [](Graph& g, Var x) { return g.mean_all(g.attn_rearrange(x, 2, 9, 5)); });
}

TEST_CASE("gradients: spatial ops") {
    check_grad({16, 3}, 40, [](Graph& g, Var x) { return g.mean_all(g.avgpool2x2(x, 4, 4)); });
    check_grad({16, 3}, 41, [](Graph& g, Var x) { return g.mean_all(g.upsample2x(x, 4, 4)); });
    check_grad({2, 4, 4}, 42, [](Graph& g, Var x) {
        return g.mse(g.bilinear_resize(x, 2, 4, 4, 8), g.constant(rand_tensor({2, 8, 8}, 78)));
    });
    check_grad({2, 8, 8}, 43, [](Graph& g, Var x) {
        return g.mse(g.bilinear_resize(x, 2, 8, 8, 4), g.constant(rand_tensor({2, 4, 4}, 77)));
    });
}

TEST_CASE("gradients: reductions") {
    check_grad({4, 5}, 50, [](Graph& g, Var x) { return g.mean_all(x); });
    check_grad({4, 5}, 51, [](Graph& g, Var x) { return g.mse(x, g.constant(rand_tensor({4, 5}, 76))); });
    check_grad({4, 5}, 52, [](Graph& g, Var x) { return g.mse(g.constant(rand_tensor({4, 5}, 75)), x); });
    check_grad({4, 5}, 53, [](Graph& g, Var x) {
        return g.mean_vars({g.mean_all(x), g.mse(x, g.constant(rand_tensor({4, 5}, 74)))});
    });
}

TEST_CASE("value semantics of the rearrangement ops") {
    // attn_rearrange is the (head, query, token) -> (head, token, query) flip
    int H = 2, nq = 3, L = 4;
    Tensor m({H * nq, L});
    for (int64_t i = 0; i < m.numel(); ++i) m.data[static_cast<size_t>(i)] = static_cast<double>(i);
    Graph g;
    Var out = g.attn_rearrange(g.constant(m), H, nq, L);
    const Tensor& o = g.value(out);
    REQUIRE(o.shape == std::vector<int>{H * L, nq});
    for (int h = 0; h < H; ++h)
        for (int q = 0; q < nq; ++q)
            for (int l = 0; l < L; ++l)
                CHECK(o.data[static_cast<size_t>((h * L + l) * nq + q)] ==
                      m.data[static_cast<size_t>((h * nq + q) * L + l)]);

    // channels_from_rows inverts rows_from_channels
    Tensor z = rand_tensor({3, 4, 4}, 60);
    Graph g2;
    Var rows = g2.rows_from_channels(g2.constant(z), 3, 4, 4);
    Var back = g2.channels_from_rows(rows, 4, 4, 3);
    CHECK(bit_equal(g2.value(back), z));
}

TEST_CASE("graph bookkeeping") {
    Graph g;
    Var c = g.constant(rand_tensor({3, 3}, 70));
    CHECK_FALSE(g.requires_grad(c));
    Var leaf = g.leaf(rand_tensor({3, 3}, 71));
    Var loss = g.mse(leaf, c);
    g.backward(loss);
    // constants keep a zero accumulator
    const Tensor& gc = g.grad(c);
    for (double v : gc.data) CHECK(v == 0.0);
    // backward on a non-scalar refuses
    Graph g3;
    Var big = g3.leaf(rand_tensor({2, 2}, 72));
    CHECK_THROWS_AS(g3.backward(big), input_error);
    // pure-constant losses skip the sweep entirely
    Graph g4;
    Var c2 = g4.mean_all(g4.constant(rand_tensor({2, 2}, 73)));
    g4.backward(c2);  // no-op, must not throw
}
