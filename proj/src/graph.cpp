#include "sefi/graph.hpp"

#include <cmath>
#include <cstring>

#include "sefi/errors.hpp"
#include "sefi/kernels.hpp"

namespace sefi {

namespace {

void check_2d(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw input_error(std::string(who) + ": expected rank-2 tensor, got " + shape_str(t.shape));
}

}  // namespace

Var Graph::push(Tensor value, bool requires_grad, std::function<void(Graph&)> backward_fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward_fn = requires_grad ? std::move(backward_fn) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw input_error("Graph: invalid var");
    return nodes_[static_cast<size_t>(v.id)];
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw input_error("Graph: invalid var");
    return nodes_[static_cast<size_t>(v.id)];
}

Var Graph::constant(Tensor v) { return push(std::move(v), false, nullptr); }

Var Graph::leaf(Tensor v) {
    return push(std::move(v), true, nullptr);
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Graph::grad_buf(Var v) {
    Node& n = node(v);
    if (!n.grad_alloc) {
        n.grad_buf = Tensor(n.value.shape, 0.0);
        n.grad_alloc = true;
    }
    return n.grad_buf;
}

const Tensor& Graph::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad_alloc) return n.grad_buf;
    if (!zero_scratch_.same_shape(n.value)) {
        // const accessor: stash a zero tensor shaped like the request
        const_cast<Graph*>(this)->zero_scratch_ = Tensor(n.value.shape, 0.0);
    }
    return zero_scratch_;
}

void Graph::accumulate(Var v, const double* g, int64_t n) {
    if (!node(v).requires_grad) return;
    Tensor& buf = grad_buf(v);
    kernels::axpy(1.0, g, buf.ptr(), n);
}

void Graph::backward(Var scalar_loss) {
    const Node& loss = node(scalar_loss);
    if (loss.value.numel() != 1) throw input_error("backward: loss must be scalar, got " + shape_str(loss.value.shape));
    if (!loss.requires_grad) return;  // nothing differentiable upstream
    grad_buf(scalar_loss).data[0] = 1.0;
    for (int id = scalar_loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.requires_grad || !n.grad_alloc || !n.backward_fn) continue;
        n.backward_fn(*this);
    }
}

// ---------------------------------------------------------------- elementwise

Var Graph::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw input_error("add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    kernels::add(ta.ptr(), tb.ptr(), out.ptr(), ta.numel());
    bool rg = requires_grad(a) || requires_grad(b);
    Var result{-1};
    result = push(std::move(out), rg, [a, b, result_id = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{result_id}).grad_buf;
        g.accumulate(a, go.ptr(), go.numel());
        g.accumulate(b, go.ptr(), go.numel());
    });
    return result;
}

Var Graph::sub(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw input_error("sub: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out(ta.shape);
    for (int64_t i = 0; i < ta.numel(); ++i) out.data[static_cast<size_t>(i)] = ta.data[static_cast<size_t>(i)] - tb.data[static_cast<size_t>(i)];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        g.accumulate(a, go.ptr(), go.numel());
        if (g.requires_grad(b)) {
            Tensor& gb = g.grad_buf(b);
            kernels::axpy(-1.0, go.ptr(), gb.ptr(), go.numel());
        }
    });
}

Var Graph::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw input_error("mul: shape mismatch");
    Tensor out(ta.shape);
    for (int64_t i = 0; i < ta.numel(); ++i) out.data[static_cast<size_t>(i)] = ta.data[static_cast<size_t>(i)] * tb.data[static_cast<size_t>(i)];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        const Tensor& ta2 = g.value(a);
        const Tensor& tb2 = g.value(b);
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_buf(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga.data[static_cast<size_t>(i)] += go.data[static_cast<size_t>(i)] * tb2.data[static_cast<size_t>(i)];
        }
        if (g.requires_grad(b)) {
            Tensor& gb = g.grad_buf(b);
            for (int64_t i = 0; i < go.numel(); ++i) gb.data[static_cast<size_t>(i)] += go.data[static_cast<size_t>(i)] * ta2.data[static_cast<size_t>(i)];
        }
    });
}

Var Graph::scale(Var a, double s) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape);
    kernels::scale(ta.ptr(), s, out.ptr(), ta.numel());
    return push(std::move(out), requires_grad(a), [a, s, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_buf(a);
            kernels::axpy(s, go.ptr(), ga.ptr(), go.numel());
        }
    });
}

Var Graph::gelu(Var a) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape);
    kernels::gelu(ta.ptr(), out.ptr(), ta.numel());
    return push(std::move(out), requires_grad(a), [a, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        if (!g.requires_grad(a)) return;
        const Tensor& x = g.value(a);
        Tensor& ga = g.grad_buf(a);
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        constexpr double inv_sqrt2pi = 0.39894228040143267794;
        for (int64_t i = 0; i < x.numel(); ++i) {
            double xi = x.data[static_cast<size_t>(i)];
            double cdf = 0.5 * (1.0 + std::erf(xi * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
            ga.data[static_cast<size_t>(i)] += go.data[static_cast<size_t>(i)] * (cdf + xi * pdf);
        }
    });
}

Var Graph::add_rowvec(Var mat, Var vec) {
    const Tensor& tm = value(mat);
    const Tensor& tv = value(vec);
    check_2d(tm, "add_rowvec");
    if (tv.numel() != tm.cols()) throw input_error("add_rowvec: vector length mismatch");
    Tensor out(tm.shape);
    for (int r = 0; r < tm.rows(); ++r)
        for (int c = 0; c < tm.cols(); ++c) out.at(r, c) = tm.at(r, c) + tv.data[static_cast<size_t>(c)];
    bool rg = requires_grad(mat) || requires_grad(vec);
    return push(std::move(out), rg, [mat, vec, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        g.accumulate(mat, go.ptr(), go.numel());
        if (g.requires_grad(vec)) {
            Tensor& gv = g.grad_buf(vec);
            int rows = go.rows(), cols = go.cols();
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) gv.data[static_cast<size_t>(c)] += go.at(r, c);
        }
    });
}

// ------------------------------------------------------------- linear algebra

Var Graph::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_2d(ta, "matmul");
    check_2d(tb, "matmul");
    if (ta.cols() != tb.rows())
        throw input_error("matmul: inner dims " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
    int m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    kernels::matmul_nn(ta.ptr(), tb.ptr(), out.ptr(), m, k, n);
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, m, k, n, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        if (g.requires_grad(a)) {
            Tensor tmp({m, k});
            kernels::matmul_nt(go.ptr(), g.value(b).ptr(), tmp.ptr(), m, n, k);
            g.accumulate(a, tmp.ptr(), tmp.numel());
        }
        if (g.requires_grad(b)) {
            Tensor tmp({k, n});
            kernels::matmul_tn(g.value(a).ptr(), go.ptr(), tmp.ptr(), m, k, n);
            g.accumulate(b, tmp.ptr(), tmp.numel());
        }
    });
}

Var Graph::matmul_nt(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_2d(ta, "matmul_nt");
    check_2d(tb, "matmul_nt");
    if (ta.cols() != tb.cols())
        throw input_error("matmul_nt: inner dims " + shape_str(ta.shape) + " x " + shape_str(tb.shape) + "^T");
    int m = ta.rows(), k = ta.cols(), n = tb.rows();
    Tensor out({m, n});
    kernels::matmul_nt(ta.ptr(), tb.ptr(), out.ptr(), m, k, n);
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, m, k, n, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;  // [m,n]
        if (g.requires_grad(a)) {
            Tensor tmp({m, k});
            kernels::matmul_nn(go.ptr(), g.value(b).ptr(), tmp.ptr(), m, n, k);
            g.accumulate(a, tmp.ptr(), tmp.numel());
        }
        if (g.requires_grad(b)) {
            Tensor tmp({n, k});
            kernels::matmul_tn(go.ptr(), g.value(a).ptr(), tmp.ptr(), m, n, k);
            g.accumulate(b, tmp.ptr(), tmp.numel());
        }
    });
}

Var Graph::softmax_rows(Var a, bool causal) {
    const Tensor& ta = value(a);
    check_2d(ta, "softmax_rows");
    Tensor out(ta.shape);
    kernels::softmax_rows(ta.ptr(), out.ptr(), ta.rows(), ta.cols(), causal ? 1 : 0);
    return push(std::move(out), requires_grad(a), [a, rid = static_cast<int>(nodes_.size())](Graph& g) {
        if (!g.requires_grad(a)) return;
        const Tensor& go = g.node(Var{rid}).grad_buf;
        const Tensor& y = g.node(Var{rid}).value;
        Tensor& ga = g.grad_buf(a);
        int rows = y.rows(), cols = y.cols();
        for (int r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < cols; ++c) dot += go.at(r, c) * y.at(r, c);
            for (int c = 0; c < cols; ++c) ga.at(r, c) += (go.at(r, c) - dot) * y.at(r, c);
        }
    });
}

Var Graph::layernorm_rows(Var x, Var gamma, Var beta, double eps) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gamma);
    const Tensor& tb = value(beta);
    check_2d(tx, "layernorm_rows");
    if (tg.numel() != tx.cols() || tb.numel() != tx.cols())
        throw input_error("layernorm_rows: affine size mismatch");
    Tensor out(tx.shape);
    kernels::layernorm_rows(tx.ptr(), tg.ptr(), tb.ptr(), eps, out.ptr(), tx.rows(), tx.cols());
    bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    return push(std::move(out), rg, [x, gamma, beta, eps, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        const Tensor& tx2 = g.value(x);
        const Tensor& tg2 = g.value(gamma);
        int rows = tx2.rows(), cols = tx2.cols();
        std::vector<double> xhat(static_cast<size_t>(cols));
        for (int r = 0; r < rows; ++r) {
            double mean = 0.0;
            for (int c = 0; c < cols; ++c) mean += tx2.at(r, c);
            mean /= cols;
            double var = 0.0;
            for (int c = 0; c < cols; ++c) {
                double d = tx2.at(r, c) - mean;
                var += d * d;
            }
            var /= cols;
            double inv = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < cols; ++c) xhat[static_cast<size_t>(c)] = (tx2.at(r, c) - mean) * inv;

            if (g.requires_grad(gamma)) {
                Tensor& gg = g.grad_buf(gamma);
                for (int c = 0; c < cols; ++c) gg.data[static_cast<size_t>(c)] += go.at(r, c) * xhat[static_cast<size_t>(c)];
            }
            if (g.requires_grad(beta)) {
                Tensor& gb = g.grad_buf(beta);
                for (int c = 0; c < cols; ++c) gb.data[static_cast<size_t>(c)] += go.at(r, c);
            }
            if (g.requires_grad(x)) {
                Tensor& gx = g.grad_buf(x);
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int c = 0; c < cols; ++c) {
                    double dxh = go.at(r, c) * tg2.data[static_cast<size_t>(c)];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xhat[static_cast<size_t>(c)];
                }
                for (int c = 0; c < cols; ++c) {
                    double dxh = go.at(r, c) * tg2.data[static_cast<size_t>(c)];
                    gx.at(r, c) += inv * (dxh - (sum_dxh + xhat[static_cast<size_t>(c)] * sum_dxh_xh) / cols);
                }
            }
        }
    });
}

// -------------------------------------------------------------- shape plumbing

Var Graph::reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = value(a);
    if (shape_numel(shape) != ta.numel())
        throw input_error("reshape: numel mismatch " + shape_str(ta.shape) + " -> " + shape_str(shape));
    Tensor out;
    out.shape = std::move(shape);
    out.data = ta.data;
    return push(std::move(out), requires_grad(a), [a, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        g.accumulate(a, go.ptr(), go.numel());
    });
}

Var Graph::slice_dim(Var a, int dim, int i0, int i1) {
    const Tensor& ta = value(a);
    if (dim < 0 || dim >= ta.rank()) throw input_error("slice_dim: bad dim");
    if (i0 < 0 || i1 > ta.dim(dim) || i0 >= i1) throw input_error("slice_dim: bad range");
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= ta.dim(d);
    for (int d = dim + 1; d < ta.rank(); ++d) inner *= ta.dim(d);
    int width = ta.dim(dim);
    int nw = i1 - i0;
    std::vector<int> oshape = ta.shape;
    oshape[static_cast<size_t>(dim)] = nw;
    Tensor out(oshape);
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.ptr() + (o * nw) * inner,
                    ta.ptr() + (o * width + i0) * inner,
                    static_cast<size_t>(nw * inner) * sizeof(double));
    return push(std::move(out), requires_grad(a),
                [a, dim, i0, outer, inner, width, nw, rid = static_cast<int>(nodes_.size())](Graph& g) {
                    if (!g.requires_grad(a)) return;
                    const Tensor& go = g.node(Var{rid}).grad_buf;
                    Tensor& ga = g.grad_buf(a);
                    for (int64_t o = 0; o < outer; ++o)
                        kernels::axpy(1.0, go.ptr() + (o * nw) * inner,
                                      ga.ptr() + (o * width + i0) * inner, nw * inner);
                });
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw input_error("concat_rows: empty");
    int cols = value(parts[0]).cols();
    int rows = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& t = value(p);
        check_2d(t, "concat_rows");
        if (t.cols() != cols) throw input_error("concat_rows: column mismatch");
        rows += t.rows();
        rg = rg || requires_grad(p);
    }
    Tensor out({rows, cols});
    int64_t off = 0;
    for (Var p : parts) {
        const Tensor& t = value(p);
        std::memcpy(out.ptr() + off, t.ptr(), static_cast<size_t>(t.numel()) * sizeof(double));
        off += t.numel();
    }
    return push(std::move(out), rg, [parts, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        int64_t off2 = 0;
        for (Var p : parts) {
            int64_t n = g.value(p).numel();
            if (g.requires_grad(p)) {
                Tensor& gp = g.grad_buf(p);
                kernels::axpy(1.0, go.ptr() + off2, gp.ptr(), n);
            }
            off2 += n;
        }
    });
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw input_error("concat_cols: empty");
    int rows = value(parts[0]).rows();
    int cols = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& t = value(p);
        check_2d(t, "concat_cols");
        if (t.rows() != rows) throw input_error("concat_cols: row mismatch");
        cols += t.cols();
        rg = rg || requires_grad(p);
    }
    Tensor out({rows, cols});
    int coff = 0;
    for (Var p : parts) {
        const Tensor& t = value(p);
        for (int r = 0; r < rows; ++r)
            std::memcpy(out.ptr() + static_cast<int64_t>(r) * cols + coff,
                        t.ptr() + static_cast<int64_t>(r) * t.cols(),
                        static_cast<size_t>(t.cols()) * sizeof(double));
        coff += t.cols();
    }
    return push(std::move(out), rg, [parts, rows, cols, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        int coff2 = 0;
        for (Var p : parts) {
            int pc = g.value(p).cols();
            if (g.requires_grad(p)) {
                Tensor& gp = g.grad_buf(p);
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < pc; ++c)
                        gp.at(r, c) += go.data[static_cast<size_t>(r) * cols + coff2 + c];
            }
            coff2 += pc;
        }
    });
}

Var Graph::splice_rows(Var base, const std::vector<std::pair<int, Var>>& rows) {
    const Tensor& tb = value(base);
    check_2d(tb, "splice_rows");
    Tensor out = tb;
    bool rg = requires_grad(base);
    for (const auto& [idx, v] : rows) {
        if (idx < 0 || idx >= tb.rows()) throw input_error("splice_rows: row index out of range");
        const Tensor& tv = value(v);
        if (tv.numel() != tb.cols()) throw input_error("splice_rows: row length mismatch");
        std::memcpy(out.ptr() + static_cast<int64_t>(idx) * tb.cols(), tv.ptr(),
                    static_cast<size_t>(tb.cols()) * sizeof(double));
        rg = rg || requires_grad(v);
    }
    return push(std::move(out), rg, [base, rows, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        int cols = go.cols();
        for (const auto& [idx, v] : rows) {
            if (!g.requires_grad(v)) continue;
            Tensor& gv = g.grad_buf(v);
            kernels::axpy(1.0, go.ptr() + static_cast<int64_t>(idx) * cols, gv.ptr(), cols);
        }
        if (g.requires_grad(base)) {
            Tensor masked = go;
            for (const auto& [idx, v] : rows)
                std::memset(masked.ptr() + static_cast<int64_t>(idx) * cols, 0,
                            static_cast<size_t>(cols) * sizeof(double));
            g.accumulate(base, masked.ptr(), masked.numel());
        }
    });
}

Var Graph::rows_from_channels(Var a, int channels, int h, int w) {
    const Tensor& ta = value(a);
    if (ta.numel() != static_cast<int64_t>(channels) * h * w)
        throw input_error("rows_from_channels: size mismatch");
    Tensor out({h * w, channels});
    for (int c = 0; c < channels; ++c)
        for (int p = 0; p < h * w; ++p)
            out.data[static_cast<size_t>(p) * channels + c] = ta.data[static_cast<size_t>(c) * h * w + p];
    return push(std::move(out), requires_grad(a), [a, channels, h, w, rid = static_cast<int>(nodes_.size())](Graph& g) {
        if (!g.requires_grad(a)) return;
        const Tensor& go = g.node(Var{rid}).grad_buf;
        Tensor& ga = g.grad_buf(a);
        for (int c = 0; c < channels; ++c)
            for (int p = 0; p < h * w; ++p)
                ga.data[static_cast<size_t>(c) * h * w + p] += go.data[static_cast<size_t>(p) * channels + c];
    });
}

Var Graph::channels_from_rows(Var a, int h, int w, int channels) {
    const Tensor& ta = value(a);
    if (ta.numel() != static_cast<int64_t>(channels) * h * w)
        throw input_error("channels_from_rows: size mismatch");
    Tensor out({channels, h, w});
    for (int c = 0; c < channels; ++c)
        for (int p = 0; p < h * w; ++p)
            out.data[static_cast<size_t>(c) * h * w + p] = ta.data[static_cast<size_t>(p) * channels + c];
    return push(std::move(out), requires_grad(a), [a, channels, h, w, rid = static_cast<int>(nodes_.size())](Graph& g) {
        if (!g.requires_grad(a)) return;
        const Tensor& go = g.node(Var{rid}).grad_buf;
        Tensor& ga = g.grad_buf(a);
        for (int c = 0; c < channels; ++c)
            for (int p = 0; p < h * w; ++p)
                ga.data[static_cast<size_t>(p) * channels + c] += go.data[static_cast<size_t>(c) * h * w + p];
    });
}

Var Graph::attn_rearrange(Var a, int heads, int n_queries, int seq_len) {
    const Tensor& ta = value(a);
    if (ta.numel() != static_cast<int64_t>(heads) * n_queries * seq_len)
        throw input_error("attn_rearrange: size mismatch");
    Tensor out({heads * seq_len, n_queries});
    for (int hd = 0; hd < heads; ++hd)
        for (int q = 0; q < n_queries; ++q)
            for (int l = 0; l < seq_len; ++l)
                out.data[static_cast<size_t>(hd * seq_len + l) * n_queries + q] =
                    ta.data[static_cast<size_t>(hd * n_queries + q) * seq_len + l];
    return push(std::move(out), requires_grad(a),
                [a, heads, n_queries, seq_len, rid = static_cast<int>(nodes_.size())](Graph& g) {
                    if (!g.requires_grad(a)) return;
                    const Tensor& go = g.node(Var{rid}).grad_buf;
                    Tensor& ga = g.grad_buf(a);
                    for (int hd = 0; hd < heads; ++hd)
                        for (int q = 0; q < n_queries; ++q)
                            for (int l = 0; l < seq_len; ++l)
                                ga.data[static_cast<size_t>(hd * n_queries + q) * seq_len + l] +=
                                    go.data[static_cast<size_t>(hd * seq_len + l) * n_queries + q];
                });
}

// ------------------------------------------------------------------- spatial

Var Graph::avgpool2x2(Var a, int h, int w) {
    const Tensor& ta = value(a);
    check_2d(ta, "avgpool2x2");
    if (ta.rows() != h * w || h % 2 || w % 2) throw input_error("avgpool2x2: bad dims");
    int c = ta.cols(), oh = h / 2, ow = w / 2;
    Tensor out({oh * ow, c});
    for (int py = 0; py < oh; ++py)
        for (int px = 0; px < ow; ++px)
            for (int ch = 0; ch < c; ++ch) {
                double s = ta.at((2 * py) * w + 2 * px, ch) + ta.at((2 * py) * w + 2 * px + 1, ch) +
                           ta.at((2 * py + 1) * w + 2 * px, ch) + ta.at((2 * py + 1) * w + 2 * px + 1, ch);
                out.at(py * ow + px, ch) = 0.25 * s;
            }
    return push(std::move(out), requires_grad(a), [a, h, w, c, rid = static_cast<int>(nodes_.size())](Graph& g) {
        if (!g.requires_grad(a)) return;
        const Tensor& go = g.node(Var{rid}).grad_buf;
        Tensor& ga = g.grad_buf(a);
        int oh = h / 2, ow = w / 2;
        for (int py = 0; py < oh; ++py)
            for (int px = 0; px < ow; ++px)
                for (int ch = 0; ch < c; ++ch) {
                    double gq = 0.25 * go.at(py * ow + px, ch);
                    ga.at((2 * py) * w + 2 * px, ch) += gq;
                    ga.at((2 * py) * w + 2 * px + 1, ch) += gq;
                    ga.at((2 * py + 1) * w + 2 * px, ch) += gq;
                    ga.at((2 * py + 1) * w + 2 * px + 1, ch) += gq;
                }
    });
}

Var Graph::upsample2x(Var a, int h, int w) {
    const Tensor& ta = value(a);
    check_2d(ta, "upsample2x");
    if (ta.rows() != h * w) throw input_error("upsample2x: bad dims");
    int c = ta.cols(), oh = h * 2, ow = w * 2;
    Tensor out({oh * ow, c});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int ch = 0; ch < c; ++ch) out.at(y * ow + x, ch) = ta.at((y / 2) * w + x / 2, ch);
    return push(std::move(out), requires_grad(a), [a, h, w, c, rid = static_cast<int>(nodes_.size())](Graph& g) {
        if (!g.requires_grad(a)) return;
        const Tensor& go = g.node(Var{rid}).grad_buf;
        Tensor& ga = g.grad_buf(a);
        int oh = h * 2, ow = w * 2;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                for (int ch = 0; ch < c; ++ch) ga.at((y / 2) * w + x / 2, ch) += go.at(y * ow + x, ch);
    });
}

Var Graph::bilinear_resize(Var a, int channels, int h, int w, int out_size) {
    const Tensor& ta = value(a);
    if (ta.numel() != static_cast<int64_t>(channels) * h * w)
        throw input_error("bilinear_resize: size mismatch");
    Tensor out({channels, out_size, out_size});
    kernels::bilinear_resize(ta.ptr(), out.ptr(), channels, h, w, out_size, out_size);
    return push(std::move(out), requires_grad(a),
                [a, channels, h, w, out_size, rid = static_cast<int>(nodes_.size())](Graph& g) {
                    if (!g.requires_grad(a)) return;
                    const Tensor& go = g.node(Var{rid}).grad_buf;
                    Tensor& ga = g.grad_buf(a);
                    kernels::bilinear_resize_backward(go.ptr(), ga.ptr(), channels, h, w, out_size, out_size);
                });
}

// ---------------------------------------------------------------- reductions

Var Graph::mean_all(Var a) {
    const Tensor& ta = value(a);
    double m = kernels::sum(ta.ptr(), ta.numel()) / static_cast<double>(ta.numel());
    Tensor out({1});
    out.data[0] = m;
    return push(std::move(out), requires_grad(a), [a, rid = static_cast<int>(nodes_.size())](Graph& g) {
        if (!g.requires_grad(a)) return;
        const Tensor& go = g.node(Var{rid}).grad_buf;
        Tensor& ga = g.grad_buf(a);
        double gscale = go.data[0] / static_cast<double>(ga.numel());
        for (double& v : ga.data) v += gscale;
    });
}

Var Graph::mse(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw input_error("mse: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    Tensor out({1});
    out.data[0] = kernels::mse(ta.ptr(), tb.ptr(), ta.numel());
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b, rid = static_cast<int>(nodes_.size())](Graph& g) {
        const Tensor& go = g.node(Var{rid}).grad_buf;
        const Tensor& ta2 = g.value(a);
        const Tensor& tb2 = g.value(b);
        double c = 2.0 * go.data[0] / static_cast<double>(ta2.numel());
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_buf(a);
            for (int64_t i = 0; i < ta2.numel(); ++i)
                ga.data[static_cast<size_t>(i)] += c * (ta2.data[static_cast<size_t>(i)] - tb2.data[static_cast<size_t>(i)]);
        }
        if (g.requires_grad(b)) {
            Tensor& gb = g.grad_buf(b);
            for (int64_t i = 0; i < ta2.numel(); ++i)
                gb.data[static_cast<size_t>(i)] -= c * (ta2.data[static_cast<size_t>(i)] - tb2.data[static_cast<size_t>(i)]);
        }
    });
}

Var Graph::mean_vars(const std::vector<Var>& parts) {
    if (parts.empty()) throw input_error("mean_vars: empty");
    Var acc = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
    return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

}  // namespace sefi
