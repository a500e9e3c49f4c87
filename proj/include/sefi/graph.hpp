#ifndef SEFI_GRAPH_HPP
#define SEFI_GRAPH_HPP

#include <functional>
#include <utility>
#include <vector>

#include "sefi/tensor.hpp"

namespace sefi {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so backward()
// is a single reverse sweep. Constants never record backward closures;
// gradient only reaches leaves created with leaf().
class Graph {
public:
    Var constant(Tensor v);
    Var leaf(Tensor v);

    const Tensor& value(Var v) const;
    // zero tensor if backward never reached this node
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;

    void backward(Var scalar_loss);

    // elementwise
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var gelu(Var a);
    // mat[r,c] + vec[c] broadcast over rows
    Var add_rowvec(Var mat, Var vec);

    // linear algebra
    Var matmul(Var a, Var b);     // [m,k]x[k,n]
    Var matmul_nt(Var a, Var b);  // [m,k]x[n,k]^T -> [m,n]
    Var softmax_rows(Var a, bool causal = false);
    Var layernorm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

    // shape plumbing
    Var reshape(Var a, std::vector<int> shape);
    Var slice_dim(Var a, int dim, int i0, int i1);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    // copy of base with listed rows replaced; gradient reaches only the
    // replacement vectors
    Var splice_rows(Var base, const std::vector<std::pair<int, Var>>& rows);
    // [C,h,w] <-> [h*w,C] layout flips
    Var rows_from_channels(Var a, int channels, int h, int w);
    Var channels_from_rows(Var a, int h, int w, int channels);
    // [H*nq,L] -> [H*L,nq] (head-major map transpose used by re2)
    Var attn_rearrange(Var a, int heads, int n_queries, int seq_len);

    // spatial
    Var avgpool2x2(Var a, int h, int w);   // rows are h*w pixels
    Var upsample2x(Var a, int h, int w);   // nearest
    Var bilinear_resize(Var a, int channels, int h, int w, int out_size);

    // reductions
    Var mean_all(Var a);
    Var mse(Var a, Var b);

    Var mean_vars(const std::vector<Var>& parts);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad_buf;
        bool requires_grad = false;
        bool grad_alloc = false;
        std::function<void(Graph&)> backward_fn;
    };

    std::vector<Node> nodes_;
    Tensor zero_scratch_;

    Var push(Tensor value, bool requires_grad, std::function<void(Graph&)> backward_fn);
    Node& node(Var v);
    const Node& node(Var v) const;
    Tensor& grad_buf(Var v);
    void accumulate(Var v, const double* g, int64_t n);

    friend struct GraphTestAccess;
};

}  // namespace sefi

#endif
