#include "sefi/expander.hpp"

#include <cmath>

#include "sefi/errors.hpp"
#include "sefi/rng.hpp"

namespace sefi {

std::vector<std::pair<std::string, Tensor*>> ExpanderParams::named_tensors() {
    return {
        {"seed_offsets", &seed_offsets},
        {"attn1.ln_gamma", &attn1.ln_gamma}, {"attn1.ln_beta", &attn1.ln_beta},
        {"attn1.wq", &attn1.wq}, {"attn1.bq", &attn1.bq},
        {"attn1.wk", &attn1.wk}, {"attn1.bk", &attn1.bk},
        {"attn1.wv", &attn1.wv}, {"attn1.bv", &attn1.bv},
        {"attn1.wo", &attn1.wo}, {"attn1.bo", &attn1.bo},
        {"attn2.ln_gamma", &attn2.ln_gamma}, {"attn2.ln_beta", &attn2.ln_beta},
        {"attn2.wq", &attn2.wq}, {"attn2.bq", &attn2.bq},
        {"attn2.wk", &attn2.wk}, {"attn2.bk", &attn2.bk},
        {"attn2.wv", &attn2.wv}, {"attn2.bv", &attn2.bv},
        {"attn2.wo", &attn2.wo}, {"attn2.bo", &attn2.bo},
        {"ffn.ln_gamma", &ffn.ln_gamma}, {"ffn.ln_beta", &ffn.ln_beta},
        {"ffn.w1", &ffn.w1}, {"ffn.b1", &ffn.b1},
        {"ffn.w2", &ffn.w2}, {"ffn.b2", &ffn.b2},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ExpanderParams::named_tensors() const {
    auto mut = const_cast<ExpanderParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

int64_t ExpanderParams::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_tensors()) n += t->numel();
    return n;
}

ExpanderParams init_expander(int d_text, int n_pairs, uint64_t rng_seed) {
    if (d_text < 4) throw config_error("init_expander: d_text must be >= 4, got " + std::to_string(d_text));
    if (n_pairs < 1) throw config_error("init_expander: n_pairs must be >= 1, got " + std::to_string(n_pairs));
    constexpr double kInitStd = 0.02;
    Rng rng(rng_seed);
    ExpanderParams p;
    p.d_text = d_text;
    p.n_pairs = n_pairs;
    p.seed_offsets = rng.gaussian_tensor({2 * n_pairs, d_text}, kInitStd);
    auto init_attn = [&](SelfAttnLayerParams& a) {
        a.ln_gamma = Tensor({d_text}, 1.0);
        a.ln_beta = Tensor({d_text}, 0.0);
        a.wq = rng.gaussian_tensor({d_text, d_text}, kInitStd);
        a.wk = rng.gaussian_tensor({d_text, d_text}, kInitStd);
        a.wv = rng.gaussian_tensor({d_text, d_text}, kInitStd);
        a.wo = rng.gaussian_tensor({d_text, d_text}, kInitStd);
        a.bq = Tensor({d_text}, 0.0);
        a.bk = Tensor({d_text}, 0.0);
        a.bv = Tensor({d_text}, 0.0);
        a.bo = Tensor({d_text}, 0.0);
    };
    init_attn(p.attn1);
    init_attn(p.attn2);
    p.ffn.ln_gamma = Tensor({d_text}, 1.0);
    p.ffn.ln_beta = Tensor({d_text}, 0.0);
    p.ffn.w1 = rng.gaussian_tensor({d_text, 4 * d_text}, kInitStd);
    p.ffn.b1 = Tensor({4 * d_text}, 0.0);
    p.ffn.w2 = rng.gaussian_tensor({4 * d_text, d_text}, kInitStd);
    p.ffn.b2 = Tensor({d_text}, 0.0);
    return p;
}

std::vector<Var> ExpanderVars::all() const {
    return {seed_offsets,
            attn1.ln_gamma, attn1.ln_beta, attn1.wq, attn1.bq, attn1.wk, attn1.bk,
            attn1.wv, attn1.bv, attn1.wo, attn1.bo,
            attn2.ln_gamma, attn2.ln_beta, attn2.wq, attn2.bq, attn2.wk, attn2.bk,
            attn2.wv, attn2.bv, attn2.wo, attn2.bo,
            ffn.ln_gamma, ffn.ln_beta, ffn.w1, ffn.b1, ffn.w2, ffn.b2};
}

namespace {

ExpanderVars make_vars(Graph& g, const ExpanderParams& p, bool trainable) {
    auto mk = [&](const Tensor& t) { return trainable ? g.leaf(t) : g.constant(t); };
    ExpanderVars v;
    v.seed_offsets = mk(p.seed_offsets);
    auto mk_attn = [&](const SelfAttnLayerParams& a) {
        ExpanderVars::AttnVars av;
        av.ln_gamma = mk(a.ln_gamma);
        av.ln_beta = mk(a.ln_beta);
        av.wq = mk(a.wq);
        av.wk = mk(a.wk);
        av.wv = mk(a.wv);
        av.wo = mk(a.wo);
        av.bq = mk(a.bq);
        av.bk = mk(a.bk);
        av.bv = mk(a.bv);
        av.bo = mk(a.bo);
        return av;
    };
    v.attn1 = mk_attn(p.attn1);
    v.attn2 = mk_attn(p.attn2);
    v.ffn.ln_gamma = mk(p.ffn.ln_gamma);
    v.ffn.ln_beta = mk(p.ffn.ln_beta);
    v.ffn.w1 = mk(p.ffn.w1);
    v.ffn.b1 = mk(p.ffn.b1);
    v.ffn.w2 = mk(p.ffn.w2);
    v.ffn.b2 = mk(p.ffn.b2);
    return v;
}

// x + SelfAttn(LN(x)); single head, no positional encoding, so the block is
// equivariant under row permutations of the input
Var attn_block(Graph& g, Var x, const ExpanderVars::AttnVars& a, double score_scale) {
    Var h = g.layernorm_rows(x, a.ln_gamma, a.ln_beta);
    Var q = g.add_rowvec(g.matmul(h, a.wq), a.bq);
    Var k = g.add_rowvec(g.matmul(h, a.wk), a.bk);
    Var v = g.add_rowvec(g.matmul(h, a.wv), a.bv);
    Var scores = g.scale(g.matmul_nt(q, k), score_scale);
    Var probs = g.softmax_rows(scores);
    Var ctx = g.matmul(probs, v);
    Var out = g.add_rowvec(g.matmul(ctx, a.wo), a.bo);
    return g.add(x, out);
}

Var ffn_block(Graph& g, Var x, const ExpanderVars::FfnVars& f) {
    Var h = g.layernorm_rows(x, f.ln_gamma, f.ln_beta);
    Var mid = g.gelu(g.add_rowvec(g.matmul(h, f.w1), f.b1));
    Var out = g.add_rowvec(g.matmul(mid, f.w2), f.b2);
    return g.add(x, out);
}

}  // namespace

ExpanderVars expander_leaves(Graph& g, const ExpanderParams& p) { return make_vars(g, p, true); }
ExpanderVars expander_constants(Graph& g, const ExpanderParams& p) { return make_vars(g, p, false); }

std::pair<Var, Var> expand_vars(Graph& g, const ExpanderVars& vars, const ExpanderParams& p, const IDToken& token) {
    if (token.vector.numel() != p.d_text)
        throw config_error("expand: id token dim " + std::to_string(token.vector.numel()) +
                           " != expander d_text " + std::to_string(p.d_text));
    int rows = 2 * p.n_pairs;
    Tensor base({rows, p.d_text});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < p.d_text; ++c) base.at(r, c) = token.vector.data[static_cast<size_t>(c)];
    Var x = g.add(g.constant(std::move(base)), vars.seed_offsets);
    double scale = 1.0 / std::sqrt(static_cast<double>(p.d_text));
    x = attn_block(g, x, vars.attn1, scale);
    x = attn_block(g, x, vars.attn2, scale);
    x = ffn_block(g, x, vars.ffn);
    Var k = g.slice_dim(x, 0, 0, p.n_pairs);
    Var v = g.slice_dim(x, 0, p.n_pairs, rows);
    return {k, v};
}

ExpandedTokenSet expand(const ExpanderParams& p, const IDToken& token) {
    Graph g;
    ExpanderVars vars = expander_constants(g, p);
    auto [k, v] = expand_vars(g, vars, p, token);
    ExpandedTokenSet set;
    set.k_tokens = g.value(k);
    set.v_tokens = g.value(v);
    return set;
}

}  // namespace sefi
