#ifndef SEFI_EXPANDER_HPP
#define SEFI_EXPANDER_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sefi/graph.hpp"
#include "sefi/tensor.hpp"

namespace sefi {

// The frozen anchor token. Never receives optimizer updates.
struct IDToken {
    Tensor vector;  // [d_text]
    std::string source_word = "person";
};

struct SelfAttnLayerParams {
    Tensor ln_gamma, ln_beta;        // [d]
    Tensor wq, wk, wv, wo;           // [d,d]
    Tensor bq, bk, bv, bo;           // [d]
};

struct FfnParams {
    Tensor ln_gamma, ln_beta;  // [d]
    Tensor w1, b1;             // [d,4d],[4d]
    Tensor w2, b2;             // [4d,d],[d]
};

// The only trainable weights in the whole system: ten seed offsets plus two
// pre-norm self-attention blocks and one pre-norm feed-forward block.
struct ExpanderParams {
    int d_text = 0;
    int n_pairs = 0;
    Tensor seed_offsets;  // [2*n_pairs, d_text]
    SelfAttnLayerParams attn1, attn2;
    FfnParams ffn;

    // fixed declared order; this is also the checkpoint payload order
    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
    int64_t parameter_count() const;
};

struct ExpandedTokenSet {
    Tensor k_tokens;  // [n_pairs, d_text]
    Tensor v_tokens;  // [n_pairs, d_text]
    int n_pairs() const { return k_tokens.rows(); }
    int d_text() const { return k_tokens.cols(); }
};

// Gaussian(0, 0.02) offsets and projections, zero biases, unit LN gains.
ExpanderParams init_expander(int d_text, int n_pairs, uint64_t rng_seed);

// graph-resident mirror of ExpanderParams for a training step
struct ExpanderVars {
    Var seed_offsets;
    struct AttnVars {
        Var ln_gamma, ln_beta, wq, wk, wv, wo, bq, bk, bv, bo;
    } attn1, attn2;
    struct FfnVars {
        Var ln_gamma, ln_beta, w1, b1, w2, b2;
    } ffn;
    std::vector<Var> all() const;
};

// leaves (requires_grad) in the same declared order as named_tensors()
ExpanderVars expander_leaves(Graph& g, const ExpanderParams& p);
// constants (for inference-style evaluation through the same code path)
ExpanderVars expander_constants(Graph& g, const ExpanderParams& p);

// Broadcast the ID token to 2*n_pairs positions, add the seed offsets, run
// the block stack. First n_pairs rows are the K-path tokens, the rest V-path.
std::pair<Var, Var> expand_vars(Graph& g, const ExpanderVars& vars, const ExpanderParams& p, const IDToken& token);

// convenience: materialize the token set without keeping a graph around
ExpandedTokenSet expand(const ExpanderParams& p, const IDToken& token);

}  // namespace sefi

#endif
