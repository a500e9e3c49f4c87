#ifndef SEFI_ATTENTION_HPP
#define SEFI_ATTENTION_HPP

#include <string>
#include <vector>

#include "sefi/backend.hpp"
#include "sefi/graph.hpp"
#include "sefi/tensor.hpp"

namespace sefi {

// Canonicalized cross-attention stack, logical shape (H, L, S, S).
struct AttentionMapStack {
    enum class Source { reference, target };
    Tensor maps;          // shape {H, L, S, S}
    int layer_count = 0;  // layers averaged into this stack
    Source source = Source::target;
};

enum class LossOption { slot_only = 1, prompt_length = 2, full = 3 };

LossOption loss_option_from_int(int v);

// Re2: per layer, transpose query/text axes, reshape queries to their spatial
// grid, bilinear-resize to (S,S), then average across layers. Gradient flows
// through when the probe maps carry it.
Var re2_vars(Graph& g, const AttentionProbe& probe, int canonical_size);

// detached variant over raw reference maps (one [H*nq, L] tensor per layer,
// spatial metadata taken from the probe's captures)
AttentionMapStack re2_reference(const AttentionProbe& probe, const std::vector<Tensor>& raw_maps,
                                int canonical_size);

// MSE between the selected L-slices of two stacks. a_r is a constant: no
// gradient ever reaches the reference side.
Var attention_loss_vars(Graph& g, Var a_t, const Tensor& a_r, LossOption option,
                        int slot_index, int prompt_len);
// variant for callers that hold the reference as a graph constant already
// (lets tests inspect the reference-side gradient accumulator)
Var attention_loss_vars(Graph& g, Var a_t, Var a_r, LossOption option,
                        int slot_index, int prompt_len);

// tensor-level version (evaluation, tests)
double attention_loss(const AttentionMapStack& a_r, const AttentionMapStack& a_t, LossOption option,
                      int slot_index, int prompt_len);

// one grayscale PNG per token index, normalized to the stack's max entry;
// files named attn_t{timestep}_tok{index}.png
std::vector<std::string> write_attention_heatmaps(const AttentionMapStack& stack, int timestep,
                                                  const std::string& out_dir);

}  // namespace sefi

#endif
