#ifndef SEFI_BACKEND_HPP
#define SEFI_BACKEND_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sefi/graph.hpp"
#include "sefi/tensor.hpp"

namespace sefi {

struct BackendDescriptor {
    std::string name;
    int d_text = 0;                       // text-embedding dim
    int d_cond = 0;                       // encoder output dim
    int seq_len = 0;                      // L, tokenized length incl. start/end/pad
    int head_count = 0;                   // cross-attention heads H
    int cross_attention_layers = 0;
    std::array<int, 3> latent_shape{};    // channels, height, width
    int canonical_attn_size = 0;          // S, re2 target resolution
    int image_size = 0;                   // side length of model-space images
    int total_steps = 0;
    std::vector<double> alpha_bar;        // strictly decreasing, in (0,1]

    int64_t latent_numel() const {
        return static_cast<int64_t>(latent_shape[0]) * latent_shape[1] * latent_shape[2];
    }
    void validate() const;  // throws config_error on a malformed schedule
};

// One cross-attention layer's capture: softmax probabilities with gradient
// for the in-flight pass, plus detached per-head queries so reference maps
// can be recomputed against a different condition.
struct LayerCapture {
    Var probs;                      // [H*nq, L], head-major rows
    std::vector<Tensor> q_heads;    // H tensors, each [nq, head_dim], detached
    int heads = 0;
    int n_queries = 0;
    int seq_len = 0;
    int spatial_h = 0;
    int spatial_w = 0;
    double score_scale = 0.0;       // 1/sqrt(head_dim)
};

// Owned by exactly one forward pass. Re-register a fresh probe per pass.
class AttentionProbe {
public:
    void add_layer(LayerCapture c) { layers_.push_back(std::move(c)); }
    int layer_count() const { return static_cast<int>(layers_.size()); }
    const LayerCapture& layer(int i) const { return layers_[static_cast<size_t>(i)]; }
    const std::vector<LayerCapture>& layers() const { return layers_; }
    void require_nonempty() const;
    void clear() { layers_.clear(); }

private:
    std::vector<LayerCapture> layers_;
};

struct ConditionPairVars {
    Var k_condition;  // [L, d_cond], feeds every K projection
    Var v_condition;  // [L, d_cond], feeds every V projection
    int stage = 0;
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    // word-level ids; placeholders ("V*", "V1*", ...) map to reserved ids
    virtual std::vector<int> tokenize(const std::string& text) const = 0;
    virtual bool is_placeholder_id(int token_id, int* identity_index) const = 0;
    virtual Tensor token_embedding(int token_id) const = 0;
    virtual int bos_id() const = 0;
    virtual int eos_id() const = 0;
    virtual int pad_id() const = 0;

    // frozen text encoder over assembled input embeddings [L, d_text]
    virtual Var encode_text(Graph& g, Var token_embeddings) const = 0;

    // denoiser forward; every cross-attention layer takes K from
    // cond.k_condition and V from cond.v_condition
    virtual Var predict_eps(Graph& g, Var z_t, int t, const ConditionPairVars& cond,
                            AttentionProbe* probe) const = 0;

    // standard single-condition pass: K and V both from `condition`
    Var predict_eps_single(Graph& g, Var z_t, int t, Var condition, AttentionProbe* probe = nullptr) const;

    // recompute each captured layer's attention probabilities against a
    // different condition, using the pass's own queries; fully detached
    virtual std::vector<Tensor> reference_attention_maps(const AttentionProbe& probe,
                                                         const Tensor& reference_condition) const = 0;

    virtual Tensor vae_encode(const Tensor& image) const = 0;  // [h,w,3] -> latent
    virtual Tensor vae_decode(const Tensor& latent) const = 0;
};

// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) noise
Tensor add_noise(const BackendDescriptor& d, const Tensor& z0, int t, const Tensor& noise);

struct ToyBackendOptions {
    uint64_t seed = 0;
    int d_text = 16;
    int seq_len = 8;
};

std::unique_ptr<Backend> make_toy_backend(const ToyBackendOptions& opts = {});

// SD 1.4 adapter: descriptor + weights-directory contract. Forward ops
// require an external model runtime and report config_error in this build.
std::unique_ptr<Backend> make_sd14_adapter(const std::string& weights_dir);
BackendDescriptor sd14_descriptor();

}  // namespace sefi

#endif
