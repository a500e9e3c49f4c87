#include <cmath>
#include <filesystem>
#include <fstream>

#include "sefi/backend.hpp"
#include "sefi/errors.hpp"

namespace sefi {

void BackendDescriptor::validate() const {
    if (total_steps < 1 || static_cast<int>(alpha_bar.size()) != total_steps)
        throw config_error("backend '" + name + "': alpha_bar length != total_steps");
    double prev = 2.0;
    for (int t = 0; t < total_steps; ++t) {
        double a = alpha_bar[static_cast<size_t>(t)];
        if (!(a > 0.0 && a <= 1.0)) throw config_error("backend '" + name + "': alpha_bar outside (0,1]");
        if (!(a < prev)) throw config_error("backend '" + name + "': alpha_bar not strictly decreasing");
        prev = a;
    }
}

Var Backend::predict_eps_single(Graph& g, Var z_t, int t, Var condition, AttentionProbe* probe) const {
    ConditionPairVars cond;
    cond.k_condition = condition;
    cond.v_condition = condition;
    cond.stage = 0;
    return predict_eps(g, z_t, t, cond, probe);
}

Tensor add_noise(const BackendDescriptor& d, const Tensor& z0, int t, const Tensor& noise) {
    if (t < 0 || t >= d.total_steps)
        throw input_error("add_noise: t=" + std::to_string(t) + " outside [0," + std::to_string(d.total_steps) + ")");
    if (!z0.same_shape(noise)) throw input_error("add_noise: latent/noise shape mismatch");
    double ab = d.alpha_bar[static_cast<size_t>(t)];
    double sa = std::sqrt(ab);
    double sn = std::sqrt(1.0 - ab);
    Tensor zt(z0.shape);
    for (int64_t i = 0; i < z0.numel(); ++i)
        zt.data[static_cast<size_t>(i)] = sa * z0.data[static_cast<size_t>(i)] + sn * noise.data[static_cast<size_t>(i)];
    return zt;
}

// ------------------------------------------------------------- SD 1.4 adapter

BackendDescriptor sd14_descriptor() {
    BackendDescriptor d;
    d.name = "sd14-adapter";
    d.d_text = 768;
    d.d_cond = 768;
    d.seq_len = 77;
    d.head_count = 8;
    d.cross_attention_layers = 16;
    d.latent_shape = {4, 64, 64};
    d.canonical_attn_size = 32;
    d.image_size = 512;
    d.total_steps = 1000;
    d.alpha_bar.resize(1000);
    // scaled-linear beta schedule, the SD 1.x default
    double ls = std::sqrt(0.00085), le = std::sqrt(0.0120);
    double product = 1.0;
    for (int t = 0; t < 1000; ++t) {
        double beta_sqrt = ls + (le - ls) * (static_cast<double>(t) / 999.0);
        product *= 1.0 - beta_sqrt * beta_sqrt;
        d.alpha_bar[static_cast<size_t>(t)] = product;
    }
    return d;
}

namespace {

// Interface-and-contract stand-in. Loading validates the weights directory
// layout; executing the model needs an external runtime that this build does
// not bundle.
class Sd14Adapter final : public Backend {
public:
    explicit Sd14Adapter(const std::string& weights_dir) : desc_(sd14_descriptor()) {
        namespace fs = std::filesystem;
        if (weights_dir.empty())
            throw config_error("sd14-adapter: weights directory required (flag or SEFI_WEIGHTS_DIR)");
        if (!fs::is_directory(weights_dir))
            throw config_error("sd14-adapter: not a directory: " + weights_dir);
        // diffusers-style layout: a model index plus per-component directories
        const char* required[] = {"model_index.json", "text_encoder", "unet", "vae", "tokenizer"};
        for (const char* entry : required)
            if (!fs::exists(fs::path(weights_dir) / entry))
                throw config_error("sd14-adapter: missing '" + std::string(entry) + "' under " + weights_dir);
        desc_.validate();
    }

    const BackendDescriptor& descriptor() const override { return desc_; }

    [[noreturn]] void unavailable() const {
        throw config_error(
            "sd14-adapter: model execution requires an external Stable Diffusion runtime; "
            "this build ships the interface and weight-directory contract only (use backend 'toy')");
    }

    std::vector<int> tokenize(const std::string&) const override { unavailable(); }
    bool is_placeholder_id(int, int*) const override { unavailable(); }
    Tensor token_embedding(int) const override { unavailable(); }
    int bos_id() const override { unavailable(); }
    int eos_id() const override { unavailable(); }
    int pad_id() const override { unavailable(); }
    Var encode_text(Graph&, Var) const override { unavailable(); }
    Var predict_eps(Graph&, Var, int, const ConditionPairVars&, AttentionProbe*) const override { unavailable(); }
    std::vector<Tensor> reference_attention_maps(const AttentionProbe&, const Tensor&) const override { unavailable(); }
    Tensor vae_encode(const Tensor&) const override { unavailable(); }
    Tensor vae_decode(const Tensor&) const override { unavailable(); }

private:
    BackendDescriptor desc_;
};

}  // namespace

std::unique_ptr<Backend> make_sd14_adapter(const std::string& weights_dir) {
    return std::make_unique<Sd14Adapter>(weights_dir);
}

}  // namespace sefi
