#include "sefi/attention.hpp"

#include <cmath>

#include "sefi/errors.hpp"
#include "sefi/image.hpp"

namespace sefi {

LossOption loss_option_from_int(int v) {
    switch (v) {
        case 1: return LossOption::slot_only;
        case 2: return LossOption::prompt_length;
        case 3: return LossOption::full;
        default: throw config_error("loss option must be 1, 2 or 3, got " + std::to_string(v));
    }
}

namespace {

void check_layer_square(const LayerCapture& c) {
    if (c.spatial_h * c.spatial_w != c.n_queries || c.spatial_h != c.spatial_w)
        throw input_error("re2: layer query count " + std::to_string(c.n_queries) +
                          " is not a square spatial map");
}

Var re2_one_layer(Graph& g, Var probs, const LayerCapture& c, int s_out) {
    check_layer_square(c);
    Var hl_by_q = g.attn_rearrange(probs, c.heads, c.n_queries, c.seq_len);
    return g.bilinear_resize(hl_by_q, c.heads * c.seq_len, c.spatial_h, c.spatial_w, s_out);
}

}  // namespace

Var re2_vars(Graph& g, const AttentionProbe& probe, int canonical_size) {
    probe.require_nonempty();
    std::vector<Var> layers;
    layers.reserve(static_cast<size_t>(probe.layer_count()));
    int heads = probe.layer(0).heads;
    int seq_len = probe.layer(0).seq_len;
    for (int i = 0; i < probe.layer_count(); ++i) {
        const LayerCapture& c = probe.layer(i);
        if (c.heads != heads || c.seq_len != seq_len)
            throw input_error("re2: inconsistent head count or text length across layers");
        layers.push_back(re2_one_layer(g, c.probs, c, canonical_size));
    }
    Var mean = g.mean_vars(layers);
    return g.reshape(mean, {heads, seq_len, canonical_size, canonical_size});
}

AttentionMapStack re2_reference(const AttentionProbe& probe, const std::vector<Tensor>& raw_maps,
                                int canonical_size) {
    probe.require_nonempty();
    if (static_cast<int>(raw_maps.size()) != probe.layer_count())
        throw input_error("re2_reference: raw map count != probe layer count");
    Graph g;
    std::vector<Var> layers;
    for (int i = 0; i < probe.layer_count(); ++i) {
        const LayerCapture& c = probe.layer(i);
        Var raw = g.constant(raw_maps[static_cast<size_t>(i)]);
        layers.push_back(re2_one_layer(g, raw, c, canonical_size));
    }
    Var mean = g.mean_vars(layers);
    AttentionMapStack stack;
    stack.maps = g.value(g.reshape(mean, {probe.layer(0).heads, probe.layer(0).seq_len,
                                          canonical_size, canonical_size}));
    stack.layer_count = probe.layer_count();
    stack.source = AttentionMapStack::Source::reference;
    return stack;
}

namespace {

// variant #1 keeps the slot's L-slice, #2 the [0, prompt_len) slices, #3 all
Var select_slices(Graph& g, Var stack, LossOption option, int slot_index, int prompt_len) {
    const Tensor& t = g.value(stack);
    if (t.rank() != 4) throw input_error("attention loss expects a (H,L,S,S) stack");
    int L = t.dim(1);
    switch (option) {
        case LossOption::slot_only:
            if (slot_index < 0 || slot_index >= L) throw input_error("slot index outside text length");
            return g.slice_dim(stack, 1, slot_index, slot_index + 1);
        case LossOption::prompt_length:
            if (prompt_len < 1 || prompt_len > L) throw input_error("prompt_len outside [1, L]");
            return g.slice_dim(stack, 1, 0, prompt_len);
        case LossOption::full:
            return stack;
    }
    throw input_error("unreachable loss option");
}

}  // namespace

Var attention_loss_vars(Graph& g, Var a_t, const Tensor& a_r, LossOption option,
                        int slot_index, int prompt_len) {
    return attention_loss_vars(g, a_t, g.constant(a_r), option, slot_index, prompt_len);
}

Var attention_loss_vars(Graph& g, Var a_t, Var a_r, LossOption option,
                        int slot_index, int prompt_len) {
    if (!g.value(a_t).same_shape(g.value(a_r)))
        throw input_error("attention loss: stack shapes differ, " + shape_str(g.value(a_t).shape) +
                          " vs " + shape_str(g.value(a_r).shape));
    Var t_sel = select_slices(g, a_t, option, slot_index, prompt_len);
    Var r_sel = select_slices(g, a_r, option, slot_index, prompt_len);
    return g.mse(t_sel, r_sel);
}

double attention_loss(const AttentionMapStack& a_r, const AttentionMapStack& a_t, LossOption option,
                      int slot_index, int prompt_len) {
    Graph g;
    Var t = g.constant(a_t.maps);
    return g.value(attention_loss_vars(g, t, a_r.maps, option, slot_index, prompt_len)).data[0];
}

std::vector<std::string> write_attention_heatmaps(const AttentionMapStack& stack, int timestep,
                                                  const std::string& out_dir) {
    const Tensor& m = stack.maps;
    if (m.rank() != 4) throw input_error("heatmap export expects a (H,L,S,S) stack");
    int H = m.dim(0), L = m.dim(1), S = m.dim(2);
    double peak = 0.0;
    for (double v : m.data) peak = std::max(peak, v);
    std::vector<std::string> files;
    for (int tok = 0; tok < L; ++tok) {
        // average heads for the per-token view
        Tensor img({S, S});
        for (int h = 0; h < H; ++h) {
            const double* plane = m.ptr() + (static_cast<int64_t>(h) * L + tok) * S * S;
            for (int i = 0; i < S * S; ++i) img.data[static_cast<size_t>(i)] += plane[i];
        }
        for (double& v : img.data) v /= H;
        std::string path = out_dir + "/attn_t" + std::to_string(timestep) + "_tok" + std::to_string(tok) + ".png";
        write_png_gray(path, img, peak > 0.0 ? peak : 1.0);
        files.push_back(path);
    }
    return files;
}

void AttentionProbe::require_nonempty() const {
    if (layers_.empty())
        throw config_error("attention probe has no registered layers; pass it to predict_eps first");
}

}  // namespace sefi
