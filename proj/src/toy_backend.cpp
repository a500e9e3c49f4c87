#include <cctype>
#include <cmath>
#include <map>

#include "sefi/backend.hpp"
#include "sefi/errors.hpp"
#include "sefi/kernels.hpp"
#include "sefi/rng.hpp"

// Tiny deterministic backend: word-level tokenizer, 2-block causal text
// encoder, a UNet-like denoiser with two cross-attention layers (8x8 and
// 4x4), and an orthogonal-map VAE with an exact round trip. Shapes are small
// enough for finite-difference tests while keeping the real structure:
// softmax cross-attention where K comes from the K-path condition and V from
// the V-path condition, residual trunk, timestep embedding.
//
// Queries are computed from the condition-independent trunk, so captured
// attention maps depend on the K path only; the V path reaches the output
// through the attention values. That separation is a backend invariant the
// tests rely on.

namespace sefi {

namespace {

constexpr int kBos = 0, kEos = 1, kPad = 2;
constexpr int kPlaceholderV = 3;       // "V*"
constexpr int kPlaceholderBase = 4;    // "V1*".."V4*" -> 4..7
constexpr int kMaxIdentities = 4;
constexpr int kWordBase = 8;
constexpr int kHashBuckets = 64;

const char* kVocabWords[] = {
    "person", "a", "an", "the", "of", "photo", "face", "rendering", "rendition",
    "illustration", "depiction", "close-up", "cool", "portrait", "picture",
    "man", "woman", "dog", "cat", "bear", "and", "with", "in", "on", "smiling",
    "old", "young", "happy", "hat", "beach", "snow", "guitar", "coffee",
};
constexpr int kNumWords = static_cast<int>(sizeof(kVocabWords) / sizeof(kVocabWords[0]));

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct EncoderBlock {
    Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b, w1, b1, w2, b2;
};

struct CrossAttnWeights {
    Tensor ln_g, ln_b;               // [c]
    std::vector<Tensor> wq, wk, wv;  // per head: [c,dh], [d_cond,dh], [d_cond,dh]
    Tensor wo, bo;                   // [c,c],[c]
    int channels = 0, heads = 0, head_dim = 0;
    int spatial_h = 0, spatial_w = 0;
    double score_scale = 0.0;
};

struct ToyWeights {
    Tensor tok_emb;  // [vocab, d]
    Tensor pos_emb;  // [L, d]
    EncoderBlock enc1, enc2;
    Tensor enc_ln_g, enc_ln_b;

    Tensor stem_w, stem_b;    // [zc,c1]
    Tensor temb_w, temb_b;    // [d_temb, d_temb]
    Tensor temb1_w, temb1_b;  // [d_temb, c1]
    Tensor temb2_w, temb2_b;  // [d_temb, c2]
    Tensor down_w, down_b;    // [c1,c2]
    CrossAttnWeights xattn1, xattn2;
    Tensor up_w, up_b;        // [c2,c1]
    Tensor head_ln_g, head_ln_b, head_w, head_b;  // [c1], [c1,zc]

    Tensor vae_map;  // [n,n] orthogonal, n = latent numel
};

class ToyBackend final : public Backend {
public:
    explicit ToyBackend(const ToyBackendOptions& opts) {
        if (opts.d_text < 4) throw config_error("toy backend: d_text must be >= 4");
        if (opts.seq_len < 4) throw config_error("toy backend: seq_len must be >= 4");
        desc_.name = "toy";
        desc_.d_text = opts.d_text;
        desc_.d_cond = opts.d_text;
        desc_.seq_len = opts.seq_len;
        desc_.head_count = 2;
        desc_.cross_attention_layers = 2;
        desc_.latent_shape = {4, 8, 8};
        desc_.canonical_attn_size = 8;
        desc_.image_size = 8;
        desc_.total_steps = 1000;
        desc_.alpha_bar = cosine_alpha_bar(desc_.total_steps);
        desc_.validate();
        init_weights(opts.seed);
    }

    const BackendDescriptor& descriptor() const override { return desc_; }

    std::vector<int> tokenize(const std::string& text) const override {
        std::vector<int> ids;
        std::string word;
        auto flush = [&]() {
            if (word.empty()) return;
            ids.push_back(word_id(word));
            word.clear();
        };
        for (char ch : text) {
            if (std::isspace(static_cast<unsigned char>(ch))) {
                flush();
            } else if (ch == ',' || ch == '.' || ch == ';' || ch == ':' || ch == '!' || ch == '?') {
                flush();  // punctuation separates, carries no token
            } else {
                word.push_back(ch);
            }
        }
        flush();
        return ids;
    }

    bool is_placeholder_id(int token_id, int* identity_index) const override {
        if (token_id == kPlaceholderV) {
            if (identity_index) *identity_index = 0;
            return true;
        }
        if (token_id >= kPlaceholderBase && token_id < kPlaceholderBase + kMaxIdentities) {
            if (identity_index) *identity_index = token_id - kPlaceholderBase;
            return true;
        }
        return false;
    }

    Tensor token_embedding(int token_id) const override {
        if (token_id < 0 || token_id >= w_.tok_emb.rows())
            throw input_error("token id " + std::to_string(token_id) + " outside vocab");
        Tensor row({desc_.d_text});
        for (int c = 0; c < desc_.d_text; ++c) row.data[static_cast<size_t>(c)] = w_.tok_emb.at(token_id, c);
        return row;
    }

    int bos_id() const override { return kBos; }
    int eos_id() const override { return kEos; }
    int pad_id() const override { return kPad; }

    Var encode_text(Graph& g, Var token_embeddings) const override {
        const Tensor& t = g.value(token_embeddings);
        if (t.rank() != 2 || t.rows() != desc_.seq_len || t.cols() != desc_.d_text)
            throw config_error("encode_text: expected [" + std::to_string(desc_.seq_len) + "," +
                               std::to_string(desc_.d_text) + "], got " + shape_str(t.shape));
        Var x = g.add(token_embeddings, g.constant(w_.pos_emb));
        x = encoder_block(g, x, w_.enc1);
        x = encoder_block(g, x, w_.enc2);
        return g.layernorm_rows(x, g.constant(w_.enc_ln_g), g.constant(w_.enc_ln_b));
    }

    Var predict_eps(Graph& g, Var z_t, int t, const ConditionPairVars& cond,
                    AttentionProbe* probe) const override {
        const Tensor& z = g.value(z_t);
        if (z.shape != std::vector<int>{desc_.latent_shape[0], desc_.latent_shape[1], desc_.latent_shape[2]})
            throw input_error("predict_eps: latent shape " + shape_str(z.shape));
        if (t < 0 || t >= desc_.total_steps)
            throw input_error("predict_eps: t=" + std::to_string(t) + " outside [0," +
                              std::to_string(desc_.total_steps) + ")");
        check_condition(g.value(cond.k_condition), "k_condition");
        check_condition(g.value(cond.v_condition), "v_condition");

        const int c1 = kC1, c2 = kC2;
        Var temb = timestep_embedding(g, t);  // [1, d_temb]
        Var temb1 = g.reshape(g.add_rowvec(g.matmul(temb, g.constant(w_.temb1_w)), g.constant(w_.temb1_b)), {c1});
        Var temb2 = g.reshape(g.add_rowvec(g.matmul(temb, g.constant(w_.temb2_w)), g.constant(w_.temb2_b)), {c2});

        // trunk (condition-independent)
        Var pix = g.rows_from_channels(z_t, desc_.latent_shape[0], 8, 8);  // [64, zc]
        Var f1 = g.gelu(g.add_rowvec(g.add_rowvec(g.matmul(pix, g.constant(w_.stem_w)), g.constant(w_.stem_b)), temb1));
        Var f2 = g.gelu(g.add_rowvec(g.add_rowvec(g.matmul(g.avgpool2x2(f1, 8, 8), g.constant(w_.down_w)),
                                                  g.constant(w_.down_b)), temb2));

        // cross-attention branches, accumulated into the output path
        Var a1 = cross_attention(g, f1, cond, w_.xattn1, probe);
        Var a2 = cross_attention(g, f2, cond, w_.xattn2, probe);
        Var a2_up = g.add_rowvec(g.matmul(g.upsample2x(a2, 4, 4), g.constant(w_.up_w)), g.constant(w_.up_b));

        Var h = g.add(g.add(f1, a1), a2_up);
        Var out = g.add_rowvec(g.matmul(g.layernorm_rows(h, g.constant(w_.head_ln_g), g.constant(w_.head_ln_b)),
                                        g.constant(w_.head_w)),
                               g.constant(w_.head_b));
        return g.channels_from_rows(out, 8, 8, desc_.latent_shape[0]);
    }

    std::vector<Tensor> reference_attention_maps(const AttentionProbe& probe,
                                                 const Tensor& reference_condition) const override {
        probe.require_nonempty();
        check_condition(reference_condition, "reference condition");
        const CrossAttnWeights* layer_w[] = {&w_.xattn1, &w_.xattn2};
        if (probe.layer_count() != 2) throw input_error("toy backend captures exactly 2 layers");
        std::vector<Tensor> maps;
        for (int li = 0; li < probe.layer_count(); ++li) {
            const LayerCapture& cap = probe.layer(li);
            const CrossAttnWeights& cw = *layer_w[li];
            if (cap.q_heads.empty()) throw input_error("probe layer missing captured queries");
            Tensor layer_map({cw.heads * cap.n_queries, desc_.seq_len});
            for (int h = 0; h < cw.heads; ++h) {
                Tensor k({desc_.seq_len, cw.head_dim});
                kernels::matmul_nn(reference_condition.ptr(), cw.wk[static_cast<size_t>(h)].ptr(), k.ptr(),
                                   desc_.seq_len, desc_.d_cond, cw.head_dim);
                Tensor scores({cap.n_queries, desc_.seq_len});
                kernels::matmul_nt(cap.q_heads[static_cast<size_t>(h)].ptr(), k.ptr(), scores.ptr(),
                                   cap.n_queries, cw.head_dim, desc_.seq_len);
                kernels::scale(scores.ptr(), cw.score_scale, scores.ptr(), scores.numel());
                Tensor probs({cap.n_queries, desc_.seq_len});
                kernels::softmax_rows(scores.ptr(), probs.ptr(), cap.n_queries, desc_.seq_len, 0);
                std::copy(probs.data.begin(), probs.data.end(),
                          layer_map.data.begin() + static_cast<int64_t>(h) * cap.n_queries * desc_.seq_len);
            }
            maps.push_back(std::move(layer_map));
        }
        return maps;
    }

    Tensor vae_encode(const Tensor& image) const override {
        if (image.rank() != 3 || image.dim(0) != desc_.image_size || image.dim(1) != desc_.image_size ||
            image.dim(2) != 3)
            throw input_error("vae_encode: expected [" + std::to_string(desc_.image_size) + "," +
                              std::to_string(desc_.image_size) + ",3], got " + shape_str(image.shape));
        int n = static_cast<int>(desc_.latent_numel());
        Tensor x({n, 1});
        for (int64_t i = 0; i < image.numel(); ++i) x.data[static_cast<size_t>(i)] = image.data[static_cast<size_t>(i)];
        Tensor z({n, 1});
        kernels::matmul_nn(w_.vae_map.ptr(), x.ptr(), z.ptr(), n, n, 1);
        z.shape = {desc_.latent_shape[0], desc_.latent_shape[1], desc_.latent_shape[2]};
        return z;
    }

    Tensor vae_decode(const Tensor& latent) const override {
        if (latent.numel() != desc_.latent_numel())
            throw input_error("vae_decode: latent shape " + shape_str(latent.shape));
        int n = static_cast<int>(desc_.latent_numel());
        Tensor x({n, 1});
        kernels::matmul_tn(w_.vae_map.ptr(), latent.ptr(), x.ptr(), n, n, 1);
        Tensor img({desc_.image_size, desc_.image_size, 3});
        for (int64_t i = 0; i < img.numel(); ++i) img.data[static_cast<size_t>(i)] = x.data[static_cast<size_t>(i)];
        return img;
    }

private:
    static constexpr int kC1 = 16;      // channels at 8x8
    static constexpr int kC2 = 32;      // channels at 4x4
    static constexpr int kTembDim = 16;

    BackendDescriptor desc_;
    ToyWeights w_;
    std::map<std::string, int> word_ids_;

    static std::vector<double> cosine_alpha_bar(int total) {
        std::vector<double> ab(static_cast<size_t>(total));
        const double s = 0.008;
        auto f = [&](double t) {
            double v = std::cos((t / total + s) / (1.0 + s) * 1.5707963267948966);
            return v * v;
        };
        double f0 = f(0.0);
        for (int t = 0; t < total; ++t) ab[static_cast<size_t>(t)] = std::max(f(static_cast<double>(t)) / f0, 1e-6);
        return ab;
    }

    int word_id(const std::string& word) const {
        std::string lower;
        for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (lower == "v*" ) return kPlaceholderV;
        if (lower.size() == 3 && lower[0] == 'v' && lower[2] == '*' && lower[1] >= '1' &&
            lower[1] < '1' + kMaxIdentities)
            return kPlaceholderBase + (lower[1] - '1');
        auto it = word_ids_.find(lower);
        if (it != word_ids_.end()) return it->second;
        return kWordBase + kNumWords + static_cast<int>(fnv1a64(lower) % kHashBuckets);
    }

    void check_condition(const Tensor& c, const char* who) const {
        if (c.rank() != 2 || c.rows() != desc_.seq_len || c.cols() != desc_.d_cond)
            throw input_error(std::string(who) + ": expected [" + std::to_string(desc_.seq_len) + "," +
                              std::to_string(desc_.d_cond) + "], got " + shape_str(c.shape));
        if (!c.all_finite()) throw input_error(std::string(who) + ": non-finite values");
    }

    Var encoder_block(Graph& g, Var x, const EncoderBlock& b) const {
        Var h = g.layernorm_rows(x, g.constant(b.ln1_g), g.constant(b.ln1_b));
        Var q = g.add_rowvec(g.matmul(h, g.constant(b.wq)), g.constant(b.bq));
        Var k = g.add_rowvec(g.matmul(h, g.constant(b.wk)), g.constant(b.bk));
        Var v = g.add_rowvec(g.matmul(h, g.constant(b.wv)), g.constant(b.bv));
        double scale = 1.0 / std::sqrt(static_cast<double>(desc_.d_text));
        Var probs = g.softmax_rows(g.scale(g.matmul_nt(q, k), scale), /*causal=*/true);
        Var ctx = g.add_rowvec(g.matmul(g.matmul(probs, v), g.constant(b.wo)), g.constant(b.bo));
        x = g.add(x, ctx);
        Var h2 = g.layernorm_rows(x, g.constant(b.ln2_g), g.constant(b.ln2_b));
        Var mid = g.gelu(g.add_rowvec(g.matmul(h2, g.constant(b.w1)), g.constant(b.b1)));
        Var out = g.add_rowvec(g.matmul(mid, g.constant(b.w2)), g.constant(b.b2));
        return g.add(x, out);
    }

    Var timestep_embedding(Graph& g, int t) const {
        Tensor sin_emb({1, kTembDim});
        for (int i = 0; i < kTembDim / 2; ++i) {
            double freq = std::exp(-std::log(10000.0) * (2.0 * i / kTembDim));
            sin_emb.at(0, 2 * i) = std::sin(t * freq);
            sin_emb.at(0, 2 * i + 1) = std::cos(t * freq);
        }
        return g.gelu(g.add_rowvec(g.matmul(g.constant(std::move(sin_emb)), g.constant(w_.temb_w)),
                                   g.constant(w_.temb_b)));
    }

    Var cross_attention(Graph& g, Var x, const ConditionPairVars& cond, const CrossAttnWeights& cw,
                        AttentionProbe* probe) const {
        Var xn = g.layernorm_rows(x, g.constant(cw.ln_g), g.constant(cw.ln_b));
        std::vector<Var> head_outs, head_probs;
        std::vector<Tensor> q_detached;
        for (int h = 0; h < cw.heads; ++h) {
            Var q = g.matmul(xn, g.constant(cw.wq[static_cast<size_t>(h)]));
            Var k = g.matmul(cond.k_condition, g.constant(cw.wk[static_cast<size_t>(h)]));
            Var v = g.matmul(cond.v_condition, g.constant(cw.wv[static_cast<size_t>(h)]));
            Var probs = g.softmax_rows(g.scale(g.matmul_nt(q, k), cw.score_scale));
            head_outs.push_back(g.matmul(probs, v));
            if (probe) {
                head_probs.push_back(probs);
                q_detached.push_back(g.value(q));
            }
        }
        if (probe) {
            LayerCapture cap;
            cap.probs = g.concat_rows(head_probs);
            cap.q_heads = std::move(q_detached);
            cap.heads = cw.heads;
            cap.n_queries = cw.spatial_h * cw.spatial_w;
            cap.seq_len = desc_.seq_len;
            cap.spatial_h = cw.spatial_h;
            cap.spatial_w = cw.spatial_w;
            cap.score_scale = cw.score_scale;
            probe->add_layer(std::move(cap));
        }
        Var ctx = g.concat_cols(head_outs);
        return g.add_rowvec(g.matmul(ctx, g.constant(cw.wo)), g.constant(cw.bo));
    }

    void init_weights(uint64_t seed) {
        Rng rng(seed + 0x5EF1);
        int d = desc_.d_text;
        int L = desc_.seq_len;
        int vocab = kWordBase + kNumWords + kHashBuckets;
        for (int i = 0; i < kNumWords; ++i) word_ids_[kVocabWords[i]] = kWordBase + i;

        w_.tok_emb = rng.gaussian_tensor({vocab, d}, 0.3);
        w_.pos_emb = rng.gaussian_tensor({L, d}, 0.1);
        auto init_enc = [&](EncoderBlock& b) {
            double ws = 1.0 / std::sqrt(static_cast<double>(d));
            b.ln1_g = Tensor({d}, 1.0);
            b.ln1_b = Tensor({d}, 0.0);
            b.wq = rng.gaussian_tensor({d, d}, ws);
            b.bq = Tensor({d}, 0.0);
            b.wk = rng.gaussian_tensor({d, d}, ws);
            b.bk = Tensor({d}, 0.0);
            b.wv = rng.gaussian_tensor({d, d}, ws);
            b.bv = Tensor({d}, 0.0);
            b.wo = rng.gaussian_tensor({d, d}, ws);
            b.bo = Tensor({d}, 0.0);
            b.ln2_g = Tensor({d}, 1.0);
            b.ln2_b = Tensor({d}, 0.0);
            b.w1 = rng.gaussian_tensor({d, 4 * d}, ws);
            b.b1 = Tensor({4 * d}, 0.0);
            b.w2 = rng.gaussian_tensor({4 * d, d}, 0.5 * ws);
            b.b2 = Tensor({d}, 0.0);
        };
        init_enc(w_.enc1);
        init_enc(w_.enc2);
        w_.enc_ln_g = Tensor({d}, 1.0);
        w_.enc_ln_b = Tensor({d}, 0.0);

        int zc = desc_.latent_shape[0];
        w_.stem_w = rng.gaussian_tensor({zc, kC1}, 0.5);
        w_.stem_b = Tensor({kC1}, 0.0);
        w_.temb_w = rng.gaussian_tensor({kTembDim, kTembDim}, 0.25);
        w_.temb_b = Tensor({kTembDim}, 0.0);
        w_.temb1_w = rng.gaussian_tensor({kTembDim, kC1}, 0.25);
        w_.temb1_b = Tensor({kC1}, 0.0);
        w_.temb2_w = rng.gaussian_tensor({kTembDim, kC2}, 0.25);
        w_.temb2_b = Tensor({kC2}, 0.0);
        w_.down_w = rng.gaussian_tensor({kC1, kC2}, 0.25);
        w_.down_b = Tensor({kC2}, 0.0);

        auto init_xattn = [&](CrossAttnWeights& cw, int channels, int sh, int sw) {
            cw.channels = channels;
            cw.heads = desc_.head_count;
            cw.head_dim = channels / cw.heads;
            cw.spatial_h = sh;
            cw.spatial_w = sw;
            cw.score_scale = 1.0 / std::sqrt(static_cast<double>(cw.head_dim));
            cw.ln_g = Tensor({channels}, 1.0);
            cw.ln_b = Tensor({channels}, 0.0);
            double qs = 1.0 / std::sqrt(static_cast<double>(channels));
            double ks = 1.0 / std::sqrt(static_cast<double>(desc_.d_cond));
            for (int h = 0; h < cw.heads; ++h) {
                cw.wq.push_back(rng.gaussian_tensor({channels, cw.head_dim}, qs));
                cw.wk.push_back(rng.gaussian_tensor({desc_.d_cond, cw.head_dim}, ks));
                cw.wv.push_back(rng.gaussian_tensor({desc_.d_cond, cw.head_dim}, ks));
            }
            cw.wo = rng.gaussian_tensor({channels, channels}, qs);
            cw.bo = Tensor({channels}, 0.0);
        };
        init_xattn(w_.xattn1, kC1, 8, 8);
        init_xattn(w_.xattn2, kC2, 4, 4);

        w_.up_w = rng.gaussian_tensor({kC2, kC1}, 0.25);
        w_.up_b = Tensor({kC1}, 0.0);
        w_.head_ln_g = Tensor({kC1}, 1.0);
        w_.head_ln_b = Tensor({kC1}, 0.0);
        w_.head_w = rng.gaussian_tensor({kC1, zc}, 0.5);
        w_.head_b = Tensor({zc}, 0.0);

        // orthogonal VAE map via modified Gram-Schmidt on a seeded Gaussian
        int n = static_cast<int>(desc_.latent_numel());
        Tensor m = rng.gaussian_tensor({n, n}, 1.0);
        for (int col = 0; col < n; ++col) {
            for (int prev = 0; prev < col; ++prev) {
                double dot = 0.0;
                for (int r = 0; r < n; ++r) dot += m.at(r, col) * m.at(r, prev);
                for (int r = 0; r < n; ++r) m.at(r, col) -= dot * m.at(r, prev);
            }
            double norm = 0.0;
            for (int r = 0; r < n; ++r) norm += m.at(r, col) * m.at(r, col);
            norm = std::sqrt(norm);
            for (int r = 0; r < n; ++r) m.at(r, col) /= norm;
        }
        w_.vae_map = std::move(m);
    }
};

}  // namespace

std::unique_ptr<Backend> make_toy_backend(const ToyBackendOptions& opts) {
    return std::make_unique<ToyBackend>(opts);
}

}  // namespace sefi
