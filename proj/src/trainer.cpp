#include "sefi/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sefi/errors.hpp"
#include "sefi/image.hpp"

namespace sefi {

std::vector<std::string> TrainConfig::default_templates() {
    return {
        "a photo of a face of V*",
        "a photo of a rendering of a face of V*",
        "a close-up photo of the face of V*",
        "a photo of the cool face of V*",
        "a rendition of the face of V*",
        "an illustration of a face of V*",
        "a depiction of a face of V*",
    };
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw config_error("train.lr must be > 0");
    if (lambda_attention < 0.0) throw config_error("train.lambda_attention must be >= 0");
    if (epochs < 1) throw config_error("train.epochs must be >= 1");
    if (n_pairs < 1) throw config_error("train.n_pairs must be >= 1");
    if (augment.hflip_p < 0.0 || augment.hflip_p > 1.0) throw config_error("train.hflip_p must be in [0,1]");
    if (!(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max && augment.scale_max <= 1.0))
        throw config_error("train.scale_range must satisfy 0 < min <= max <= 1");
    if (image_size < 1) throw config_error("train.image_size must be >= 1");
    if (initializer_word.empty()) throw config_error("train.initializer_word must be non-empty");
}

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

Tensor augment(const Tensor& image, const AugmentConfig& cfg, int image_size, Rng& rng,
               AugmentRecord* record) {
    if (image.numel() == 0) throw input_error("augment: empty image");
    if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) != image.dim(1))
        throw input_error("augment: expected square [s,s,3] image, got " + shape_str(image.shape));
    if (image.dim(0) != image_size)
        throw input_error("augment: image side " + std::to_string(image.dim(0)) + " != image_size " +
                          std::to_string(image_size));

    // fixed draw order regardless of toggles, so seeds align across configs
    AugmentRecord rec;
    rec.brightness = rng.uniform(0.9, 1.1);
    rec.contrast = rng.uniform(0.9, 1.1);
    rec.saturation = rng.uniform(0.9, 1.1);
    rec.flipped = rng.bernoulli(cfg.hflip_p);
    rec.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    if (record) *record = rec;

    int s = image_size;
    Tensor out = image;

    if (cfg.color_jitter) {
        double mean = 0.0;
        for (double v : out.data) mean += v;
        mean /= static_cast<double>(out.numel());
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                double* px = out.ptr() + (static_cast<int64_t>(y) * s + x) * 3;
                double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
                for (int c = 0; c < 3; ++c) {
                    double v = px[c] * rec.brightness;
                    v = (v - mean) * rec.contrast + mean;
                    v = gray + (v - gray) * rec.saturation;
                    px[c] = clamp01(v);
                }
            }
    }

    if (rec.flipped) {
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s / 2; ++x)
                for (int c = 0; c < 3; ++c)
                    std::swap(out.data[(static_cast<size_t>(y) * s + x) * 3 + c],
                              out.data[(static_cast<size_t>(y) * s + (s - 1 - x)) * 3 + c]);
    }

    int ns = std::max(1, static_cast<int>(std::lround(rec.scale * s)));
    if (ns != s) {
        Tensor shrunk = resize_bilinear_image(out, ns, ns);
        Tensor canvas({s, s, 3}, 0.0);
        int off = (s - ns) / 2;
        for (int y = 0; y < ns; ++y)
            for (int x = 0; x < ns; ++x)
                for (int c = 0; c < 3; ++c)
                    canvas.data[((static_cast<size_t>(y + off)) * s + (x + off)) * 3 + c] =
                        shrunk.data[(static_cast<size_t>(y) * ns + x) * 3 + c];
        out = std::move(canvas);
    }
    return out;
}

Trainer::Trainer(const TrainConfig& config, std::shared_ptr<Backend> backend)
    : config_(config), backend_(std::move(backend)), rng_(config.rng_seed) {
    config_.validate();
    const BackendDescriptor& d = backend_->descriptor();
    if (config_.image_size != d.image_size)
        throw config_error("train.image_size " + std::to_string(config_.image_size) +
                           " != backend image size " + std::to_string(d.image_size));
    schedule_ = StageSchedule::make(d.total_steps, config_.n_pairs);
    params_ = init_expander(d.d_text, config_.n_pairs, config_.rng_seed);

    std::vector<int> word_ids = backend_->tokenize(config_.initializer_word);
    if (word_ids.size() != 1)
        throw config_error("initializer word must be a single token: \"" + config_.initializer_word + "\"");
    id_token_.vector = backend_->token_embedding(word_ids[0]);
    id_token_.source_word = config_.initializer_word;

    std::vector<std::string> templates =
        config_.templates.empty() ? TrainConfig::default_templates() : config_.templates;
    config_.templates = templates;
    for (const std::string& tmpl : templates) {
        TemplateContext ctx;
        ctx.prompt = build_prompt(tmpl, *backend_);
        if (ctx.prompt.identity_count() != 1)
            throw config_error("training templates must declare exactly one identity: \"" + tmpl + "\"");
        // general-concept anchor: same template with the slot held by the
        // frozen initializer token
        ctx.reference_condition = encode_with_slot(ctx.prompt, *backend_, {id_token_.vector});
        template_ctx_.push_back(std::move(ctx));
    }

    for (const auto& [name, t] : params_.named_tensors())
        adam_.push_back({Tensor(t->shape, 0.0), Tensor(t->shape, 0.0)});
}

void Trainer::set_face_image(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != config_.image_size || image.dim(1) != config_.image_size ||
        image.dim(2) != 3)
        throw input_error("face image must be [" + std::to_string(config_.image_size) + "," +
                          std::to_string(config_.image_size) + ",3], got " + shape_str(image.shape));
    for (double v : image.data)
        if (!(v >= 0.0 && v <= 1.0)) throw input_error("face image values must lie in [0,1]");
    face_image_ = image;
}

void adam_update(Tensor& param, const Tensor& grad, AdamParamState& state, int64_t step, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (!param.same_shape(grad)) throw input_error("adam_update: param/grad shape mismatch");
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (int64_t j = 0; j < param.numel(); ++j) {
        size_t k = static_cast<size_t>(j);
        double& m = state.m.data[k];
        double& v = state.v.data[k];
        m = beta1 * m + (1.0 - beta1) * grad.data[k];
        v = beta2 * v + (1.0 - beta2) * grad.data[k] * grad.data[k];
        param.data[k] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    }
}

void Trainer::adam_step(const std::vector<Tensor>& grads) {
    adam_t_ += 1;
    auto named = params_.named_tensors();
    for (size_t i = 0; i < named.size(); ++i)
        adam_update(*named[i].second, grads[i], adam_[i], adam_t_, config_.lr);
}

StepLosses Trainer::training_step() {
    if (face_image_.numel() == 0) throw input_error("training_step: face image not set");
    const BackendDescriptor& d = backend_->descriptor();

    // draw order: template, augment record, timestep, noise
    int tmpl_idx = rng_.uniform_int(static_cast<int>(template_ctx_.size()));
    Tensor img = augment(face_image_, config_.augment, config_.image_size, rng_);
    Tensor z0 = backend_->vae_encode(img);
    int t = rng_.uniform_int(d.total_steps);
    Tensor noise = rng_.gaussian_tensor(z0.shape, 1.0);
    Tensor zt = add_noise(d, z0, t, noise);
    int stage = pair_index_for_timestep(schedule_, t);

    const TemplateContext& ctx = template_ctx_[static_cast<size_t>(tmpl_idx)];

    Graph g;
    ExpanderVars vars = expander_leaves(g, params_);
    auto [k_tokens, v_tokens] = expand_vars(g, vars, params_, id_token_);
    TokenSetVars set{k_tokens, v_tokens, config_.n_pairs};
    ConditionPairVars cond = conditions_for_stage(g, {set}, ctx.prompt, stage, *backend_);

    AttentionProbe probe;
    Var eps_hat = backend_->predict_eps(g, g.constant(zt), t, cond, &probe);
    Var loss_kv = g.mse(eps_hat, g.constant(noise));

    Var a_t = re2_vars(g, probe, d.canonical_attn_size);
    AttentionMapStack a_r = re2_reference(
        probe, backend_->reference_attention_maps(probe, ctx.reference_condition), d.canonical_attn_size);
    Var loss_att = attention_loss_vars(g, a_t, a_r.maps, config_.loss_option,
                                       ctx.prompt.placeholder_positions[0], ctx.prompt.prompt_len);

    Var loss_total = g.add(loss_kv, g.scale(loss_att, config_.lambda_attention));

    StepLosses out;
    out.total = g.value(loss_total).data[0];
    out.kv = g.value(loss_kv).data[0];
    out.attention = g.value(loss_att).data[0];
    out.t = t;
    out.stage = stage;
    if (!std::isfinite(out.total)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "non-finite loss at step %lld: t=%d stage=%d kv=%g attention=%g",
                      static_cast<long long>(step_count_ + 1), t, stage, out.kv, out.attention);
        throw input_error(buf);
    }

    g.backward(loss_total);
    std::vector<Tensor> grads;
    for (Var v : vars.all()) grads.push_back(g.grad(v));
    adam_step(grads);

    step_count_ += 1;
    history_.push_back(out);
    return out;
}

Checkpoint Trainer::make_checkpoint() const {
    Checkpoint c;
    c.backend_name = backend_->descriptor().name;
    c.d_text = params_.d_text;
    c.n_pairs = params_.n_pairs;
    c.params = params_;
    c.tokens = expand(params_, id_token_);
    c.initializer_word = id_token_.source_word;
    c.initializer_vector = id_token_.vector;
    c.step_count = step_count_;

    nlohmann::json tc;
    tc["lr"] = config_.lr;
    tc["lambda_attention"] = config_.lambda_attention;
    tc["epochs"] = config_.epochs;
    tc["n_pairs"] = config_.n_pairs;
    tc["loss_option"] = static_cast<int>(config_.loss_option);
    tc["rng_seed"] = config_.rng_seed;
    tc["image_size"] = config_.image_size;
    tc["color_jitter"] = config_.augment.color_jitter;
    tc["hflip_p"] = config_.augment.hflip_p;
    tc["scale_range"] = {config_.augment.scale_min, config_.augment.scale_max};
    tc["initializer_word"] = config_.initializer_word;
    tc["templates"] = config_.templates;
    c.train_config = tc;

    nlohmann::json ls;
    ls["steps"] = history_.size();
    if (!history_.empty()) {
        double min_total = history_.front().total;
        for (const StepLosses& s : history_) min_total = std::min(min_total, s.total);
        ls["first_total"] = history_.front().total;
        ls["final_total"] = history_.back().total;
        ls["final_kv"] = history_.back().kv;
        ls["final_attention"] = history_.back().attention;
        ls["min_total"] = min_total;
    }
    c.loss_summary = ls;
    return c;
}

void write_loss_csv(const std::string& path, const std::vector<StepLosses>& losses) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write loss csv: " + path);
    os << "step,total,kv,attention\n";
    char buf[160];
    for (size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i + 1, losses[i].total, losses[i].kv,
                      losses[i].attention);
        os << buf;
    }
}

TrainResult train(const TrainConfig& config, std::shared_ptr<Backend> backend, const Tensor& face_image,
                  const std::string& csv_path) {
    Trainer trainer(config, std::move(backend));
    trainer.set_face_image(face_image);
    TrainResult result;
    result.losses.reserve(static_cast<size_t>(config.epochs));
    for (int step = 0; step < config.epochs; ++step) result.losses.push_back(trainer.training_step());
    if (!csv_path.empty()) write_loss_csv(csv_path, result.losses);
    result.checkpoint = trainer.make_checkpoint();
    return result;
}

}  // namespace sefi
