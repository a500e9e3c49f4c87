#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sefi/attention.hpp"
#include "sefi/checkpoint.hpp"
#include "sefi/config.hpp"
#include "sefi/errors.hpp"
#include "sefi/evaluator.hpp"
#include "sefi/image.hpp"
#include "sefi/sampler.hpp"
#include "sefi/trainer.hpp"

namespace fs = std::filesystem;
using namespace sefi;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string backend_override;
    std::optional<uint64_t> seed_override;
};

RunConfig load_run_config(const CommonFlags& flags) {
    RunConfig cfg = flags.config_path.empty() ? RunConfig{} : RunConfig::from_file(flags.config_path);
    if (!flags.backend_override.empty()) cfg.backend.name = flags.backend_override;
    if (flags.seed_override) {
        cfg.train.rng_seed = *flags.seed_override;
        cfg.sample.seed = *flags.seed_override;
        cfg.ablate.seed = *flags.seed_override;
    }
    return cfg;
}

std::string hash_hex(const std::string& path) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64_file(path));
    return buf;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write: " + path);
    os << j.dump(2) << "\n";
}

Tensor load_image_resized(const std::string& path, int size) {
    Tensor img = load_image(path);
    return resize_bilinear_image(img, size, size);
}

std::vector<ExpandedTokenSet> token_sets_from_checkpoints(const std::vector<Checkpoint>& ckpts,
                                                          const Backend& backend) {
    std::vector<ExpandedTokenSet> sets;
    for (const Checkpoint& c : ckpts) {
        if (c.d_text != backend.descriptor().d_text)
            throw config_error("checkpoint d_text " + std::to_string(c.d_text) + " != backend d_text " +
                               std::to_string(backend.descriptor().d_text));
        sets.push_back(c.tokens);
    }
    return sets;
}

int cmd_train(const CommonFlags& flags, const std::string& image_path, const std::string& out_dir,
              std::optional<int> epochs_override) {
    RunConfig cfg = load_run_config(flags);
    if (epochs_override) cfg.train.epochs = *epochs_override;
    auto backend = std::shared_ptr<Backend>(make_backend(cfg.backend));
    Tensor face = load_image_resized(image_path, backend->descriptor().image_size);
    fs::create_directories(out_dir);
    TrainResult result = train(cfg.train, backend, face, out_dir + "/losses.csv");
    save_checkpoint(result.checkpoint, out_dir + "/checkpoint.sefi");
    std::printf("trained %d steps, final loss %.6g (kv %.6g, attention %.6g)\n", cfg.train.epochs,
                result.losses.back().total, result.losses.back().kv, result.losses.back().attention);
    std::printf("wrote %s/checkpoint.sefi and %s/losses.csv\n", out_dir.c_str(), out_dir.c_str());
    return 0;
}

SampleRequest build_request(const Backend& backend, const std::vector<Checkpoint>& ckpts,
                            const std::string& prompt, int steps, double guidance, uint64_t seed) {
    SampleRequest req;
    req.prompt = build_prompt(prompt, backend);
    req.token_sets = token_sets_from_checkpoints(ckpts, backend);
    if (req.prompt.identity_count() != static_cast<int>(req.token_sets.size()))
        throw config_error("prompt declares " + std::to_string(req.prompt.identity_count()) +
                           " placeholder(s) but " + std::to_string(req.token_sets.size()) +
                           " checkpoint(s) were given");
    int n_pairs = req.token_sets.front().n_pairs();
    for (const ExpandedTokenSet& s : req.token_sets)
        if (s.n_pairs() != n_pairs) throw config_error("checkpoints disagree on n_pairs");
    req.steps = steps;
    req.guidance = guidance;
    req.schedule = StageSchedule::make(backend.descriptor().total_steps, n_pairs);
    req.seed = seed;
    return req;
}

nlohmann::json sample_sidecar(const std::string& prompt, uint64_t seed, int steps, double guidance,
                              const std::vector<std::string>& ckpt_paths) {
    nlohmann::json j;
    j["prompt"] = prompt;
    j["seed"] = seed;
    j["steps"] = steps;
    j["guidance"] = guidance;
    nlohmann::json hashes = nlohmann::json::array();
    for (const std::string& p : ckpt_paths) hashes.push_back(hash_hex(p));
    j["checkpoint_fnv1a64"] = hashes;
    return j;
}

int cmd_sample(const CommonFlags& flags, const std::vector<std::string>& ckpt_paths,
               const std::string& prompt_flag, const std::string& out_path,
               std::optional<int> steps_flag, std::optional<double> guidance_flag) {
    RunConfig cfg = load_run_config(flags);
    auto backend = std::shared_ptr<Backend>(make_backend(cfg.backend));
    std::vector<Checkpoint> ckpts;
    for (const std::string& p : ckpt_paths) ckpts.push_back(load_checkpoint(p));
    std::string prompt = prompt_flag.empty() ? cfg.sample.prompt : prompt_flag;
    int steps = steps_flag.value_or(cfg.sample.steps);
    double guidance = guidance_flag.value_or(cfg.sample.guidance);
    SampleRequest req = build_request(*backend, ckpts, prompt, steps, guidance, cfg.sample.seed);
    SampleResult res = ddim_sample(*backend, req);
    if (out_path.find('/') != std::string::npos)
        fs::create_directories(fs::path(out_path).parent_path());
    write_png_rgb(out_path, res.image);
    write_json_file(out_path + ".json", sample_sidecar(prompt, cfg.sample.seed, steps, guidance, ckpt_paths));
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& base_path, const std::string& other_path,
               const std::string& mode_flag, std::vector<int> counts, const std::string& out_dir) {
    RunConfig cfg = load_run_config(flags);
    if (!mode_flag.empty()) cfg.ablate.mode = mode_flag;
    if (!counts.empty()) cfg.ablate.counts = counts;
    auto backend = std::shared_ptr<Backend>(make_backend(cfg.backend));
    Checkpoint base = load_checkpoint(base_path);
    ProgressiveMode mode;
    if (cfg.ablate.mode == "add") {
        mode = ProgressiveMode::add;
    } else if (cfg.ablate.mode == "substitute") {
        mode = ProgressiveMode::substitute;
    } else {
        throw config_error("ablate mode must be add or substitute");
    }
    std::optional<Checkpoint> other;
    if (mode == ProgressiveMode::substitute) {
        if (other_path.empty()) throw config_error("substitute mode needs --substitute <checkpoint>");
        other = load_checkpoint(other_path);
    }
    int slots = 2 * base.n_pairs;
    std::vector<int> grid = cfg.ablate.counts;
    if (grid.empty())
        for (int i = 0; i <= slots; ++i) grid.push_back(i);

    IDToken initializer{base.initializer_vector, base.initializer_word};
    fs::create_directories(out_dir);
    nlohmann::json index = nlohmann::json::array();
    for (int count : grid) {
        ExpandedTokenSet tokens = progressive_schedule(mode, count, base.tokens, initializer,
                                                       other ? &other->tokens : nullptr);
        Checkpoint staged = base;
        staged.tokens = tokens;
        SampleRequest req = build_request(*backend, {staged}, cfg.ablate.prompt, cfg.ablate.steps,
                                          cfg.ablate.guidance, cfg.ablate.seed);
        SampleResult res = ddim_sample(*backend, req);
        char name[32];
        std::snprintf(name, sizeof(name), "count_%02d.png", count);
        write_png_rgb(out_dir + "/" + name, res.image);
        nlohmann::json entry;
        entry["count"] = count;
        entry["image"] = name;
        index.push_back(entry);
    }
    nlohmann::json doc;
    doc["mode"] = cfg.ablate.mode;
    doc["prompt"] = cfg.ablate.prompt;
    doc["seed"] = cfg.ablate.seed;
    doc["steps"] = cfg.ablate.steps;
    doc["guidance"] = cfg.ablate.guidance;
    doc["images"] = index;
    write_json_file(out_dir + "/index.json", doc);
    std::printf("wrote %zu image(s) and index.json to %s\n", grid.size(), out_dir.c_str());
    return 0;
}

int cmd_visualize_attn(const CommonFlags& flags, const std::string& ckpt_path, const std::string& prompt_flag,
                       std::vector<int> timesteps, const std::string& out_dir) {
    RunConfig cfg = load_run_config(flags);
    auto backend = std::shared_ptr<Backend>(make_backend(cfg.backend));
    const BackendDescriptor& d = backend->descriptor();
    if (timesteps.empty()) throw config_error("visualize-attn needs at least one --timestep");
    for (int t : timesteps)
        if (t < 0 || t >= d.total_steps)
            throw config_error("timestep " + std::to_string(t) + " outside [0," +
                               std::to_string(d.total_steps) + ")");
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::string prompt = prompt_flag.empty() ? cfg.sample.prompt : prompt_flag;
    PromptSpec spec = build_prompt(prompt, *backend);
    if (spec.identity_count() != 1) throw config_error("visualize-attn expects a single-identity prompt");
    StageSchedule schedule = StageSchedule::make(d.total_steps, ckpt.n_pairs);

    fs::create_directories(out_dir);
    Rng rng(cfg.sample.seed);
    int files = 0;
    for (int t : timesteps) {
        Tensor z = rng.gaussian_tensor({d.latent_shape[0], d.latent_shape[1], d.latent_shape[2]}, 1.0);
        Graph g;
        std::vector<TokenSetVars> sets = {token_set_constants(g, ckpt.tokens)};
        int stage = pair_index_for_timestep(schedule, t);
        ConditionPairVars cond = conditions_for_stage(g, sets, spec, stage, *backend);
        AttentionProbe probe;
        backend->predict_eps(g, g.constant(z), t, cond, &probe);
        AttentionMapStack stack;
        stack.maps = g.value(re2_vars(g, probe, d.canonical_attn_size));
        stack.layer_count = probe.layer_count();
        files += static_cast<int>(write_attention_heatmaps(stack, t, out_dir).size());
    }
    std::printf("wrote %d heatmap(s) to %s\n", files, out_dir.c_str());
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& manifest_flag, const std::string& reference_flag,
             std::optional<double> threshold_flag, const std::string& out_dir) {
    RunConfig cfg = load_run_config(flags);
    std::string manifest_path = manifest_flag.empty() ? cfg.eval.manifest : manifest_flag;
    std::string reference_path = reference_flag.empty() ? cfg.eval.reference : reference_flag;
    double threshold = threshold_flag.value_or(cfg.eval.threshold);
    if (manifest_path.empty()) throw config_error("eval needs a manifest (flag or config)");
    if (reference_path.empty()) throw config_error("eval needs a reference image (flag or config)");

    std::vector<EvalItem> items = load_manifest(manifest_path);
    Tensor reference = load_image(reference_path);
    std::vector<std::pair<Tensor, std::string>> scored;
    for (const EvalItem& item : items) {
        Tensor img = load_image(item.image_path);
        if (!img.same_shape(reference)) img = resize_bilinear_image(img, reference.dim(0), reference.dim(1));
        scored.emplace_back(std::move(img), item.prompt);
    }
    MetricsReport report = evaluate(scored, reference, ScorerSuite::stub(), threshold);
    fs::create_directories(out_dir);
    write_json_file(out_dir + "/metrics.json", report.to_json());
    std::printf("prompt %.4f | id %.4f | detect %.1f%% | id(prompt) %.4f over %d image(s)\n",
                report.prompt_mean, report.id_mean, 100.0 * report.detect_rate, report.id_prompt_mean,
                report.n_images);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"per-stage K/V token identity embedding trainer and sampler"};
    app.require_subcommand(1);

    CommonFlags flags;
    uint64_t seed_value = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "JSON run configuration");
        sub->add_option("--backend", flags.backend_override, "backend: toy | sd14-adapter");
        sub->add_option("--seed", seed_value, "seed override");
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "optimize an identity embedding from one face image");
    std::string image_path, out_dir = "out";
    std::optional<int> epochs_override;
    int epochs_value = 0;
    add_common(train_cmd);
    train_cmd->add_option("--image", image_path, "input face image (PNG/JPEG)")->required();
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--epochs", epochs_value, "override train.epochs");

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "DDIM sampling with per-stage tokens");
    std::vector<std::string> ckpt_paths;
    std::string prompt_flag, out_path = "sample.png";
    std::optional<int> steps_flag;
    std::optional<double> guidance_flag;
    int steps_value = 0;
    double guidance_value = 0.0;
    add_common(sample_cmd);
    sample_cmd->add_option("--checkpoint", ckpt_paths, "checkpoint(s), one per identity")->required();
    sample_cmd->add_option("--prompt", prompt_flag, "prompt with V* (or V1*, V2*) placeholder");
    sample_cmd->add_option("--out", out_path, "output PNG path");
    sample_cmd->add_option("--steps", steps_value, "DDIM steps");
    sample_cmd->add_option("--guidance", guidance_value, "guidance scale");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "progressive add/substitute token grids");
    std::string base_ckpt, other_ckpt, mode_flag, ablate_out = "ablate";
    std::vector<int> counts;
    add_common(ablate_cmd);
    ablate_cmd->add_option("--checkpoint", base_ckpt, "base checkpoint")->required();
    ablate_cmd->add_option("--substitute", other_ckpt, "second checkpoint (substitute mode)");
    ablate_cmd->add_option("--mode", mode_flag, "add | substitute");
    ablate_cmd->add_option("--counts", counts, "token counts to render (default 0..2*n_pairs)");
    ablate_cmd->add_option("--out", ablate_out, "output directory");

    // visualize-attn
    auto* viz_cmd = app.add_subcommand("visualize-attn", "per-token cross-attention heatmaps");
    std::string viz_ckpt, viz_prompt, viz_out = "attn";
    std::vector<int> timesteps;
    add_common(viz_cmd);
    viz_cmd->add_option("--checkpoint", viz_ckpt, "checkpoint")->required();
    viz_cmd->add_option("--prompt", viz_prompt, "prompt (defaults to sample.prompt)");
    viz_cmd->add_option("--timesteps", timesteps, "diffusion timesteps to probe")->required();
    viz_cmd->add_option("--out", viz_out, "output directory");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score generated images with the metric suite");
    std::string manifest_flag, reference_flag, eval_out = "eval";
    std::optional<double> threshold_flag;
    double threshold_value = 0.0;
    add_common(eval_cmd);
    eval_cmd->add_option("--manifest", manifest_flag, "JSONL manifest of {image, prompt}");
    eval_cmd->add_option("--reference", reference_flag, "reference face image");
    eval_cmd->add_option("--threshold", threshold_value, "prompt-score gate (default 0.23)");
    eval_cmd->add_option("--out", eval_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // usage problems are exit 2
    }

    // flag presence decides the overrides; CLI11 assigns bound variables at parse end
    for (CLI::App* sub : app.get_subcommands())
        if (sub->count("--seed")) flags.seed_override = seed_value;
    if (train_cmd->count("--epochs")) epochs_override = epochs_value;
    if (sample_cmd->count("--steps")) steps_flag = steps_value;
    if (sample_cmd->count("--guidance")) guidance_flag = guidance_value;
    if (eval_cmd->count("--threshold")) threshold_flag = threshold_value;

    try {
        if (*train_cmd) return cmd_train(flags, image_path, out_dir, epochs_override);
        if (*sample_cmd) return cmd_sample(flags, ckpt_paths, prompt_flag, out_path, steps_flag, guidance_flag);
        if (*ablate_cmd) return cmd_ablate(flags, base_ckpt, other_ckpt, mode_flag, counts, ablate_out);
        if (*viz_cmd) return cmd_visualize_attn(flags, viz_ckpt, viz_prompt, timesteps, viz_out);
        if (*eval_cmd) return cmd_eval(flags, manifest_flag, reference_flag, threshold_flag, eval_out);
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
