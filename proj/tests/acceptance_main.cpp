// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line each. Exit code 0 only when all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sefi/attention.hpp"
#include "sefi/backend.hpp"
#include "sefi/checkpoint.hpp"
#include "sefi/conditioning.hpp"
#include "sefi/errors.hpp"
#include "sefi/evaluator.hpp"
#include "sefi/expander.hpp"
#include "sefi/image.hpp"
#include "sefi/sampler.hpp"
#include "sefi/schedule.hpp"
#include "sefi/trainer.hpp"
#include "test_support.hpp"

using namespace sefi;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (detail.tellp() > 0) detail << "; ";
            detail << what;
        }
    }
};

struct ToyTrainSetup {
    std::shared_ptr<Backend> backend;
    TrainConfig config;
    Tensor face;

    explicit ToyTrainSetup(uint64_t seed = 0) {
        backend = std::shared_ptr<Backend>(make_toy_backend({}));
        config.image_size = 8;
        config.templates = {"a face of V*", "a photo of V*"};
        config.rng_seed = seed;
        face = test::make_face_image(8);
    }
};

double brute_force_mse_slices(const Tensor& a, const Tensor& b, int l0, int l1) {
    int H = a.dim(0), L = a.dim(1), S = a.dim(2);
    double acc = 0.0;
    int64_t count = 0;
    for (int h = 0; h < H; ++h)
        for (int l = l0; l < l1; ++l)
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    int64_t i = ((static_cast<int64_t>(h) * L + l) * S + y) * S + x;
                    double d = a.data[static_cast<size_t>(i)] - b.data[static_cast<size_t>(i)];
                    acc += d * d;
                    ++count;
                }
    return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------- criteria

void criterion_attention_loss_oracle(Check& c) {
    const int H = 2, L = 8, S = 8;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Tensor a = test::rand_uniform_tensor({H, L, S, S}, 10000 + seed);
        Tensor b = test::rand_uniform_tensor({H, L, S, S}, 20000 + seed);
        int slot = static_cast<int>(seed % L);
        int plen = 1 + static_cast<int>(seed % L);
        AttentionMapStack sa{a, 1, AttentionMapStack::Source::reference};
        AttentionMapStack sb{b, 1, AttentionMapStack::Source::target};

        double full = attention_loss(sa, sb, LossOption::full, slot, plen);
        double slot_only = attention_loss(sa, sb, LossOption::slot_only, slot, plen);
        double prompt_len = attention_loss(sa, sb, LossOption::prompt_length, slot, plen);
        c.expect(std::fabs(full - brute_force_mse_slices(a, b, 0, L)) < 1e-10, "option #3 oracle");
        c.expect(std::fabs(slot_only - brute_force_mse_slices(a, b, slot, slot + 1)) < 1e-10,
                 "option #1 oracle");
        c.expect(std::fabs(prompt_len - brute_force_mse_slices(a, b, 0, plen)) < 1e-10, "option #2 oracle");
        c.expect(attention_loss(sa, sa, LossOption::full, slot, plen) == 0.0, "loss(A,A) != 0");
        if (!c.ok) return;
    }
}

void criterion_alg1_pipeline(Check& c) {
    auto backend = make_toy_backend({});
    const BackendDescriptor& d = backend->descriptor();
    Graph g;
    Var k_leaf = g.leaf(test::rand_tensor({d.seq_len, d.d_cond}, 31, 0.7));
    Var v_leaf = g.leaf(test::rand_tensor({d.seq_len, d.d_cond}, 32, 0.7));
    ConditionPairVars cond{k_leaf, v_leaf, 0};
    AttentionProbe probe;
    backend->predict_eps(g, g.constant(test::rand_tensor({4, 8, 8}, 33)), 700, cond, &probe);

    c.expect(probe.layer_count() == d.cross_attention_layers, "layer capture count");
    for (const LayerCapture& cap : probe.layers()) {
        const Tensor& m = g.value(cap.probs);
        for (int r = 0; r < m.rows(); ++r) {
            double s = 0;
            for (int col = 0; col < m.cols(); ++col) s += m.at(r, col);
            c.expect(std::fabs(s - 1.0) < 1e-5, "raw softmax row sum");
        }
    }

    Var a_t = re2_vars(g, probe, d.canonical_attn_size);
    c.expect(g.value(a_t).shape == std::vector<int>{2, 8, 8, 8}, "re2 stack shape");

    Tensor ref_cond = test::rand_tensor({d.seq_len, d.d_cond}, 34, 0.7);
    AttentionMapStack a_r = re2_reference(probe, backend->reference_attention_maps(probe, ref_cond),
                                          d.canonical_attn_size);
    Var a_r_var = g.constant(a_r.maps);
    Var loss = attention_loss_vars(g, a_t, a_r_var, LossOption::full, 4, 6);
    g.backward(loss);

    for (double v : g.grad(a_r_var).data) c.expect(v == 0.0, "reference-side gradient accumulator");
    double kmag = 0;
    for (double v : g.grad(k_leaf).data) kmag += std::fabs(v);
    c.expect(kmag > 0.0, "target-side gradient missing");
}

void criterion_kv_separation(Check& c) {
    auto backend = make_toy_backend({});
    int hits = 0;
    for (uint64_t trial = 0; trial < 20; ++trial) {
        Tensor k = test::rand_tensor({8, 16}, 40 + trial, 0.7);
        Tensor v = test::rand_tensor({8, 16}, 60 + trial, 0.7);
        Tensor z = test::rand_tensor({4, 8, 8}, 80 + trial);
        int t = static_cast<int>((17 * trial + 3) % 1000);
        auto run = [&](const Tensor& kc, const Tensor& vc, std::vector<Tensor>& maps) {
            Graph g;
            AttentionProbe probe;
            ConditionPairVars cond{g.constant(kc), g.constant(vc), 0};
            Tensor out = g.value(backend->predict_eps(g, g.constant(z), t, cond, &probe));
            for (const LayerCapture& cap : probe.layers()) maps.push_back(g.value(cap.probs));
            return out;
        };
        std::vector<Tensor> m0, mv, mk;
        Tensor base = run(k, v, m0);
        Tensor v2 = v;
        v2.data[5] += 0.25;
        Tensor out_v = run(k, v2, mv);
        Tensor k2 = k;
        k2.data[9] += 0.25;
        run(k2, v, mk);

        bool maps_stable = true;
        for (size_t i = 0; i < m0.size(); ++i) maps_stable = maps_stable && bit_equal(m0[i], mv[i]);
        bool maps_move = false;
        for (size_t i = 0; i < m0.size(); ++i) maps_move = maps_move || !bit_equal(m0[i], mk[i]);
        if (maps_stable && !bit_equal(base, out_v) && maps_move) ++hits;
    }
    c.expect(hits == 20, "separation held in " + std::to_string(hits) + "/20 trials");
}

void criterion_degenerate_split(Check& c) {
    auto backend = make_toy_backend({});
    for (uint64_t trial = 0; trial < 20; ++trial) {
        Tensor cond = test::rand_tensor({8, 16}, 500 + trial, 0.7);
        Tensor z = test::rand_tensor({4, 8, 8}, 600 + trial);
        int t = static_cast<int>((41 * trial + 11) % 1000);
        Graph g1, g2;
        ConditionPairVars pair{g1.constant(cond), g1.constant(cond), 0};
        Tensor split = g1.value(backend->predict_eps(g1, g1.constant(z), t, pair, nullptr));
        Tensor single = g2.value(backend->predict_eps_single(g2, g2.constant(z), t, g2.constant(cond)));
        c.expect(bit_equal(split, single), "trial " + std::to_string(trial));
        if (!c.ok) return;
    }
}

void criterion_gradient_checks(Check& c) {
    ToyTrainSetup setup(7);
    const BackendDescriptor& d = setup.backend->descriptor();

    // fixed step context
    Rng rng(123);
    Tensor z0 = setup.backend->vae_encode(setup.face);
    Tensor noise = rng.gaussian_tensor({4, 8, 8}, 1.0);
    int t = 512;
    Tensor zt = add_noise(d, z0, t, noise);
    StageSchedule sched = StageSchedule::make(d.total_steps, setup.config.n_pairs);
    int stage = pair_index_for_timestep(sched, t);
    PromptSpec prompt = build_prompt("a face of V*", *setup.backend);
    IDToken id_token{setup.backend->token_embedding(setup.backend->tokenize("person")[0]), "person"};
    Tensor ref_cond = encode_with_slot(prompt, *setup.backend, {id_token.vector});
    ExpanderParams params = init_expander(d.d_text, setup.config.n_pairs, 7);

    auto eval_loss = [&](const ExpanderParams& p, std::vector<Tensor>* grads) {
        Graph g;
        ExpanderVars vars = grads ? expander_leaves(g, p) : expander_constants(g, p);
        auto [ktok, vtok] = expand_vars(g, vars, p, id_token);
        TokenSetVars set{ktok, vtok, setup.config.n_pairs};
        ConditionPairVars cond = conditions_for_stage(g, {set}, prompt, stage, *setup.backend);
        AttentionProbe probe;
        Var eps_hat = setup.backend->predict_eps(g, g.constant(zt), t, cond, &probe);
        Var l_kv = g.mse(eps_hat, g.constant(noise));
        Var a_t = re2_vars(g, probe, d.canonical_attn_size);
        AttentionMapStack a_r = re2_reference(
            probe, setup.backend->reference_attention_maps(probe, ref_cond), d.canonical_attn_size);
        Var l_att = attention_loss_vars(g, a_t, a_r.maps, LossOption::full,
                                        prompt.placeholder_positions[0], prompt.prompt_len);
        Var total = g.add(l_kv, g.scale(l_att, setup.config.lambda_attention));
        double out = g.value(total).data[0];
        if (grads) {
            g.backward(total);
            for (Var v : vars.all()) grads->push_back(g.grad(v));
        }
        return out;
    };

    std::vector<Tensor> grads;
    eval_loss(params, &grads);
    auto named = params.named_tensors();
    const double h = 1e-3;
    int checked = 0;
    for (size_t ti = 0; ti < named.size() && checked < 13; ti += 2) {
        Tensor* tp = named[ti].second;
        int64_t idx = (11 * static_cast<int64_t>(ti) + 5) % tp->numel();
        double orig = tp->data[static_cast<size_t>(idx)];
        tp->data[static_cast<size_t>(idx)] = orig + h;
        double lp = eval_loss(params, nullptr);
        tp->data[static_cast<size_t>(idx)] = orig - h;
        double lm = eval_loss(params, nullptr);
        tp->data[static_cast<size_t>(idx)] = orig;
        double fd = (lp - lm) / (2 * h);
        double an = grads[ti].data[static_cast<size_t>(idx)];
        double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8});
        c.expect(rel < 1e-3, named[ti].first + " rel err " + std::to_string(rel));
        ++checked;
    }
    c.expect(checked >= 10, "only " + std::to_string(checked) + " parameters sampled");

    // frozen initializer across 50 optimizer steps
    Trainer trainer(setup.config, setup.backend);
    trainer.set_face_image(setup.face);
    Tensor before = trainer.id_token().vector;
    for (int i = 0; i < 50; ++i) trainer.training_step();
    c.expect(bit_equal(before, trainer.id_token().vector), "initializer token changed");
}

void criterion_stage_schedule(Check& c) {
    StageSchedule s = StageSchedule::make(1000, 5);
    for (int t = 0; t < 1000; ++t) {
        if (stage_of(s, t) != t / 200) {
            c.expect(false, "stage_of(" + std::to_string(t) + ")");
            return;
        }
    }
    std::vector<int> map = ddim_timestep_map(1000, 50);
    for (int i = 0; i < 50; ++i) {
        int stage = stage_of_sampling_step(s, i, 50, map);
        int pair = pair_index_for_timestep(s, map[static_cast<size_t>(i)]);
        c.expect(stage >= 0 && stage < 5, "stage range");
        c.expect(pair >= 0 && pair < 5, "pair range");
    }
}

void criterion_ddim_oracle(Check& c) {
    test::LinearBackend backend(99);
    const BackendDescriptor& d = backend.descriptor();
    SampleRequest req;
    req.prompt = build_prompt("a face of V*", backend);
    IDToken tok{backend.token_embedding(backend.tokenize("person")[0]), "person"};
    req.token_sets = {expand(init_expander(d.d_text, 5, 3), tok)};
    req.steps = 50;
    req.guidance = 7.5;
    req.schedule = StageSchedule::make(d.total_steps, 5);
    Rng rng(41);
    Tensor z0 = rng.gaussian_tensor({4, 8, 8}, 1.0);
    SampleResult got = ddim_sample_from(backend, req, z0);

    const Tensor& a = backend.a_matrix();
    int n = static_cast<int>(d.latent_numel());
    std::vector<double> z(z0.data.begin(), z0.data.end());
    double max_err = 0.0;
    for (int k = req.steps - 1; k >= 0; --k) {
        int t = k * (d.total_steps / req.steps);
        double ab = d.alpha_bar[static_cast<size_t>(t)];
        double abp = k > 0 ? d.alpha_bar[static_cast<size_t>((k - 1) * (d.total_steps / req.steps))] : 1.0;
        double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        double sap = std::sqrt(abp), snp = std::sqrt(1.0 - abp);
        std::vector<double> eps(static_cast<size_t>(n), 0.0);
        for (int r = 0; r < n; ++r) {
            double acc = 0.0;
            for (int col = 0; col < n; ++col) acc += a.at(r, col) * z[static_cast<size_t>(col)];
            eps[static_cast<size_t>(r)] = acc;
        }
        for (int r = 0; r < n; ++r) {
            double x0 = (z[static_cast<size_t>(r)] - sn * eps[static_cast<size_t>(r)]) / sa;
            z[static_cast<size_t>(r)] = sap * x0 + snp * eps[static_cast<size_t>(r)];
        }
        const Tensor& traj = got.trajectory[static_cast<size_t>(req.steps - k)];
        for (int r = 0; r < n; ++r)
            max_err = std::max(max_err, std::fabs(z[static_cast<size_t>(r)] - traj.data[static_cast<size_t>(r)]));
    }
    c.expect(max_err < 1e-6, "trajectory max err " + std::to_string(max_err));

    Tensor u = test::rand_tensor({4, 8, 8}, 1);
    Tensor cd = test::rand_tensor({4, 8, 8}, 2);
    c.expect(bit_equal(cfg_combine(u, cd, 1.0), cd), "w=1 identity");
    c.expect(bit_equal(cfg_combine(u, cd, 0.0), u), "w=0 identity");
}

void criterion_loss_assembly(Check& c) {
    ToyTrainSetup setup(3);
    setup.config.epochs = 30;
    TrainResult r = train(setup.config, setup.backend, setup.face);
    for (const StepLosses& s : r.losses)
        c.expect(s.total == s.kv + 0.003 * s.attention, "assembly violated at some step");

    ToyTrainSetup zero(3);
    zero.config.epochs = 30;
    zero.config.lambda_attention = 0.0;
    TrainResult rz = train(zero.config, zero.backend, zero.face);
    for (const StepLosses& s : rz.losses) c.expect(s.total == s.kv, "lambda=0 curves diverge");
}

void criterion_training_smoke(Check& c) {
    ToyTrainSetup setup(0);
    setup.config.epochs = 200;
    std::string dir = test::fresh_dir("accept_smoke");
    TrainResult r = train(setup.config, setup.backend, setup.face, dir + "/a.csv");
    double first = 0, last = 0;
    for (int i = 0; i < 50; ++i) first += r.losses[static_cast<size_t>(i)].kv;
    for (int i = 150; i < 200; ++i) last += r.losses[static_cast<size_t>(i)].kv;
    c.expect(last / 50 < first / 50,
             "kv means first50=" + std::to_string(first / 50) + " last50=" + std::to_string(last / 50));

    ToyTrainSetup again(0);
    again.config.epochs = 200;
    train(again.config, again.backend, again.face, dir + "/b.csv");
    c.expect(test::read_file_bytes(dir + "/a.csv") == test::read_file_bytes(dir + "/b.csv"),
             "losses.csv not byte-identical");
}

void criterion_metric_gating(Check& c) {
    c.expect(id_prompt_score(0.2299, 0.9, 0.23) == 0.0, "below threshold");
    c.expect(id_prompt_score(0.23, 0.9, 0.23) == 0.9, "at threshold");
    c.expect(id_prompt_score(0.5, 0.7, 0.23) == 0.7, "above threshold");

    auto flat = [](double v) { return Tensor({4, 4, 3}, v); };
    std::vector<std::pair<Tensor, std::string>> items = {
        {flat(0.4), "a"}, {flat(0.1), "b"}, {flat(0.04), "c"}, {flat(0.8), "d"}};
    MetricsReport r = evaluate(items, flat(0.5), ScorerSuite::stub(), 0.23);
    c.expect(std::fabs(r.prompt_mean - 0.335) < 1e-12, "prompt_mean");
    c.expect(std::fabs(r.id_mean - 0.55) < 1e-12, "id_mean");
    c.expect(std::fabs(r.detect_rate - 0.75) < 1e-12, "detect_rate");
    c.expect(std::fabs(r.id_prompt_mean - 0.4) < 1e-12, "id_prompt_mean");

    auto [trainable, added] = count_parameters(init_expander(768, 5, 0));
    c.expect(trainable == 7680, "trainable = " + std::to_string(trainable));
    c.expect(added > 0, "added parameter count");
}

void criterion_augmentation_stats(Check& c) {
    Tensor img = test::make_face_image(8);
    AugmentConfig cfg;
    Rng rng(777);
    int flips = 0;
    const int n = 10000;
    bool scales_ok = true;
    for (int i = 0; i < n; ++i) {
        AugmentRecord rec;
        augment(img, cfg, 8, rng, &rec);
        flips += rec.flipped ? 1 : 0;
        scales_ok = scales_ok && rec.scale >= 0.1 && rec.scale <= 1.0;
    }
    double freq = static_cast<double>(flips) / n;
    c.expect(freq >= 0.485 && freq <= 0.515, "flip frequency " + std::to_string(freq));
    c.expect(scales_ok, "scale outside [0.1, 1.0]");
}

void criterion_checkpoint_roundtrip(Check& c) {
    ToyTrainSetup setup(21);
    setup.config.epochs = 5;
    TrainResult r = train(setup.config, setup.backend, setup.face);
    std::string dir = test::fresh_dir("accept_ckpt");
    std::string path = dir + "/c.sefi";
    save_checkpoint(r.checkpoint, path);
    Checkpoint loaded = load_checkpoint(path);

    IDToken tok_a{r.checkpoint.initializer_vector, r.checkpoint.initializer_word};
    IDToken tok_b{loaded.initializer_vector, loaded.initializer_word};
    ExpandedTokenSet a = expand(r.checkpoint.params, tok_a);
    ExpandedTokenSet b = expand(loaded.params, tok_b);
    c.expect(bit_equal(a.k_tokens, b.k_tokens) && bit_equal(a.v_tokens, b.v_tokens),
             "expand() outputs differ after round trip");

    // byte layout
    std::string bytes = test::read_file_bytes(path);
    c.expect(bytes.substr(0, 5) == "SEFI1", "magic");
    uint32_t len = static_cast<uint8_t>(bytes[5]) | (static_cast<uint8_t>(bytes[6]) << 8) |
                   (static_cast<uint8_t>(bytes[7]) << 16) |
                   (static_cast<uint32_t>(static_cast<uint8_t>(bytes[8])) << 24);
    nlohmann::json meta = nlohmann::json::parse(bytes.substr(9, len), nullptr, false);
    c.expect(!meta.is_discarded(), "metadata JSON");
    int64_t payload = 0;
    for (const auto& entry : meta["tensors"]) {
        int64_t count = 1;
        for (int dd : entry["shape"].get<std::vector<int>>()) count *= dd;
        payload += count * 8;
    }
    c.expect(static_cast<int64_t>(bytes.size()) == 9 + static_cast<int64_t>(len) + payload,
             "payload length per declared shapes");
}

void criterion_cli_end_to_end(Check& c) {
    std::string dir = test::fresh_dir("accept_cli");
    std::string config = dir + "/toy.json";
    {
        std::ofstream os(config);
        os << R"({
  "backend": {"name": "toy", "seed": 0},
  "train": {"epochs": 10, "image_size": 8, "rng_seed": 0,
            "templates": ["a face of V*", "a photo of V*"]},
  "sample": {"steps": 10, "guidance": 7.5, "seed": 3, "prompt": "a face of V*"},
  "ablate": {"mode": "add", "seed": 3, "steps": 10, "prompt": "a face of V*"}
})";
    }
    write_png_rgb(dir + "/face.png", test::make_face_image(16));

    auto cli = [&](const std::string& args) { return test::run_cli(args); };
    c.expect(cli("train --config " + config + " --image " + dir + "/face.png --out " + dir + "/a") == 0,
             "train A");
    c.expect(cli("train --seed 9 --config " + config + " --image " + dir + "/face.png --out " + dir + "/b") == 0,
             "train B");
    c.expect(cli("sample --config " + config + " --checkpoint " + dir + "/a/checkpoint.sefi --out " + dir +
                 "/s.png") == 0,
             "sample");
    c.expect(cli("visualize-attn --config " + config + " --checkpoint " + dir +
                 "/a/checkpoint.sefi --timesteps 500 --out " + dir + "/attn") == 0,
             "visualize-attn");
    c.expect(fs::exists(dir + "/attn/attn_t500_tok0.png"), "heatmap file");

    // eval over the sampled image with the stub suite
    {
        std::ofstream os(dir + "/m.jsonl");
        os << R"({"image": ")" << dir << R"(/s.png", "prompt": "a face of V*"})" << "\n";
    }
    c.expect(cli("eval --config " + config + " --manifest " + dir + "/m.jsonl --reference " + dir +
                 "/face.png --out " + dir + "/metrics") == 0,
             "eval");
    c.expect(fs::exists(dir + "/metrics/metrics.json"), "metrics.json");

    // progressive substitution at full count reproduces the donor sample
    c.expect(cli("ablate --config " + config + " --checkpoint " + dir + "/a/checkpoint.sefi --substitute " +
                 dir + "/b/checkpoint.sefi --mode substitute --counts 10 --out " + dir + "/sub") == 0,
             "ablate substitute");
    c.expect(cli("sample --config " + config + " --checkpoint " + dir + "/b/checkpoint.sefi --out " + dir +
                 "/direct.png") == 0,
             "sample donor");
    c.expect(test::read_file_bytes(dir + "/sub/count_10.png") == test::read_file_bytes(dir + "/direct.png"),
             "substitute(10) != direct donor sample");
}

struct Criterion {
    int id;
    const char* name;
    std::function<void(Check&)> run;
    double budget_seconds;  // 0 = no stated bound
};

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "attention-loss oracle (brute force, options #1/#2/#3)", criterion_attention_loss_oracle, 5.0},
        {2, "capture/re2/loss pipeline shapes and gradient isolation", criterion_alg1_pipeline, 10.0},
        {3, "K/V separation on captured maps", criterion_kv_separation, 0.0},
        {4, "degenerate split equals single-condition pass", criterion_degenerate_split, 0.0},
        {5, "finite-difference gradients; frozen initializer", criterion_gradient_checks, 60.0},
        {6, "stage schedule exhaustive + DDIM grid validity", criterion_stage_schedule, 0.0},
        {7, "DDIM closed-form oracle; guidance identities", criterion_ddim_oracle, 0.0},
        {8, "total = kv + 0.003*attention at machine precision", criterion_loss_assembly, 0.0},
        {9, "200-step training smoke; byte-identical loss curves", criterion_training_smoke, 0.0},
        {10, "metric gating truth table, fixture, 7680 trainables", criterion_metric_gating, 0.0},
        {11, "augmentation statistics over 10k draws", criterion_augmentation_stats, 0.0},
        {12, "checkpoint round trip and container layout", criterion_checkpoint_roundtrip, 0.0},
        {13, "CLI end-to-end and substitution identity", criterion_cli_end_to_end, 120.0},
    };

    int failures = 0;
    for (const Criterion& cr : criteria) {
        Check check;
        auto start = std::chrono::steady_clock::now();
        try {
            cr.run(check);
        } catch (const std::exception& e) {
            check.expect(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (cr.budget_seconds > 0.0 && secs > cr.budget_seconds) {
            check.expect(false, "runtime " + std::to_string(secs) + "s over budget " +
                                    std::to_string(cr.budget_seconds) + "s");
        }
        std::string detail = check.detail.str();
        std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", check.ok ? "PASS" : "FAIL", cr.id, cr.name,
                    secs, detail.empty() ? "" : " -- ", detail.c_str());
        if (!check.ok) ++failures;
    }
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
