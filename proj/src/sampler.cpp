#include "sefi/sampler.hpp"

#include <cmath>

#include "sefi/errors.hpp"
#include "sefi/rng.hpp"

namespace sefi {

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double guidance) {
    if (guidance == 1.0) return eps_cond;
    if (guidance == 0.0) return eps_uncond;
    if (!eps_uncond.same_shape(eps_cond)) throw input_error("cfg_combine: shape mismatch");
    Tensor out(eps_cond.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        double u = eps_uncond.data[static_cast<size_t>(i)];
        out.data[static_cast<size_t>(i)] = u + guidance * (eps_cond.data[static_cast<size_t>(i)] - u);
    }
    return out;
}

SampleResult ddim_sample_from(const Backend& backend, const SampleRequest& request,
                              const Tensor& init_noise, const StepObserver& observer) {
    const BackendDescriptor& d = backend.descriptor();
    if (request.steps < 1) throw input_error("ddim_sample: steps must be >= 1");
    if (request.guidance < 0.0) throw input_error("ddim_sample: guidance must be >= 0");
    if (request.prompt.identity_count() != static_cast<int>(request.token_sets.size()))
        throw input_error("ddim_sample: prompt declares " + std::to_string(request.prompt.identity_count()) +
                          " identities but " + std::to_string(request.token_sets.size()) + " token sets given");
    if (init_noise.numel() != d.latent_numel()) throw input_error("ddim_sample: init noise shape mismatch");
    int n_pairs = request.token_sets.empty() ? 0 : request.token_sets.front().n_pairs();
    for (const ExpandedTokenSet& s : request.token_sets)
        if (s.n_pairs() != n_pairs) throw input_error("ddim_sample: token sets disagree on n_pairs");
    if (request.schedule.n_stages != n_pairs)
        throw input_error("ddim_sample: schedule has " + std::to_string(request.schedule.n_stages) +
                          " stages but token sets carry " + std::to_string(n_pairs) + " pairs");

    // all conditions are frozen during sampling; encode each stage pair once
    std::vector<std::pair<Tensor, Tensor>> stage_conditions(static_cast<size_t>(n_pairs));
    {
        Graph g;
        std::vector<TokenSetVars> sets;
        for (const ExpandedTokenSet& s : request.token_sets) sets.push_back(token_set_constants(g, s));
        for (int stage = 0; stage < n_pairs; ++stage) {
            ConditionPairVars pair = conditions_for_stage(g, sets, request.prompt, stage, backend);
            stage_conditions[static_cast<size_t>(stage)] = {g.value(pair.k_condition), g.value(pair.v_condition)};
        }
    }
    Tensor uncond_condition;
    {
        Graph g;
        PromptSpec empty = build_plain_prompt("", backend);
        uncond_condition = g.value(encode_with_slot(g, empty, backend, {}));
    }

    std::vector<int> tmap = ddim_timestep_map(d.total_steps, request.steps);

    SampleResult result;
    result.timestep_map = tmap;
    Tensor z = init_noise;
    z.shape = {d.latent_shape[0], d.latent_shape[1], d.latent_shape[2]};
    result.trajectory.push_back(z);

    for (int k = request.steps - 1; k >= 0; --k) {
        int t = tmap[static_cast<size_t>(k)];
        int stage = pair_index_for_timestep(request.schedule, t);
        const auto& [ck, cv] = stage_conditions[static_cast<size_t>(stage)];

        Tensor eps_cond, eps_uncond;
        if (request.guidance != 0.0) {
            Graph g;
            AttentionProbe probe;
            ConditionPairVars cond;
            cond.k_condition = g.constant(ck);
            cond.v_condition = g.constant(cv);
            cond.stage = stage;
            Var eps = backend.predict_eps(g, g.constant(z), t, cond, observer ? &probe : nullptr);
            eps_cond = g.value(eps);
            if (observer) observer(request.steps - 1 - k, t, probe, g);
        }
        if (request.guidance != 1.0) {
            Graph g;
            Var eps = backend.predict_eps_single(g, g.constant(z), t, g.constant(uncond_condition), nullptr);
            eps_uncond = g.value(eps);
        }
        Tensor eps_hat = cfg_combine(request.guidance == 1.0 ? eps_cond : eps_uncond, eps_cond, request.guidance);

        double ab = d.alpha_bar[static_cast<size_t>(t)];
        double ab_prev = (k > 0) ? d.alpha_bar[static_cast<size_t>(tmap[static_cast<size_t>(k - 1)])] : 1.0;
        double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        double sap = std::sqrt(ab_prev), snp = std::sqrt(1.0 - ab_prev);
        Tensor next(z.shape);
        for (int64_t i = 0; i < z.numel(); ++i) {
            double x0 = (z.data[static_cast<size_t>(i)] - sn * eps_hat.data[static_cast<size_t>(i)]) / sa;
            next.data[static_cast<size_t>(i)] = sap * x0 + snp * eps_hat.data[static_cast<size_t>(i)];
        }
        z = std::move(next);
        result.trajectory.push_back(z);
    }

    result.final_latent = z;
    result.image = backend.vae_decode(z);
    return result;
}

SampleResult ddim_sample(const Backend& backend, const SampleRequest& request, const StepObserver& observer) {
    const BackendDescriptor& d = backend.descriptor();
    Rng rng(request.seed);
    Tensor noise = rng.gaussian_tensor({d.latent_shape[0], d.latent_shape[1], d.latent_shape[2]}, 1.0);
    return ddim_sample_from(backend, request, noise, observer);
}

}  // namespace sefi
