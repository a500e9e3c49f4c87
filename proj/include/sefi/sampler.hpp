#ifndef SEFI_SAMPLER_HPP
#define SEFI_SAMPLER_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "sefi/backend.hpp"
#include "sefi/conditioning.hpp"
#include "sefi/expander.hpp"
#include "sefi/schedule.hpp"

namespace sefi {

struct SampleRequest {
    PromptSpec prompt;
    std::vector<ExpandedTokenSet> token_sets;  // one per identity in the prompt
    int steps = 50;
    double guidance = 7.5;
    StageSchedule schedule;
    uint64_t seed = 0;
};

struct SampleResult {
    std::vector<Tensor> trajectory;  // z at every step, starting from the init noise
    Tensor final_latent;
    Tensor image;                    // vae-decoded, [h,w,3]
    std::vector<int> timestep_map;   // ascending grid used
};

// eps_uncond + w (eps_cond - eps_uncond); w==0 and w==1 return the
// respective input unchanged so the degenerate guidances are exact
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double guidance);

// invoked after each conditional forward pass when a probe observer is wanted
using StepObserver = std::function<void(int step, int t, const AttentionProbe& probe, Graph& g)>;

SampleResult ddim_sample(const Backend& backend, const SampleRequest& request,
                         const StepObserver& observer = nullptr);
// deterministic variant with caller-provided starting noise
SampleResult ddim_sample_from(const Backend& backend, const SampleRequest& request,
                              const Tensor& init_noise, const StepObserver& observer = nullptr);

}  // namespace sefi

#endif
