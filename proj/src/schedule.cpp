#include "sefi/schedule.hpp"

#include <algorithm>
#include <string>

#include "sefi/errors.hpp"

namespace sefi {

StageSchedule StageSchedule::make(int total_steps, int n_stages) {
    if (total_steps < 1 || n_stages < 1 || n_stages > total_steps)
        throw config_error("StageSchedule: need 1 <= n_stages <= total_steps, got " +
                           std::to_string(n_stages) + "/" + std::to_string(total_steps));
    StageSchedule s;
    s.total_steps = total_steps;
    s.n_stages = n_stages;
    s.boundaries.resize(static_cast<size_t>(n_stages) + 1);
    for (int i = 0; i <= n_stages; ++i)
        s.boundaries[static_cast<size_t>(i)] =
            static_cast<int>(static_cast<long long>(i) * total_steps / n_stages);
    return s;
}

int stage_of(const StageSchedule& s, int t) {
    if (t < 0 || t >= s.total_steps)
        throw input_error("stage_of: t=" + std::to_string(t) + " outside [0," +
                          std::to_string(s.total_steps) + ")");
    auto it = std::upper_bound(s.boundaries.begin(), s.boundaries.end(), t);
    return static_cast<int>(it - s.boundaries.begin()) - 1;
}

int stage_of_sampling_step(const StageSchedule& s, int ddim_step, int ddim_total,
                           const std::vector<int>& timestep_map) {
    if (static_cast<int>(timestep_map.size()) != ddim_total)
        throw input_error("stage_of_sampling_step: map length != ddim_total");
    if (ddim_step < 0 || ddim_step >= ddim_total)
        throw input_error("stage_of_sampling_step: step " + std::to_string(ddim_step) +
                          " outside [0," + std::to_string(ddim_total) + ")");
    return stage_of(s, timestep_map[static_cast<size_t>(ddim_step)]);
}

std::vector<int> ddim_timestep_map(int total_steps, int ddim_steps) {
    if (ddim_steps < 1 || ddim_steps > total_steps)
        throw input_error("ddim_timestep_map: need 1 <= steps <= total_steps");
    int stride = total_steps / ddim_steps;
    std::vector<int> map(static_cast<size_t>(ddim_steps));
    for (int i = 0; i < ddim_steps; ++i) map[static_cast<size_t>(i)] = i * stride;
    return map;
}

}  // namespace sefi
