#ifndef SEFI_SCHEDULE_HPP
#define SEFI_SCHEDULE_HPP

#include <vector>

namespace sefi {

// Equal partition of [0, total_steps) into n_stages contiguous stages.
// Widths differ by at most one step when n_stages does not divide total.
struct StageSchedule {
    int total_steps = 1000;
    int n_stages = 5;
    std::vector<int> boundaries;  // n_stages+1, boundaries[0]=0, back()=total_steps

    static StageSchedule make(int total_steps, int n_stages);
};

// index i with boundaries[i] <= t < boundaries[i+1]; increases with t
int stage_of(const StageSchedule& s, int t);

int stage_of_sampling_step(const StageSchedule& s, int ddim_step, int ddim_total,
                           const std::vector<int>& timestep_map);

// ascending uniform-stride grid {0, stride, 2*stride, ...}, stride = total/steps
std::vector<int> ddim_timestep_map(int total_steps, int ddim_steps);

}  // namespace sefi

#endif
