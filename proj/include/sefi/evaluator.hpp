#ifndef SEFI_EVALUATOR_HPP
#define SEFI_EVALUATOR_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sefi/checkpoint.hpp"
#include "sefi/tensor.hpp"

namespace sefi {

// Pluggable scoring backends. Real CLIP / face-embedding / detector models
// are external; the stub suite is deterministic pixel arithmetic so the
// gating logic stays testable offline.
struct ScorerSuite {
    std::function<double(const Tensor& image, const std::string& prompt)> prompt_scorer;
    std::function<double(const Tensor& image, const Tensor& reference)> id_scorer;
    std::function<bool(const Tensor& image)> face_detector;

    // prompt: mean pixel intensity; id: 1 - mean |image - reference|;
    // detect: mean intensity >= 0.05
    static ScorerSuite stub();
};

// 0 when the prompt score is strictly below the threshold, else the id score
double id_prompt_score(double prompt_score, double id_score, double threshold);

struct MetricsReport {
    double prompt_mean = 0.0;
    double id_mean = 0.0;
    double detect_rate = 0.0;
    double id_prompt_mean = 0.0;
    double threshold = 0.23;
    int n_images = 0;

    nlohmann::json to_json() const;
};

MetricsReport evaluate(const std::vector<std::pair<Tensor, std::string>>& images_with_prompts,
                       const Tensor& reference_face, const ScorerSuite& suite, double threshold);

struct EvalItem {
    std::string image_path;
    std::string prompt;
};

// JSON lines, one {"image": ..., "prompt": ...} object per line
std::vector<EvalItem> load_manifest(const std::string& path);

// (trainable, added): materialized token parameters vs total expander size
std::pair<int64_t, int64_t> count_parameters(const ExpanderParams& params);
std::pair<int64_t, int64_t> count_parameters(const Checkpoint& ckpt);

}  // namespace sefi

#endif
