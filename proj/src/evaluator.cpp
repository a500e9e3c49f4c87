#include "sefi/evaluator.hpp"

#include <cmath>
#include <fstream>

#include "sefi/errors.hpp"

namespace sefi {

ScorerSuite ScorerSuite::stub() {
    ScorerSuite s;
    s.prompt_scorer = [](const Tensor& image, const std::string&) {
        double m = 0.0;
        for (double v : image.data) m += v;
        return image.numel() > 0 ? m / static_cast<double>(image.numel()) : 0.0;
    };
    s.id_scorer = [](const Tensor& image, const Tensor& reference) {
        if (!image.same_shape(reference)) throw input_error("stub id scorer: image/reference shape mismatch");
        double m = 0.0;
        for (int64_t i = 0; i < image.numel(); ++i)
            m += std::fabs(image.data[static_cast<size_t>(i)] - reference.data[static_cast<size_t>(i)]);
        return 1.0 - m / static_cast<double>(image.numel());
    };
    s.face_detector = [](const Tensor& image) {
        double m = 0.0;
        for (double v : image.data) m += v;
        return m / static_cast<double>(image.numel()) >= 0.05;
    };
    return s;
}

double id_prompt_score(double prompt_score, double id_score, double threshold) {
    return prompt_score < threshold ? 0.0 : id_score;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["prompt_mean"] = prompt_mean;
    j["id_mean"] = id_mean;
    j["detect_rate"] = detect_rate;
    j["id_prompt_mean"] = id_prompt_mean;
    j["threshold"] = threshold;
    j["n_images"] = n_images;
    return j;
}

MetricsReport evaluate(const std::vector<std::pair<Tensor, std::string>>& images_with_prompts,
                       const Tensor& reference_face, const ScorerSuite& suite, double threshold) {
    if (images_with_prompts.empty()) throw input_error("evaluate: empty image set");
    MetricsReport r;
    r.threshold = threshold;
    r.n_images = static_cast<int>(images_with_prompts.size());
    double sum_prompt = 0.0, sum_id = 0.0, sum_gated = 0.0;
    int detected = 0;
    for (const auto& [image, prompt] : images_with_prompts) {
        double ps = suite.prompt_scorer(image, prompt);
        bool face = suite.face_detector(image);
        // undetected faces contribute id score 0
        double is = face ? suite.id_scorer(image, reference_face) : 0.0;
        if (face) ++detected;
        sum_prompt += ps;
        sum_id += is;
        sum_gated += id_prompt_score(ps, is, threshold);
    }
    double n = static_cast<double>(r.n_images);
    r.prompt_mean = sum_prompt / n;
    r.id_mean = sum_id / n;
    r.detect_rate = detected / n;
    r.id_prompt_mean = sum_gated / n;
    return r;
}

std::vector<EvalItem> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open manifest: " + path);
    std::vector<EvalItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("image") || !j.contains("prompt"))
            throw input_error("manifest line " + std::to_string(line_no) +
                              ": expected {\"image\": ..., \"prompt\": ...}");
        items.push_back({j["image"].get<std::string>(), j["prompt"].get<std::string>()});
    }
    if (items.empty()) throw input_error("manifest has no entries: " + path);
    return items;
}

std::pair<int64_t, int64_t> count_parameters(const ExpanderParams& params) {
    int64_t trainable = static_cast<int64_t>(2) * params.n_pairs * params.d_text;
    return {trainable, params.parameter_count()};
}

std::pair<int64_t, int64_t> count_parameters(const Checkpoint& ckpt) {
    return count_parameters(ckpt.params);
}

}  // namespace sefi
