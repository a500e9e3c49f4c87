#ifndef SEFI_CONFIG_HPP
#define SEFI_CONFIG_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sefi/backend.hpp"
#include "sefi/trainer.hpp"

namespace sefi {

struct BackendConfig {
    std::string name = "toy";  // toy | sd14-adapter
    uint64_t seed = 0;
    int d_text = 16;    // toy only
    int seq_len = 8;    // toy only
    std::string weights_dir;  // sd14-adapter; SEFI_WEIGHTS_DIR fallback
};

struct SampleConfig {
    int steps = 50;
    double guidance = 7.5;
    uint64_t seed = 0;
    std::string prompt = "a photo of the face of V*";
};

struct AblateConfig {
    std::string mode = "add";  // add | substitute
    std::vector<int> counts;   // empty -> 0..2*n_pairs
    uint64_t seed = 0;
    int steps = 50;
    double guidance = 7.5;
    std::string prompt = "a photo of the face of V*";
};

struct EvalConfig {
    std::string manifest;
    std::string reference;
    double threshold = 0.23;
};

// Whole-run configuration, parsed strictly: unknown keys anywhere are a
// config error. Flags override scalars after parsing.
struct RunConfig {
    BackendConfig backend;
    TrainConfig train;
    SampleConfig sample;
    AblateConfig ablate;
    EvalConfig eval;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg);

}  // namespace sefi

#endif
