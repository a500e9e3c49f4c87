#include "sefi/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "sefi/attention.hpp"
#include "sefi/conditioning.hpp"
#include "sefi/errors.hpp"

namespace sefi {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw config_error("unknown config key \"" + it.key() + "\" in " + where);
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

BackendConfig parse_backend(const nlohmann::json& j) {
    BackendConfig c;
    if (j.is_string()) {
        c.name = j.get<std::string>();
        return c;
    }
    if (!j.is_object()) throw config_error("backend must be a string or an object");
    reject_unknown(j, {"name", "seed", "d_text", "seq_len", "weights_dir"}, "backend");
    get_if(j, "name", c.name);
    get_if(j, "seed", c.seed);
    get_if(j, "d_text", c.d_text);
    get_if(j, "seq_len", c.seq_len);
    get_if(j, "weights_dir", c.weights_dir);
    return c;
}

TrainConfig parse_train(const nlohmann::json& j) {
    TrainConfig c;
    reject_unknown(j,
                   {"lr", "lambda_attention", "epochs", "n_pairs", "loss_option", "rng_seed", "color_jitter",
                    "hflip_p", "scale_range", "image_size", "initializer_word", "templates", "templates_file"},
                   "train");
    get_if(j, "lr", c.lr);
    get_if(j, "lambda_attention", c.lambda_attention);
    get_if(j, "epochs", c.epochs);
    get_if(j, "n_pairs", c.n_pairs);
    if (j.contains("loss_option")) c.loss_option = loss_option_from_int(j.at("loss_option").get<int>());
    get_if(j, "rng_seed", c.rng_seed);
    get_if(j, "color_jitter", c.augment.color_jitter);
    get_if(j, "hflip_p", c.augment.hflip_p);
    if (j.contains("scale_range")) {
        auto r = j.at("scale_range").get<std::vector<double>>();
        if (r.size() != 2) throw config_error("train.scale_range must be [min, max]");
        c.augment.scale_min = r[0];
        c.augment.scale_max = r[1];
    }
    get_if(j, "image_size", c.image_size);
    get_if(j, "initializer_word", c.initializer_word);
    get_if(j, "templates", c.templates);
    if (j.contains("templates_file")) {
        if (!c.templates.empty()) throw config_error("train: give templates or templates_file, not both");
        c.templates = load_template_file(j.at("templates_file").get<std::string>());
    }
    return c;
}

SampleConfig parse_sample(const nlohmann::json& j) {
    SampleConfig c;
    reject_unknown(j, {"steps", "guidance", "seed", "prompt"}, "sample");
    get_if(j, "steps", c.steps);
    get_if(j, "guidance", c.guidance);
    get_if(j, "seed", c.seed);
    get_if(j, "prompt", c.prompt);
    return c;
}

AblateConfig parse_ablate(const nlohmann::json& j) {
    AblateConfig c;
    reject_unknown(j, {"mode", "counts", "seed", "steps", "guidance", "prompt"}, "ablate");
    get_if(j, "mode", c.mode);
    get_if(j, "counts", c.counts);
    get_if(j, "seed", c.seed);
    get_if(j, "steps", c.steps);
    get_if(j, "guidance", c.guidance);
    get_if(j, "prompt", c.prompt);
    if (c.mode != "add" && c.mode != "substitute")
        throw config_error("ablate.mode must be \"add\" or \"substitute\"");
    return c;
}

EvalConfig parse_eval(const nlohmann::json& j) {
    EvalConfig c;
    reject_unknown(j, {"manifest", "reference", "threshold"}, "eval");
    get_if(j, "manifest", c.manifest);
    get_if(j, "reference", c.reference);
    get_if(j, "threshold", c.threshold);
    return c;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw config_error("config root must be a JSON object");
    reject_unknown(j, {"backend", "train", "sample", "ablate", "eval"}, "config root");
    RunConfig c;
    if (j.contains("backend")) c.backend = parse_backend(j.at("backend"));
    if (j.contains("train")) c.train = parse_train(j.at("train"));
    if (j.contains("sample")) c.sample = parse_sample(j.at("sample"));
    if (j.contains("ablate")) c.ablate = parse_ablate(j.at("ablate"));
    if (j.contains("eval")) c.eval = parse_eval(j.at("eval"));
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw config_error("config is not valid JSON: " + path);
    return from_json(j);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg) {
    if (cfg.name == "toy") {
        ToyBackendOptions opts;
        opts.seed = cfg.seed;
        opts.d_text = cfg.d_text;
        opts.seq_len = cfg.seq_len;
        return make_toy_backend(opts);
    }
    if (cfg.name == "sd14-adapter") {
        std::string dir = cfg.weights_dir;
        if (dir.empty()) {
            const char* env = std::getenv("SEFI_WEIGHTS_DIR");
            if (env) dir = env;
        }
        return make_sd14_adapter(dir);
    }
    throw config_error("unknown backend \"" + cfg.name + "\" (expected toy or sd14-adapter)");
}

}  // namespace sefi
