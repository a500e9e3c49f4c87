#ifndef SEFI_TRAINER_HPP
#define SEFI_TRAINER_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sefi/attention.hpp"
#include "sefi/backend.hpp"
#include "sefi/checkpoint.hpp"
#include "sefi/conditioning.hpp"
#include "sefi/expander.hpp"
#include "sefi/rng.hpp"
#include "sefi/schedule.hpp"

namespace sefi {

struct AugmentConfig {
    bool color_jitter = true;
    double hflip_p = 0.5;
    double scale_min = 0.1;
    double scale_max = 1.0;
};

struct TrainConfig {
    double lr = 0.005;
    double lambda_attention = 0.003;
    int epochs = 1000;  // one optimization step per epoch on the single image
    int n_pairs = 5;    // stage count follows: one K-V pair per stage
    LossOption loss_option = LossOption::full;
    uint64_t rng_seed = 0;
    AugmentConfig augment;
    int image_size = 512;
    std::string initializer_word = "person";
    std::vector<std::string> templates;  // empty -> default seven

    void validate() const;
    static std::vector<std::string> default_templates();
};

struct AugmentRecord {
    double brightness = 1.0, contrast = 1.0, saturation = 1.0;
    bool flipped = false;
    double scale = 1.0;
};

// color jitter (+-10% factors), horizontal flip, random scale with center
// placement back onto the original canvas. Draw order: brightness, contrast,
// saturation, flip, scale.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, int image_size, Rng& rng,
               AugmentRecord* record = nullptr);

struct StepLosses {
    double total = 0.0, kv = 0.0, attention = 0.0;
    int t = -1, stage = -1;
};

// Adam with bias correction; beta=(0.9, 0.999), eps=1e-8, no weight decay.
// lr=0 leaves the parameter bit-identical while moment estimates advance.
struct AdamParamState {
    Tensor m, v;
};
void adam_update(Tensor& param, const Tensor& grad, AdamParamState& state, int64_t step, double lr);

class Trainer {
public:
    Trainer(const TrainConfig& config, std::shared_ptr<Backend> backend);

    StepLosses training_step();

    const ExpanderParams& params() const { return params_; }
    const IDToken& id_token() const { return id_token_; }
    const TrainConfig& config() const { return config_; }
    int64_t step_count() const { return step_count_; }

    void set_face_image(const Tensor& image);  // [image_size,image_size,3] in [0,1]

    Checkpoint make_checkpoint() const;

private:
    TrainConfig config_;
    std::shared_ptr<Backend> backend_;
    StageSchedule schedule_;
    ExpanderParams params_;
    IDToken id_token_;
    Tensor face_image_;
    Rng rng_;
    int64_t step_count_ = 0;
    std::vector<StepLosses> history_;

    struct TemplateContext {
        PromptSpec prompt;
        Tensor reference_condition;  // same template, slot pinned to the initializer token
    };
    std::vector<TemplateContext> template_ctx_;

    // one slot per expander tensor in declared order
    std::vector<AdamParamState> adam_;
    int64_t adam_t_ = 0;

    void adam_step(const std::vector<Tensor>& grads);
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepLosses> losses;
};

// full run: epochs steps, CSV written to csv_path if non-empty
TrainResult train(const TrainConfig& config, std::shared_ptr<Backend> backend, const Tensor& face_image,
                  const std::string& csv_path = "");

void write_loss_csv(const std::string& path, const std::vector<StepLosses>& losses);

}  // namespace sefi

#endif
