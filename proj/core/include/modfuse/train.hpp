#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "modfuse/pipeline.hpp"

namespace modfuse {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// First/second moment buffers, keyed by parameter name.
class AdamState {
public:
    explicit AdamState(const ParamRegistry& reg);
    long step() const { return step_; }

private:
    friend void adam_step(ParamRegistry&, const std::vector<std::pair<std::string, Tensor>>&,
                          AdamState&, const AdamConfig&);
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments_;
    long step_ = 0;
};

// Standard bias-corrected Adam update. `grads` must cover every unfrozen
// parameter; frozen parameters are never touched, gradient or not.
void adam_step(ParamRegistry& reg, const std::vector<std::pair<std::string, Tensor>>& grads,
               AdamState& state, const AdamConfig& cfg);

// Parameter snapshot plus ordered metadata: `run.*` entries (stage, modality,
// seed, metrics) followed by the full config echo.
struct Checkpoint {
    ParamRegistry params;
    std::vector<std::pair<std::string, std::string>> meta;

    bool meta_has(const std::string& key) const;
    const std::string& meta_get(const std::string& key) const;
    // Config portion of the metadata, reparsed through RunConfig.
    RunConfig config() const;

    void save(const std::filesystem::path& dir) const;
    static Checkpoint load(const std::filesystem::path& dir);
};

// Stage 1: one modality's encoder plus a linear head, trained on its own
// input domain. Splits per subject, trains on the union of train splits,
// reports train/val accuracy in the checkpoint metadata.
Checkpoint pretrain_modality(const std::vector<Trial>& trials, Modality modality,
                             const PipelineConfig& cfg);

// Stage 2: freezes the three pretrained encoders (stage-1 heads are
// discarded) and trains only fusion.* parameters on fully-multimodal trials.
Checkpoint finetune_fusion(const std::vector<Trial>& trials, const Checkpoint& vision_ckpt,
                           const Checkpoint& audio_ckpt, const Checkpoint& eeg_ckpt,
                           const PipelineConfig& cfg);

// Fraction of trials whose argmax logit matches the label; ties resolve to
// the lowest class index.
double evaluate(const Checkpoint& ckpt, const std::vector<Trial>& split);

int predict(const Checkpoint& ckpt, const Trial& trial);

}  // namespace modfuse
