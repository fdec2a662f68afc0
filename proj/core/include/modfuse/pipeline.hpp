#pragma once

#include "modfuse/data.hpp"
#include "modfuse/encoders.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/run_config.hpp"

namespace modfuse {

struct TrainSettings {
    int epochs_pretrain = 30;
    int epochs_finetune = 30;
    int batch_size = 16;
    float lr_pretrain = 1e-3f;
    float lr_finetune = 5e-4f;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;

    void validate() const;
};

// Typed view of a RunConfig, carried through training so checkpoints can
// echo the exact configuration they were produced with.
struct PipelineConfig {
    SynthConfig synth;
    VisionEncoderConfig vision;
    AudioEncoderConfig audio;
    EegEncoderConfig eeg;
    FusionConfig fusion;  // d_model is filled from the encoder checkpoints in use
    TrainSettings train;
    float test_fraction = 0.2f;
    int classes = 5;
    std::uint64_t seed = 0;

    std::vector<std::pair<std::string, std::string>> echo;  // source config lines

    static PipelineConfig from(const RunConfig& rc);
};

}  // namespace modfuse
