#pragma once

#include <string>

#include "modfuse/nn.hpp"

namespace modfuse {

enum class Modality { vision, audio, eeg };

std::string to_string(Modality m);
Modality parse_modality(const std::string& s);

struct VisionEncoderConfig {
    int frames = 4;
    int height = 32;
    int width = 32;
    int patch = 8;
    int d_model = 64;
    int d_ff = 128;
    int blocks = 2;
    int heads = 4;

    int patches_per_frame() const { return (height / patch) * (width / patch); }
    int tokens() const { return frames * patches_per_frame() + 1; }
    void validate() const;
};

struct AudioEncoderConfig {
    int mel_bins = 16;
    int time_frames = 32;
    int patch_f = 8;
    int patch_t = 8;
    int d_model = 64;
    int d_ff = 128;
    int blocks = 2;
    int heads = 4;

    int patch_count() const { return (mel_bins / patch_f) * (time_frames / patch_t); }
    int tokens() const { return patch_count() + 1; }
    void validate() const;
};

struct EegEncoderConfig {
    int channels = 30;
    int samples = 200;
    int kernel = 11;
    int stride = 10;
    int d_model = 64;
    int d_ff = 128;
    int blocks = 2;
    int heads = 4;

    int conv_tokens() const { return (samples - kernel) / stride + 1; }
    int tokens() const { return conv_tokens() + 1; }
    void validate() const;
};

// Output of one modality encoder: the class-token state after the final
// block plus the full token sequence it was pooled from.
struct ModalityFeature {
    Modality modality;
    Tensor pooled;  // [d_model]
    Tensor tokens;  // [n_tokens x d_model]
};

// Parameter registration. `prefix` includes the trailing dot ("vision.").
void init_vision_params(ParamRegistry& reg, const std::string& prefix,
                        const VisionEncoderConfig& cfg, Rng& rng);
void init_audio_params(ParamRegistry& reg, const std::string& prefix,
                       const AudioEncoderConfig& cfg, Rng& rng);
void init_eeg_params(ParamRegistry& reg, const std::string& prefix,
                     const EegEncoderConfig& cfg, Rng& rng);

// frames: [N x H x W]. Patch tokens from all frames share the embedding map;
// each token gets its in-frame positional embedding plus a frame-index
// embedding, then a class token is prepended.
ModalityFeature encode_vision(const ParamLeaves& p, const std::string& prefix,
                              const Tensor& frames, const VisionEncoderConfig& cfg);

// spectrogram: [F x T_a], patched over (mel, time).
ModalityFeature encode_audio(const ParamLeaves& p, const std::string& prefix,
                             const Tensor& spectrogram, const AudioEncoderConfig& cfg);

// signal: [C x T]. Depthwise temporal conv -> per-step projection of the
// channel vector -> tokens.
ModalityFeature encode_eeg(const ParamLeaves& p, const std::string& prefix,
                           const Tensor& signal, const EegEncoderConfig& cfg);

// Stage-1 classification head over the pooled feature.
void init_head_params(ParamRegistry& reg, const std::string& prefix, int d_model,
                      int classes, Rng& rng);
Tensor unimodal_logits(const ParamLeaves& p, const std::string& prefix,
                       const ModalityFeature& feature);

}  // namespace modfuse
