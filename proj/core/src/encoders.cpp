#include "modfuse/encoders.hpp"

#include <cmath>

namespace modfuse {

std::string to_string(Modality m) {
    switch (m) {
        case Modality::vision: return "vision";
        case Modality::audio: return "audio";
        case Modality::eeg: return "eeg";
    }
    throw UsageError("unknown modality value");
}

Modality parse_modality(const std::string& s) {
    if (s == "vision") return Modality::vision;
    if (s == "audio") return Modality::audio;
    if (s == "eeg") return Modality::eeg;
    throw UsageError("unknown modality '" + s + "' (expected vision|audio|eeg)");
}

namespace {

void require_positive(const char* what, int v) {
    if (v < 1) {
        throw ConfigError(std::string(what) + " must be >= 1, got " + std::to_string(v));
    }
}

void check_attention_dims(const char* who, int d_model, int heads, int blocks) {
    require_positive("d_model", d_model);
    require_positive("heads", heads);
    require_positive("blocks", blocks);
    if (d_model % heads != 0) {
        throw ConfigError(std::string(who) + ": d_model " + std::to_string(d_model) +
                          " not divisible by head count " + std::to_string(heads));
    }
}

}  // namespace

void VisionEncoderConfig::validate() const {
    require_positive("frames", frames);
    require_positive("patch", patch);
    if (height % patch != 0 || width % patch != 0) {
        throw ConfigError("vision: patch " + std::to_string(patch) +
                          " does not tile frame " + std::to_string(height) + "x" +
                          std::to_string(width));
    }
    check_attention_dims("vision", d_model, heads, blocks);
    require_positive("d_ff", d_ff);
}

void AudioEncoderConfig::validate() const {
    require_positive("patch_f", patch_f);
    require_positive("patch_t", patch_t);
    if (mel_bins % patch_f != 0 || time_frames % patch_t != 0) {
        throw ConfigError("audio: patch " + std::to_string(patch_f) + "x" +
                          std::to_string(patch_t) + " does not tile spectrogram " +
                          std::to_string(mel_bins) + "x" + std::to_string(time_frames));
    }
    check_attention_dims("audio", d_model, heads, blocks);
    require_positive("d_ff", d_ff);
}

void EegEncoderConfig::validate() const {
    require_positive("channels", channels);
    require_positive("stride", stride);
    require_positive("kernel", kernel);
    if (kernel > samples) {
        throw ConfigError("eeg: kernel length " + std::to_string(kernel) +
                          " exceeds signal length " + std::to_string(samples));
    }
    check_attention_dims("eeg", d_model, heads, blocks);
    require_positive("d_ff", d_ff);
}

namespace {

// Shared trunk: prepend the class token, run the blocks, pool its state.
ModalityFeature run_trunk(const ParamLeaves& p, const std::string& prefix,
                          Modality modality, const Tensor& tokens, int d_model,
                          int blocks, int heads) {
    Tensor seq = concat({p[prefix + "cls"], tokens}, 0);
    for (int b = 0; b < blocks; ++b) {
        seq = transformer_block(
            seq, block_params(p, prefix + "block" + std::to_string(b) + ".", heads));
    }
    ModalityFeature out;
    out.modality = modality;
    out.tokens = seq;
    out.pooled = reshape(slice(seq, 0, 0, 1), {d_model});
    return out;
}

void add_trunk_params(ParamRegistry& reg, const std::string& prefix, int d, int d_ff,
                      int blocks, Rng& rng) {
    reg.add(prefix + "cls", init_embedding(rng, {1, d}));
    for (int b = 0; b < blocks; ++b) {
        add_block_params(reg, prefix + "block" + std::to_string(b) + ".", d, d_ff, rng);
    }
}

}  // namespace

void init_vision_params(ParamRegistry& reg, const std::string& prefix,
                        const VisionEncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    reg.add(prefix + "patch.W", init_linear_weight(rng, cfg.patch * cfg.patch, cfg.d_model));
    reg.add(prefix + "patch.b", Tensor::zeros({cfg.d_model}));
    reg.add(prefix + "pos", init_embedding(rng, {cfg.patches_per_frame(), cfg.d_model}));
    reg.add(prefix + "frame", init_embedding(rng, {cfg.frames, cfg.d_model}));
    add_trunk_params(reg, prefix, cfg.d_model, cfg.d_ff, cfg.blocks, rng);
}

void init_audio_params(ParamRegistry& reg, const std::string& prefix,
                       const AudioEncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    reg.add(prefix + "patch.W",
            init_linear_weight(rng, cfg.patch_f * cfg.patch_t, cfg.d_model));
    reg.add(prefix + "patch.b", Tensor::zeros({cfg.d_model}));
    reg.add(prefix + "pos", init_embedding(rng, {cfg.patch_count(), cfg.d_model}));
    add_trunk_params(reg, prefix, cfg.d_model, cfg.d_ff, cfg.blocks, rng);
}

void init_eeg_params(ParamRegistry& reg, const std::string& prefix,
                     const EegEncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    const float kbound = 1.0f / std::sqrt(static_cast<float>(cfg.kernel));
    reg.add(prefix + "conv.K",
            Tensor::uniform(rng, {cfg.channels, cfg.kernel}, -kbound, kbound));
    reg.add(prefix + "proj.W", init_linear_weight(rng, cfg.channels, cfg.d_model));
    reg.add(prefix + "proj.b", Tensor::zeros({cfg.d_model}));
    reg.add(prefix + "pos", init_embedding(rng, {cfg.conv_tokens(), cfg.d_model}));
    add_trunk_params(reg, prefix, cfg.d_model, cfg.d_ff, cfg.blocks, rng);
}

ModalityFeature encode_vision(const ParamLeaves& p, const std::string& prefix,
                              const Tensor& frames, const VisionEncoderConfig& cfg) {
    cfg.validate();
    if (frames.rank() != 3 || frames.dim(0) != cfg.frames || frames.dim(1) != cfg.height ||
        frames.dim(2) != cfg.width) {
        throw DimError("encode_vision: frames " + shape_str(frames.shape()) +
                       " do not match configured " + std::to_string(cfg.frames) + "x" +
                       std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
    }
    const int np = cfg.patches_per_frame();

    std::vector<Tensor> patch_rows;
    std::vector<Tensor> frame_embs;
    patch_rows.reserve(static_cast<std::size_t>(cfg.frames));
    frame_embs.reserve(static_cast<std::size_t>(cfg.frames));
    const Tensor& frame_table = p[prefix + "frame"];
    for (int f = 0; f < cfg.frames; ++f) {
        const Tensor img = reshape(slice(frames, 0, f, 1), {cfg.height, cfg.width});
        patch_rows.push_back(patchify(img, cfg.patch));
        frame_embs.push_back(
            repeat_rows(reshape(slice(frame_table, 0, f, 1), {cfg.d_model}), np));
    }
    const Tensor patches = concat(patch_rows, 0);  // [N*np x P^2]
    Tensor tokens = linear(patches, p[prefix + "patch.W"], p[prefix + "patch.b"]);

    std::vector<Tensor> pos_tiles(static_cast<std::size_t>(cfg.frames), p[prefix + "pos"]);
    tokens = add(tokens, concat(pos_tiles, 0));
    tokens = add(tokens, concat(frame_embs, 0));

    return run_trunk(p, prefix, Modality::vision, tokens, cfg.d_model, cfg.blocks,
                     cfg.heads);
}

ModalityFeature encode_audio(const ParamLeaves& p, const std::string& prefix,
                             const Tensor& spectrogram, const AudioEncoderConfig& cfg) {
    cfg.validate();
    if (spectrogram.rank() != 2 || spectrogram.dim(0) != cfg.mel_bins ||
        spectrogram.dim(1) != cfg.time_frames) {
        throw DimError("encode_audio: spectrogram " + shape_str(spectrogram.shape()) +
                       " does not match configured " + std::to_string(cfg.mel_bins) + "x" +
                       std::to_string(cfg.time_frames));
    }
    const Tensor patches = patchify(spectrogram, cfg.patch_f, cfg.patch_t);
    Tensor tokens = linear(patches, p[prefix + "patch.W"], p[prefix + "patch.b"]);
    tokens = add(tokens, p[prefix + "pos"]);
    return run_trunk(p, prefix, Modality::audio, tokens, cfg.d_model, cfg.blocks,
                     cfg.heads);
}

ModalityFeature encode_eeg(const ParamLeaves& p, const std::string& prefix,
                           const Tensor& signal, const EegEncoderConfig& cfg) {
    cfg.validate();
    if (signal.rank() != 2 || signal.dim(0) != cfg.channels ||
        signal.dim(1) != cfg.samples) {
        throw DimError("encode_eeg: signal " + shape_str(signal.shape()) +
                       " does not match configured " + std::to_string(cfg.channels) + "x" +
                       std::to_string(cfg.samples));
    }
    const Tensor conv = conv1d_depthwise(signal, p[prefix + "conv.K"], cfg.stride);
    Tensor tokens = linear(transpose(conv), p[prefix + "proj.W"], p[prefix + "proj.b"]);
    tokens = add(tokens, p[prefix + "pos"]);
    return run_trunk(p, prefix, Modality::eeg, tokens, cfg.d_model, cfg.blocks, cfg.heads);
}

void init_head_params(ParamRegistry& reg, const std::string& prefix, int d_model,
                      int classes, Rng& rng) {
    reg.add(prefix + "W", init_linear_weight(rng, d_model, classes));
    reg.add(prefix + "b", Tensor::zeros({classes}));
}

Tensor unimodal_logits(const ParamLeaves& p, const std::string& prefix,
                       const ModalityFeature& feature) {
    const Tensor& w = p[prefix + "W"];
    const Tensor row = reshape(feature.pooled, {1, feature.pooled.dim(0)});
    return reshape(linear(row, w, p[prefix + "b"]), {w.dim(1)});
}

}  // namespace modfuse
