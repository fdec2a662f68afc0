#include "modfuse/fusion.hpp"

namespace modfuse {

namespace {

constexpr const char* kModalityOrder[3] = {"vision", "audio", "eeg"};

}  // namespace

void FusionConfig::validate() const {
    if (d_model < 1 || d_fuse < 1 || hidden < 1 || classes < 2) {
        throw ConfigError("fusion: dimensions must be positive (and classes >= 2)");
    }
    if (heads < 1 || d_fuse % heads != 0) {
        throw ConfigError("fusion: d_fuse " + std::to_string(d_fuse) +
                          " not divisible by head count " + std::to_string(heads));
    }
}

void init_fusion_params(ParamRegistry& reg, const FusionConfig& cfg, Rng& rng) {
    cfg.validate();
    for (const char* m : kModalityOrder) {
        reg.add(std::string("fusion.proj.") + m + ".W",
                init_linear_weight(rng, cfg.d_model, cfg.d_fuse));
        reg.add(std::string("fusion.proj.") + m + ".b", Tensor::zeros({cfg.d_fuse}));
    }
    for (const char* m : kModalityOrder) {
        reg.add(std::string("fusion.emb.") + m, init_embedding(rng, {1, cfg.d_fuse}));
    }
    add_mha_params(reg, "fusion.attn.", cfg.d_fuse, rng);
    reg.add("fusion.ln.g", Tensor::ones({cfg.d_fuse}));
    reg.add("fusion.ln.b", Tensor::zeros({cfg.d_fuse}));
    reg.add("fusion.mlp.W1", init_linear_weight(rng, 3 * cfg.d_fuse, cfg.hidden));
    reg.add("fusion.mlp.b1", Tensor::zeros({cfg.hidden}));
    reg.add("fusion.mlp.W2", init_linear_weight(rng, cfg.hidden, cfg.classes));
    reg.add("fusion.mlp.b2", Tensor::zeros({cfg.classes}));
}

Tensor stack_modalities(const ParamLeaves& p, const Tensor& h_vis, const Tensor& h_aud,
                        const Tensor& h_eeg, const FusionConfig& cfg) {
    const Tensor* features[3] = {&h_vis, &h_aud, &h_eeg};
    for (const Tensor* h : features) {
        if (h->rank() != 1 || h->dim(0) != cfg.d_model) {
            throw DimError("stack_modalities: feature " + shape_str(h->shape()) +
                           " does not match d_model " + std::to_string(cfg.d_model));
        }
    }
    std::vector<Tensor> rows;
    rows.reserve(3);
    for (int m = 0; m < 3; ++m) {
        const std::string base = std::string("fusion.proj.") + kModalityOrder[m];
        const Tensor row = linear(reshape(*features[m], {1, cfg.d_model}),
                                  p[base + ".W"], p[base + ".b"]);
        rows.push_back(add(row, p[std::string("fusion.emb.") + kModalityOrder[m]]));
    }
    return concat(rows, 0);
}

Tensor fuse(const ParamLeaves& p, const Tensor& tokens, const FusionConfig& cfg) {
    if (tokens.rank() != 2 || tokens.dim(0) != 3 || tokens.dim(1) != cfg.d_fuse) {
        throw DimError("fuse: expected [3x" + std::to_string(cfg.d_fuse) + "], got " +
                       shape_str(tokens.shape()));
    }
    const MhaParams attn = mha_params(p, "fusion.attn.", cfg.heads);
    const Tensor attended = add(tokens, multi_head_attention(tokens, tokens, tokens, attn));
    const Tensor normed = layer_norm(attended, p["fusion.ln.g"], p["fusion.ln.b"]);
    return reshape(normed, {3 * cfg.d_fuse});
}

Tensor classify_fused(const ParamLeaves& p, const Tensor& flat, const FusionConfig& cfg) {
    if (flat.rank() != 1 || flat.dim(0) != 3 * cfg.d_fuse) {
        throw DimError("classify_fused: expected [" + std::to_string(3 * cfg.d_fuse) +
                       "], got " + shape_str(flat.shape()));
    }
    return classifier_mlp(flat, MlpParams{p["fusion.mlp.W1"], p["fusion.mlp.b1"],
                                          p["fusion.mlp.W2"], p["fusion.mlp.b2"]});
}

Tensor fusion_logits(const ParamLeaves& p, const Tensor& h_vis, const Tensor& h_aud,
                     const Tensor& h_eeg, const FusionConfig& cfg) {
    return classify_fused(p, fuse(p, stack_modalities(p, h_vis, h_aud, h_eeg, cfg), cfg),
                          cfg);
}

std::vector<Tensor> fusion_attention_weights(const ParamLeaves& p, const Tensor& tokens,
                                             const FusionConfig& cfg) {
    return attention_weights(tokens, tokens, mha_params(p, "fusion.attn.", cfg.heads));
}

}  // namespace modfuse
