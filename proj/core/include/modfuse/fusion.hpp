#pragma once

#include "modfuse/encoders.hpp"
#include "modfuse/nn.hpp"

namespace modfuse {

// Stage-2 fusion: project the three pooled modality features to a shared
// width, tag them with learned modality embeddings, self-attend across the
// resulting 3-token sequence, flatten, classify.
struct FusionConfig {
    int d_model = 64;  // incoming feature width (encoder d_model)
    int d_fuse = 64;
    int heads = 4;
    int hidden = 128;
    int classes = 5;

    void validate() const;
};

// Registers all fusion parameters under the "fusion." prefix.
void init_fusion_params(ParamRegistry& reg, const FusionConfig& cfg, Rng& rng);

// Row m = projection_m(h_m) + modality_embedding_m, rows in fixed order
// (vision, audio, eeg). -> [3 x d_fuse]
Tensor stack_modalities(const ParamLeaves& p, const Tensor& h_vis, const Tensor& h_aud,
                        const Tensor& h_eeg, const FusionConfig& cfg);

// Self-attention over the 3 modality tokens with one residual + layer norm,
// flattened to [3*d_fuse] in modality order.
Tensor fuse(const ParamLeaves& p, const Tensor& tokens, const FusionConfig& cfg);

// [3*d_fuse] -> [classes] logits.
Tensor classify_fused(const ParamLeaves& p, const Tensor& flat, const FusionConfig& cfg);

// stack -> fuse -> classify.
Tensor fusion_logits(const ParamLeaves& p, const Tensor& h_vis, const Tensor& h_aud,
                     const Tensor& h_eeg, const FusionConfig& cfg);

// 3x3 per-head attention weights of the fusion decoder for given features.
std::vector<Tensor> fusion_attention_weights(const ParamLeaves& p, const Tensor& tokens,
                                             const FusionConfig& cfg);

}  // namespace modfuse
