#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "modfuse/ops.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse {

// Named trainable parameters with deterministic (insertion) iteration order
// and a per-entry frozen flag. Frozen entries receive zero optimizer updates.
class ParamRegistry {
public:
    struct Entry {
        std::string name;
        Tensor value;
        bool frozen = false;
    };

    void add(std::string name, Tensor value, bool frozen = false);
    bool contains(const std::string& name) const;
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    bool frozen(const std::string& name) const;
    void set_frozen(const std::string& name, bool frozen);
    void freeze_prefix(const std::string& prefix);

    std::size_t count() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

    // Copies every entry of `other` under its own name.
    void merge(const ParamRegistry& other);

    // Directory of MFT1 files named by dotted parameter path, plus
    // manifest.txt with one `name,dims,frozen` line per entry.
    void save(const std::filesystem::path& dir) const;
    static ParamRegistry load(const std::filesystem::path& dir);

private:
    std::size_t index_of(const std::string& name) const;

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Binds registry values to a tape as leaves (requires_grad = !frozen). With a
// null tape the raw values pass through and ops run without recording.
class ParamLeaves {
public:
    ParamLeaves(Tape* tape, const ParamRegistry& reg);
    const Tensor& operator[](const std::string& name) const;

private:
    std::unordered_map<std::string, Tensor> leaves_;
};

struct MhaParams {
    Tensor Wq, bq, Wk, bk, Wv, bv, Wo, bo;
    int heads = 1;
};

struct LayerNormParams {
    Tensor gamma, beta;
};

struct FeedForwardParams {
    Tensor W1, b1, W2, b2;
};

struct TransformerBlockParams {
    LayerNormParams ln1, ln2;
    MhaParams attn;
    FeedForwardParams ff;
};

struct MlpParams {
    Tensor W1, b1, W2, b2;
};

// x: [n x d_in], W: [d_in x d_out], b: [d_out] -> x W + b.
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

// Scaled dot-product attention with `heads` heads over the feature axis.
// q_in: [n_q x d], k_in/v_in: [n_k x d] -> [n_q x d].
Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const MhaParams& p);

// Per-head attention weight matrices [n_q x n_k]; inspection path for tests.
std::vector<Tensor> attention_weights(const Tensor& q_in, const Tensor& k_in,
                                      const MhaParams& p);

// Pre-norm residual block: x + Attn(LN(x)), then + FF(LN(.)).
Tensor transformer_block(const Tensor& x, const TransformerBlockParams& p);

// [d_in] -> hidden -> [classes] logits.
Tensor classifier_mlp(const Tensor& x, const MlpParams& p);

// Initializers. Linear weights ~ U(+-1/sqrt(d_in)), biases zero,
// embeddings ~ 0.02 N(0,1), layer norm gamma=1 beta=0.
Tensor init_linear_weight(Rng& rng, int d_in, int d_out);
Tensor init_embedding(Rng& rng, std::vector<int> shape);

// Registers the parameter set of one transformer block under `prefix`
// (prefix includes the trailing dot, e.g. "vision.block0.").
void add_block_params(ParamRegistry& reg, const std::string& prefix, int d, int d_ff,
                      Rng& rng);
TransformerBlockParams block_params(const ParamLeaves& leaves, const std::string& prefix,
                                    int heads);

void add_mha_params(ParamRegistry& reg, const std::string& prefix, int d, Rng& rng);
MhaParams mha_params(const ParamLeaves& leaves, const std::string& prefix, int heads);

}  // namespace modfuse
