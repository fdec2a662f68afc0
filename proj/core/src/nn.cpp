#include "modfuse/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "modfuse/tensor_io.hpp"

namespace modfuse {

namespace {

bool valid_param_name(const std::string& name) {
    if (name.empty()) return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '_';
        if (!ok) return false;
    }
    return true;
}

std::string dims_str(const std::vector<int>& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    return os.str();
}

std::vector<int> parse_dims(const std::string& s, const std::string& origin) {
    std::vector<int> dims;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find('x', pos);
        if (next == std::string::npos) next = s.size();
        try {
            dims.push_back(std::stoi(s.substr(pos, next - pos)));
        } catch (const std::exception&) {
            throw DataError(origin + ": bad dimension list '" + s + "'");
        }
        pos = next + 1;
    }
    if (dims.empty()) throw DataError(origin + ": empty dimension list");
    return dims;
}

}  // namespace

void ParamRegistry::add(std::string name, Tensor value, bool frozen) {
    if (!valid_param_name(name)) {
        throw UsageError("invalid parameter name '" + name + "'");
    }
    if (index_.count(name)) {
        throw UsageError("duplicate parameter name '" + name + "'");
    }
    index_[name] = entries_.size();
    entries_.push_back(Entry{std::move(name), std::move(value), frozen});
}

std::size_t ParamRegistry::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter '" + name + "'");
    }
    return it->second;
}

bool ParamRegistry::contains(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParamRegistry::value(const std::string& name) { return entries_[index_of(name)].value; }

const Tensor& ParamRegistry::value(const std::string& name) const {
    return entries_[index_of(name)].value;
}

bool ParamRegistry::frozen(const std::string& name) const {
    return entries_[index_of(name)].frozen;
}

void ParamRegistry::set_frozen(const std::string& name, bool frozen) {
    entries_[index_of(name)].frozen = frozen;
}

void ParamRegistry::freeze_prefix(const std::string& prefix) {
    for (Entry& e : entries_) {
        if (e.name.rfind(prefix, 0) == 0) e.frozen = true;
    }
}

void ParamRegistry::merge(const ParamRegistry& other) {
    for (const Entry& e : other.entries_) add(e.name, e.value, e.frozen);
}

void ParamRegistry::save(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
    for (const Entry& e : entries_) {
        save_tensor(dir / (e.name + ".mft"), e.value);
        manifest << e.name << ',' << dims_str(e.value.shape()) << ',' << (e.frozen ? 1 : 0)
                 << '\n';
    }
    if (!manifest) throw IoError("write failed for " + (dir / "manifest.txt").string());
}

ParamRegistry ParamRegistry::load(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.txt";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot open " + manifest_path.string());

    ParamRegistry reg;
    std::string line;
    int line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string origin = manifest_path.string() + ":" + std::to_string(line_no);
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw DataError(origin + ": expected 'name,dims,frozen'");
        }
        const std::string name = line.substr(0, c1);
        const std::vector<int> dims = parse_dims(line.substr(c1 + 1, c2 - c1 - 1), origin);
        const std::string frozen_s = line.substr(c2 + 1);
        if (frozen_s != "0" && frozen_s != "1") {
            throw DataError(origin + ": frozen flag must be 0 or 1");
        }
        Tensor t = load_tensor(dir / (name + ".mft"));
        if (t.shape() != dims) {
            throw DataError(origin + ": tensor " + name + " has shape " +
                            shape_str(t.shape()) + ", manifest says " + shape_str(dims));
        }
        reg.add(name, std::move(t), frozen_s == "1");
    }
    return reg;
}

ParamLeaves::ParamLeaves(Tape* tape, const ParamRegistry& reg) {
    for (const ParamRegistry::Entry& e : reg.entries()) {
        leaves_[e.name] = tape ? tape->leaf(e.value, !e.frozen) : e.value;
    }
}

const Tensor& ParamLeaves::operator[](const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) {
        throw UsageError("parameter '" + name + "' not bound");
    }
    return it->second;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.rank() != 2 || W.rank() != 2 || b.rank() != 1 || x.dim(1) != W.dim(0) ||
        W.dim(1) != b.dim(0)) {
        throw DimError("linear: incompatible shapes x" + shape_str(x.shape()) + " W" +
                       shape_str(W.shape()) + " b" + shape_str(b.shape()));
    }
    return add(matmul(x, W), repeat_rows(b, x.dim(0)));
}

namespace {

void check_mha_shapes(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                      const MhaParams& p) {
    if (q_in.rank() != 2 || k_in.rank() != 2 || v_in.rank() != 2) {
        throw DimError("attention: inputs must be rank 2");
    }
    const int d = q_in.dim(1);
    if (k_in.dim(1) != d || v_in.dim(1) != d) {
        throw DimError("attention: feature size mismatch q" + shape_str(q_in.shape()) +
                       " k" + shape_str(k_in.shape()) + " v" + shape_str(v_in.shape()));
    }
    if (k_in.dim(0) != v_in.dim(0)) {
        throw DimError("attention: key/value row counts differ: " +
                       shape_str(k_in.shape()) + " vs " + shape_str(v_in.shape()));
    }
    if (p.heads < 1 || d % p.heads != 0) {
        throw ConfigError("attention: feature size " + std::to_string(d) +
                          " not divisible by head count " + std::to_string(p.heads));
    }
}

}  // namespace

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const MhaParams& p) {
    check_mha_shapes(q_in, k_in, v_in, p);
    const int d = q_in.dim(1);
    const int dh = d / p.heads;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    const Tensor q = linear(q_in, p.Wq, p.bq);
    const Tensor k = linear(k_in, p.Wk, p.bk);
    const Tensor v = linear(v_in, p.Wv, p.bv);

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(p.heads));
    for (int h = 0; h < p.heads; ++h) {
        const Tensor qh = slice(q, 1, h * dh, dh);
        const Tensor kh = slice(k, 1, h * dh, dh);
        const Tensor vh = slice(v, 1, h * dh, dh);
        const Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), 1);
        head_outputs.push_back(matmul(weights, vh));
    }
    return linear(concat(head_outputs, 1), p.Wo, p.bo);
}

std::vector<Tensor> attention_weights(const Tensor& q_in, const Tensor& k_in,
                                      const MhaParams& p) {
    check_mha_shapes(q_in, k_in, k_in, p);
    const int d = q_in.dim(1);
    const int dh = d / p.heads;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    const Tensor q = linear(q_in, p.Wq, p.bq);
    const Tensor k = linear(k_in, p.Wk, p.bk);
    std::vector<Tensor> weights;
    weights.reserve(static_cast<std::size_t>(p.heads));
    for (int h = 0; h < p.heads; ++h) {
        const Tensor qh = slice(q, 1, h * dh, dh);
        const Tensor kh = slice(k, 1, h * dh, dh);
        weights.push_back(softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), 1));
    }
    return weights;
}

Tensor transformer_block(const Tensor& x, const TransformerBlockParams& p) {
    const Tensor normed = layer_norm(x, p.ln1.gamma, p.ln1.beta);
    const Tensor h = add(x, multi_head_attention(normed, normed, normed, p.attn));
    const Tensor normed2 = layer_norm(h, p.ln2.gamma, p.ln2.beta);
    const Tensor ff = linear(gelu(linear(normed2, p.ff.W1, p.ff.b1)), p.ff.W2, p.ff.b2);
    return add(h, ff);
}

Tensor classifier_mlp(const Tensor& x, const MlpParams& p) {
    if (x.rank() != 1 || x.dim(0) != p.W1.dim(0)) {
        throw DimError("classifier_mlp: input " + shape_str(x.shape()) +
                       " does not match W1 " + shape_str(p.W1.shape()));
    }
    const Tensor row = reshape(x, {1, x.dim(0)});
    const Tensor hidden = gelu(linear(row, p.W1, p.b1));
    const Tensor logits = linear(hidden, p.W2, p.b2);
    return reshape(logits, {p.W2.dim(1)});
}

Tensor init_linear_weight(Rng& rng, int d_in, int d_out) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(d_in));
    return Tensor::uniform(rng, {d_in, d_out}, -bound, bound);
}

Tensor init_embedding(Rng& rng, std::vector<int> shape) {
    return Tensor::normal(rng, std::move(shape), 0.02f);
}

void add_mha_params(ParamRegistry& reg, const std::string& prefix, int d, Rng& rng) {
    reg.add(prefix + "Wq", init_linear_weight(rng, d, d));
    reg.add(prefix + "bq", Tensor::zeros({d}));
    reg.add(prefix + "Wk", init_linear_weight(rng, d, d));
    reg.add(prefix + "bk", Tensor::zeros({d}));
    reg.add(prefix + "Wv", init_linear_weight(rng, d, d));
    reg.add(prefix + "bv", Tensor::zeros({d}));
    reg.add(prefix + "Wo", init_linear_weight(rng, d, d));
    reg.add(prefix + "bo", Tensor::zeros({d}));
}

MhaParams mha_params(const ParamLeaves& leaves, const std::string& prefix, int heads) {
    MhaParams p;
    p.Wq = leaves[prefix + "Wq"];
    p.bq = leaves[prefix + "bq"];
    p.Wk = leaves[prefix + "Wk"];
    p.bk = leaves[prefix + "bk"];
    p.Wv = leaves[prefix + "Wv"];
    p.bv = leaves[prefix + "bv"];
    p.Wo = leaves[prefix + "Wo"];
    p.bo = leaves[prefix + "bo"];
    p.heads = heads;
    return p;
}

void add_block_params(ParamRegistry& reg, const std::string& prefix, int d, int d_ff,
                      Rng& rng) {
    reg.add(prefix + "ln1.g", Tensor::ones({d}));
    reg.add(prefix + "ln1.b", Tensor::zeros({d}));
    add_mha_params(reg, prefix + "attn.", d, rng);
    reg.add(prefix + "ln2.g", Tensor::ones({d}));
    reg.add(prefix + "ln2.b", Tensor::zeros({d}));
    reg.add(prefix + "ff.W1", init_linear_weight(rng, d, d_ff));
    reg.add(prefix + "ff.b1", Tensor::zeros({d_ff}));
    reg.add(prefix + "ff.W2", init_linear_weight(rng, d_ff, d));
    reg.add(prefix + "ff.b2", Tensor::zeros({d}));
}

TransformerBlockParams block_params(const ParamLeaves& leaves, const std::string& prefix,
                                    int heads) {
    TransformerBlockParams p;
    p.ln1 = LayerNormParams{leaves[prefix + "ln1.g"], leaves[prefix + "ln1.b"]};
    p.attn = mha_params(leaves, prefix + "attn.", heads);
    p.ln2 = LayerNormParams{leaves[prefix + "ln2.g"], leaves[prefix + "ln2.b"]};
    p.ff = FeedForwardParams{leaves[prefix + "ff.W1"], leaves[prefix + "ff.b1"],
                             leaves[prefix + "ff.W2"], leaves[prefix + "ff.b2"]};
    return p;
}

}  // namespace modfuse
