#include "modfuse/train.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "modfuse/text.hpp"

namespace modfuse {

AdamState::AdamState(const ParamRegistry& reg) {
    for (const ParamRegistry::Entry& e : reg.entries()) {
        moments_.emplace(e.name, std::make_pair(Tensor::zeros(e.value.shape()),
                                                Tensor::zeros(e.value.shape())));
    }
}

void adam_step(ParamRegistry& reg, const std::vector<std::pair<std::string, Tensor>>& grads,
               AdamState& state, const AdamConfig& cfg) {
    std::unordered_map<std::string, const Tensor*> gmap;
    for (const auto& [name, g] : grads) {
        if (!reg.contains(name)) {
            throw UsageError("adam_step: gradient for unknown parameter '" + name + "'");
        }
        if (!gmap.emplace(name, &g).second) {
            throw UsageError("adam_step: duplicate gradient for '" + name + "'");
        }
    }
    for (const ParamRegistry::Entry& e : reg.entries()) {
        if (!e.frozen && gmap.count(e.name) == 0) {
            throw UsageError("adam_step: missing gradient for unfrozen parameter '" +
                             e.name + "'");
        }
    }

    ++state.step_;
    const double corr1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), state.step_);
    const double corr2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), state.step_);

    for (const ParamRegistry::Entry& e : reg.entries()) {
        if (e.frozen) continue;
        const Tensor& g = *gmap.at(e.name);
        Tensor& p = reg.value(e.name);
        if (g.shape() != p.shape()) {
            throw DimError("adam_step: gradient " + shape_str(g.shape()) +
                           " does not match parameter " + shape_str(p.shape()) + " ('" +
                           e.name + "')");
        }
        auto it = state.moments_.find(e.name);
        if (it == state.moments_.end()) {
            throw UsageError("adam_step: state not initialized for '" + e.name + "'");
        }
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (std::size_t i = 0; i < p.values().size(); ++i) {
            const float gi = g.values()[i];
            m.values()[i] = cfg.beta1 * m.values()[i] + (1.0f - cfg.beta1) * gi;
            v.values()[i] = cfg.beta2 * v.values()[i] + (1.0f - cfg.beta2) * gi * gi;
            const double mhat = static_cast<double>(m.values()[i]) / corr1;
            const double vhat = static_cast<double>(v.values()[i]) / corr2;
            p.values()[i] -= static_cast<float>(
                static_cast<double>(cfg.lr) * mhat /
                (std::sqrt(vhat) + static_cast<double>(cfg.eps)));
        }
    }
}

bool Checkpoint::meta_has(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return true;
    }
    return false;
}

const std::string& Checkpoint::meta_get(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return v;
    }
    throw DataError("checkpoint metadata lacks '" + key + "'");
}

RunConfig Checkpoint::config() const {
    std::vector<std::string> lines;
    for (const auto& [k, v] : meta) {
        if (k.rfind("run.", 0) == 0) continue;
        lines.push_back(k + " = " + v);
    }
    return RunConfig::from_lines(lines, "checkpoint meta");
}

void Checkpoint::save(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    params.save(dir / "params");
    std::ofstream f(dir / "meta.txt", std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / "meta.txt").string());
    for (const auto& [k, v] : meta) f << k << " = " << v << '\n';
    if (!f) throw IoError("write failed for " + (dir / "meta.txt").string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
    Checkpoint ckpt;
    ckpt.params = ParamRegistry::load(dir / "params");
    const std::filesystem::path meta_path = dir / "meta.txt";
    std::ifstream f(meta_path);
    if (!f) throw IoError("cannot open " + meta_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw DataError(meta_path.string() + ":" + std::to_string(line_no) +
                            ": expected 'key = value'");
        }
        ckpt.meta.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return ckpt;
}

namespace {

// Child stream ids for the master seed; keeps init, batching, and the
// generator (streams 1, 2, 1000000+) statistically independent.
std::uint64_t init_stream(Modality m) { return 10 + static_cast<std::uint64_t>(m); }
std::uint64_t batch_stream(Modality m) { return 20 + static_cast<std::uint64_t>(m); }
constexpr std::uint64_t kFusionInitStream = 14;
constexpr std::uint64_t kFusionBatchStream = 24;

const Tensor& modality_input(const Trial& trial, Modality m) {
    switch (m) {
        case Modality::vision: return trial.frames;
        case Modality::eeg: return trial.eeg;
        case Modality::audio:
            if (!trial.spectrogram.has_value()) {
                throw DataError("trial " + std::to_string(trial.trial_id) + " of subject " +
                                std::to_string(trial.subject_id) + " has no spectrogram");
            }
            return *trial.spectrogram;
    }
    throw UsageError("unknown modality value");
}

ModalityFeature encode(const ParamLeaves& vals, Modality m, const Trial& trial,
                       const PipelineConfig& cfg) {
    switch (m) {
        case Modality::vision:
            return encode_vision(vals, "vision.", trial.frames, cfg.vision);
        case Modality::audio:
            return encode_audio(vals, "audio.", modality_input(trial, m), cfg.audio);
        case Modality::eeg:
            return encode_eeg(vals, "eeg.", trial.eeg, cfg.eeg);
    }
    throw UsageError("unknown modality value");
}

int argmax_lowest(const Tensor& logits) {
    int best = 0;
    float best_v = logits.values()[0];
    for (int i = 1; i < static_cast<int>(logits.values().size()); ++i) {
        if (logits.values()[static_cast<std::size_t>(i)] > best_v) {
            best_v = logits.values()[static_cast<std::size_t>(i)];
            best = i;
        }
    }
    return best;
}

Tensor batch_mean(std::vector<Tensor> losses) {
    if (losses.size() == 1) return losses[0];
    return mean(concat(losses, 0));
}

struct SplitView {
    std::vector<int> train;
    std::vector<int> test;
};

SplitView flatten_split(const std::map<int, SplitIndices>& split) {
    SplitView v;
    for (const auto& [subject, si] : split) {
        v.train.insert(v.train.end(), si.train.begin(), si.train.end());
        v.test.insert(v.test.end(), si.test.begin(), si.test.end());
    }
    return v;
}

void append_run_header(Checkpoint& ckpt, const std::string& stage,
                       const std::string& modality, const PipelineConfig& cfg) {
    ckpt.meta.emplace_back("run.stage", stage);
    ckpt.meta.emplace_back("run.modality", modality);
    ckpt.meta.emplace_back("run.seed", std::to_string(cfg.seed));
}

void append_config_echo(Checkpoint& ckpt, const PipelineConfig& cfg) {
    for (const auto& [k, v] : cfg.echo) ckpt.meta.emplace_back(k, v);
}

std::vector<std::pair<std::string, Tensor>> collect_grads(const ParamRegistry& reg,
                                                          const ParamLeaves& leaves,
                                                          const GradientMap& grads) {
    std::vector<std::pair<std::string, Tensor>> named;
    for (const ParamRegistry::Entry& e : reg.entries()) {
        if (e.frozen) continue;
        named.emplace_back(e.name, grads.grad(leaves[e.name]));
    }
    return named;
}

}  // namespace

Checkpoint pretrain_modality(const std::vector<Trial>& trials, Modality modality,
                             const PipelineConfig& cfg) {
    if (trials.empty()) throw DataError("pretrain: empty dataset");
    for (const Trial& t : trials) {
        modality_input(t, modality);  // throws if the modality is absent
    }

    const SplitView split =
        flatten_split(subject_split(trials, cfg.test_fraction, cfg.seed, false));

    const std::string prefix = to_string(modality) + ".";
    Rng init_rng = Rng(cfg.seed).fork(init_stream(modality));
    ParamRegistry reg;
    int d_model = 0;
    switch (modality) {
        case Modality::vision:
            init_vision_params(reg, prefix, cfg.vision, init_rng);
            d_model = cfg.vision.d_model;
            break;
        case Modality::audio:
            init_audio_params(reg, prefix, cfg.audio, init_rng);
            d_model = cfg.audio.d_model;
            break;
        case Modality::eeg:
            init_eeg_params(reg, prefix, cfg.eeg, init_rng);
            d_model = cfg.eeg.d_model;
            break;
    }
    init_head_params(reg, "head.", d_model, cfg.classes, init_rng);

    auto sample_loss = [&](const ParamLeaves& vals, const Trial& trial) {
        const Tensor logits = unimodal_logits(vals, "head.", encode(vals, modality, trial, cfg));
        return cross_entropy(reshape(logits, {1, cfg.classes}), {trial.label});
    };
    auto full_train_loss = [&]() {
        const ParamLeaves vals(nullptr, reg);
        double acc = 0.0;
        for (int i : split.train) {
            acc += sample_loss(vals, trials[static_cast<std::size_t>(i)]).item();
        }
        return acc / static_cast<double>(split.train.size());
    };

    const AdamConfig adam{cfg.train.lr_pretrain, cfg.train.adam_beta1, cfg.train.adam_beta2,
                          cfg.train.adam_eps};
    AdamState state(reg);
    Rng batch_rng = Rng(cfg.seed).fork(batch_stream(modality));

    const double initial_loss = full_train_loss();
    double epoch1_loss = initial_loss;
    double final_loss = initial_loss;

    for (int epoch = 0; epoch < cfg.train.epochs_pretrain; ++epoch) {
        std::vector<int> order = split.train;
        batch_rng.shuffle(order);
        double running = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.train.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
            Tape tape;
            const ParamLeaves leaves(&tape, reg);
            std::vector<Tensor> losses;
            losses.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                losses.push_back(sample_loss(leaves, trials[static_cast<std::size_t>(order[k])]));
            }
            const Tensor loss = batch_mean(std::move(losses));
            if (!std::isfinite(loss.item())) {
                throw DivergenceError("pretrain " + to_string(modality) + ": loss diverged at epoch " +
                                      std::to_string(epoch + 1));
            }
            const GradientMap grads = tape.backward(loss);
            adam_step(reg, collect_grads(reg, leaves, grads), state, adam);
            running += static_cast<double>(loss.item()) * static_cast<double>(end - start);
        }
        const double epoch_mean = running / static_cast<double>(order.size());
        if (!std::isfinite(epoch_mean)) {
            throw DivergenceError("pretrain " + to_string(modality) +
                                  ": mean loss diverged at epoch " + std::to_string(epoch + 1));
        }
        if (epoch == 0) epoch1_loss = full_train_loss();
        final_loss = epoch_mean;
    }

    Checkpoint ckpt;
    ckpt.params = std::move(reg);
    append_run_header(ckpt, "pretrain", to_string(modality), cfg);
    append_config_echo(ckpt, cfg);

    std::vector<Trial> train_set, test_set;
    for (int i : split.train) train_set.push_back(trials[static_cast<std::size_t>(i)]);
    for (int i : split.test) test_set.push_back(trials[static_cast<std::size_t>(i)]);
    const double train_acc = evaluate(ckpt, train_set);
    const double val_acc = evaluate(ckpt, test_set);

    // Metrics precede the config echo in the stored metadata.
    std::vector<std::pair<std::string, std::string>> head(ckpt.meta.begin(),
                                                          ckpt.meta.begin() + 3);
    head.emplace_back("run.train_acc", fmt_shortest(train_acc));
    head.emplace_back("run.val_acc", fmt_shortest(val_acc));
    head.emplace_back("run.initial_loss", fmt_shortest(initial_loss));
    head.emplace_back("run.epoch1_loss", fmt_shortest(epoch1_loss));
    head.emplace_back("run.final_loss", fmt_shortest(final_loss));
    head.insert(head.end(), ckpt.meta.begin() + 3, ckpt.meta.end());
    ckpt.meta = std::move(head);
    return ckpt;
}

namespace {

// Copies `prefix.*` entries of a pretrain checkpoint into `dst` as frozen.
void adopt_frozen_encoder(ParamRegistry& dst, const Checkpoint& ckpt,
                          const std::string& prefix) {
    std::size_t copied = 0;
    for (const ParamRegistry::Entry& e : ckpt.params.entries()) {
        if (e.name.rfind(prefix, 0) != 0) continue;
        dst.add(e.name, e.value, /*frozen=*/true);
        ++copied;
    }
    if (copied == 0) {
        throw ConfigError("checkpoint lacks " + prefix + "* parameters");
    }
}

void check_pretrain_checkpoint(const Checkpoint& ckpt, Modality expected) {
    if (ckpt.meta_get("run.stage") != "pretrain") {
        throw ConfigError("expected a pretrain checkpoint for " + to_string(expected));
    }
    if (ckpt.meta_get("run.modality") != to_string(expected)) {
        throw ConfigError("checkpoint modality " + ckpt.meta_get("run.modality") +
                          " where " + to_string(expected) + " was expected");
    }
}

// Keys that determine an encoder's forward pass; the fine-tune run must use
// the same values its encoder checkpoints were trained with.
const std::vector<std::string>& arch_keys(Modality m) {
    static const std::vector<std::string> vision = {
        "data.frames", "data.frame_height", "data.frame_width", "vision.patch",
        "vision.d_model", "vision.d_ff", "vision.blocks", "vision.heads"};
    static const std::vector<std::string> audio = {
        "data.mel_bins", "data.time_frames", "audio.patch_f", "audio.patch_t",
        "audio.d_model", "audio.d_ff", "audio.blocks", "audio.heads"};
    static const std::vector<std::string> eeg = {
        "data.eeg_channels", "data.eeg_samples", "eeg.kernel", "eeg.stride",
        "eeg.d_model", "eeg.d_ff", "eeg.blocks", "eeg.heads"};
    switch (m) {
        case Modality::vision: return vision;
        case Modality::audio: return audio;
        case Modality::eeg: return eeg;
    }
    throw UsageError("unknown modality value");
}

void check_arch_match(const RunConfig& run, const RunConfig& ckpt_cfg, Modality m) {
    for (const std::string& key : arch_keys(m)) {
        if (run.get_raw(key) != ckpt_cfg.get_raw(key)) {
            throw ConfigError("fine-tune config " + key + " = " + run.get_raw(key) +
                              " differs from the " + to_string(m) + " checkpoint's " +
                              ckpt_cfg.get_raw(key));
        }
    }
}

}  // namespace

Checkpoint finetune_fusion(const std::vector<Trial>& trials, const Checkpoint& vision_ckpt,
                           const Checkpoint& audio_ckpt, const Checkpoint& eeg_ckpt,
                           const PipelineConfig& cfg) {
    check_pretrain_checkpoint(vision_ckpt, Modality::vision);
    check_pretrain_checkpoint(audio_ckpt, Modality::audio);
    check_pretrain_checkpoint(eeg_ckpt, Modality::eeg);

    const RunConfig vis_rc = vision_ckpt.config();
    const RunConfig aud_rc = audio_ckpt.config();
    const RunConfig eeg_rc = eeg_ckpt.config();
    const int d_vis = static_cast<int>(vis_rc.get_int("vision.d_model"));
    const int d_aud = static_cast<int>(aud_rc.get_int("audio.d_model"));
    const int d_eeg = static_cast<int>(eeg_rc.get_int("eeg.d_model"));
    if (d_vis != d_aud || d_vis != d_eeg) {
        throw ConfigError("d_model mismatch across encoder checkpoints: vision " +
                          std::to_string(d_vis) + ", audio " + std::to_string(d_aud) +
                          ", eeg " + std::to_string(d_eeg));
    }
    const RunConfig run_rc = RunConfig::from_lines(
        [&cfg] {
            std::vector<std::string> lines;
            for (const auto& [k, v] : cfg.echo) lines.push_back(k + " = " + v);
            return lines;
        }(),
        "fine-tune config");
    check_arch_match(run_rc, vis_rc, Modality::vision);
    check_arch_match(run_rc, aud_rc, Modality::audio);
    check_arch_match(run_rc, eeg_rc, Modality::eeg);

    const std::map<int, SplitIndices> by_subject =
        subject_split(trials, cfg.test_fraction, cfg.seed, /*require_all_modalities=*/true);
    if (by_subject.empty()) {
        throw DataError("fine-tune: no fully-multimodal (speaking) trial in the dataset");
    }
    const SplitView split = flatten_split(by_subject);

    ParamRegistry encoders;
    adopt_frozen_encoder(encoders, vision_ckpt, "vision.");
    adopt_frozen_encoder(encoders, audio_ckpt, "audio.");
    adopt_frozen_encoder(encoders, eeg_ckpt, "eeg.");

    // Frozen encoders make per-trial features constant; compute them once.
    const ParamLeaves enc_vals(nullptr, encoders);
    std::unordered_map<int, std::array<Tensor, 3>> features;
    auto cache_features = [&](const std::vector<int>& idx) {
        for (int i : idx) {
            const Trial& t = trials[static_cast<std::size_t>(i)];
            features.emplace(
                i, std::array<Tensor, 3>{
                       encode(enc_vals, Modality::vision, t, cfg).pooled,
                       encode(enc_vals, Modality::audio, t, cfg).pooled,
                       encode(enc_vals, Modality::eeg, t, cfg).pooled});
        }
    };
    cache_features(split.train);
    cache_features(split.test);

    FusionConfig fcfg = cfg.fusion;
    fcfg.d_model = d_vis;
    fcfg.classes = cfg.classes;
    ParamRegistry fusion_reg;
    Rng init_rng = Rng(cfg.seed).fork(kFusionInitStream);
    init_fusion_params(fusion_reg, fcfg, init_rng);

    auto sample_loss = [&](const ParamLeaves& vals, int idx) {
        const auto& [hv, ha, he] = features.at(idx);
        const Tensor logits = fusion_logits(vals, hv, ha, he, fcfg);
        return cross_entropy(reshape(logits, {1, fcfg.classes}),
                             {trials[static_cast<std::size_t>(idx)].label});
    };
    auto full_train_loss = [&]() {
        const ParamLeaves vals(nullptr, fusion_reg);
        double acc = 0.0;
        for (int i : split.train) acc += sample_loss(vals, i).item();
        return acc / static_cast<double>(split.train.size());
    };

    const AdamConfig adam{cfg.train.lr_finetune, cfg.train.adam_beta1, cfg.train.adam_beta2,
                          cfg.train.adam_eps};
    AdamState state(fusion_reg);
    Rng batch_rng = Rng(cfg.seed).fork(kFusionBatchStream);

    const double initial_loss = full_train_loss();
    double epoch1_loss = initial_loss;
    double final_loss = initial_loss;

    for (int epoch = 0; epoch < cfg.train.epochs_finetune; ++epoch) {
        std::vector<int> order = split.train;
        batch_rng.shuffle(order);
        double running = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.train.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
            Tape tape;
            const ParamLeaves leaves(&tape, fusion_reg);
            std::vector<Tensor> losses;
            losses.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                losses.push_back(sample_loss(leaves, order[k]));
            }
            const Tensor loss = batch_mean(std::move(losses));
            if (!std::isfinite(loss.item())) {
                throw DivergenceError("fine-tune: loss diverged at epoch " +
                                      std::to_string(epoch + 1));
            }
            const GradientMap grads = tape.backward(loss);
            adam_step(fusion_reg, collect_grads(fusion_reg, leaves, grads), state, adam);
            running += static_cast<double>(loss.item()) * static_cast<double>(end - start);
        }
        const double epoch_mean = running / static_cast<double>(order.size());
        if (!std::isfinite(epoch_mean)) {
            throw DivergenceError("fine-tune: mean loss diverged at epoch " +
                                  std::to_string(epoch + 1));
        }
        if (epoch == 0) epoch1_loss = full_train_loss();
        final_loss = epoch_mean;
    }

    // Metrics over the cached features, identical to a full re-encode
    // because the encoders are frozen.
    const ParamLeaves fvals(nullptr, fusion_reg);
    auto accuracy = [&](const std::vector<int>& idx) {
        int correct = 0;
        for (int i : idx) {
            const auto& [hv, ha, he] = features.at(i);
            const int pred = argmax_lowest(fusion_logits(fvals, hv, ha, he, fcfg));
            correct += pred == trials[static_cast<std::size_t>(i)].label;
        }
        return static_cast<double>(correct) / static_cast<double>(idx.size());
    };
    const double train_acc = accuracy(split.train);
    const double val_acc = accuracy(split.test);

    Checkpoint ckpt;
    ckpt.params = std::move(encoders);
    ckpt.params.merge(fusion_reg);
    append_run_header(ckpt, "finetune", "multimodal", cfg);
    ckpt.meta.emplace_back("run.train_acc", fmt_shortest(train_acc));
    ckpt.meta.emplace_back("run.val_acc", fmt_shortest(val_acc));
    ckpt.meta.emplace_back("run.initial_loss", fmt_shortest(initial_loss));
    ckpt.meta.emplace_back("run.epoch1_loss", fmt_shortest(epoch1_loss));
    ckpt.meta.emplace_back("run.final_loss", fmt_shortest(final_loss));
    append_config_echo(ckpt, cfg);
    return ckpt;
}

namespace {

int predict_with(const ParamLeaves& vals, const Checkpoint& ckpt, const Trial& trial,
                 const PipelineConfig& cfg) {
    const std::string& stage = ckpt.meta_get("run.stage");
    if (stage == "pretrain") {
        const Modality m = parse_modality(ckpt.meta_get("run.modality"));
        return argmax_lowest(unimodal_logits(vals, "head.", encode(vals, m, trial, cfg)));
    }
    if (stage == "finetune") {
        FusionConfig fcfg = cfg.fusion;
        fcfg.classes = cfg.classes;
        const Tensor hv = encode(vals, Modality::vision, trial, cfg).pooled;
        const Tensor ha = encode(vals, Modality::audio, trial, cfg).pooled;
        const Tensor he = encode(vals, Modality::eeg, trial, cfg).pooled;
        return argmax_lowest(fusion_logits(vals, hv, ha, he, fcfg));
    }
    throw DataError("checkpoint has unknown stage '" + stage + "'");
}

}  // namespace

double evaluate(const Checkpoint& ckpt, const std::vector<Trial>& split) {
    if (split.empty()) throw DataError("evaluate: empty split");
    const PipelineConfig cfg = PipelineConfig::from(ckpt.config());
    const ParamLeaves vals(nullptr, ckpt.params);
    int correct = 0;
    for (const Trial& t : split) {
        correct += predict_with(vals, ckpt, t, cfg) == t.label;
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

int predict(const Checkpoint& ckpt, const Trial& trial) {
    const PipelineConfig cfg = PipelineConfig::from(ckpt.config());
    const ParamLeaves vals(nullptr, ckpt.params);
    return predict_with(vals, ckpt, trial, cfg);
}

}  // namespace modfuse
