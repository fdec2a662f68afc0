#include "modfuse/run_config.hpp"

#include <fstream>

#include "modfuse/text.hpp"

namespace modfuse {

const std::vector<KeySpec>& run_config_keys() {
    static const std::vector<KeySpec> keys = {
        {"seed", KeyType::Uint64, "0", "master seed for synthesis, init, and splits"},
        {"classes", KeyType::Int, "5", "number of emotion classes"},

        {"synth.subjects", KeyType::Int, "42", "subjects to synthesize (1..42)"},
        {"synth.trials_per_subject", KeyType::Int, "200",
         "trials per subject, multiple of 10, half speaking"},
        {"synth.informativeness_vision", KeyType::Float, "0.5",
         "label signal carried by frames, 0..1"},
        {"synth.informativeness_audio", KeyType::Float, "0.5",
         "label signal carried by spectrograms, 0..1"},
        {"synth.informativeness_eeg", KeyType::Float, "0.5",
         "label signal carried by EEG, 0..1"},
        {"synth.noise_sigma", KeyType::Float, "0.25", "generator noise scale"},
        {"synth.subject_effect", KeyType::Float, "0.3", "subject-specific offset strength"},

        {"data.eeg_channels", KeyType::Int, "30", "EEG channels C"},
        {"data.eeg_samples", KeyType::Int, "200", "EEG samples per trial T"},
        {"data.frames", KeyType::Int, "4", "video frames per trial N"},
        {"data.frame_height", KeyType::Int, "32", "frame height H"},
        {"data.frame_width", KeyType::Int, "32", "frame width W"},
        {"data.mel_bins", KeyType::Int, "16", "spectrogram mel bins F"},
        {"data.time_frames", KeyType::Int, "32", "spectrogram time frames T_a"},

        {"vision.patch", KeyType::Int, "8", "vision patch size P"},
        {"vision.d_model", KeyType::Int, "64", "vision encoder width"},
        {"vision.d_ff", KeyType::Int, "128", "vision feed-forward width"},
        {"vision.blocks", KeyType::Int, "2", "vision transformer blocks"},
        {"vision.heads", KeyType::Int, "4", "vision attention heads"},

        {"audio.patch_f", KeyType::Int, "8", "audio patch size over mel bins"},
        {"audio.patch_t", KeyType::Int, "8", "audio patch size over time"},
        {"audio.d_model", KeyType::Int, "64", "audio encoder width"},
        {"audio.d_ff", KeyType::Int, "128", "audio feed-forward width"},
        {"audio.blocks", KeyType::Int, "2", "audio transformer blocks"},
        {"audio.heads", KeyType::Int, "4", "audio attention heads"},

        {"eeg.kernel", KeyType::Int, "11", "EEG depthwise conv kernel K"},
        {"eeg.stride", KeyType::Int, "10", "EEG depthwise conv stride S"},
        {"eeg.d_model", KeyType::Int, "64", "EEG encoder width"},
        {"eeg.d_ff", KeyType::Int, "128", "EEG feed-forward width"},
        {"eeg.blocks", KeyType::Int, "2", "EEG transformer blocks"},
        {"eeg.heads", KeyType::Int, "4", "EEG attention heads"},

        {"fusion.d_fuse", KeyType::Int, "64", "fusion token width"},
        {"fusion.heads", KeyType::Int, "4", "fusion attention heads"},
        {"fusion.hidden", KeyType::Int, "128", "fusion classifier hidden width"},

        {"train.epochs_pretrain", KeyType::Int, "30", "stage-1 epochs"},
        {"train.epochs_finetune", KeyType::Int, "30", "stage-2 epochs"},
        {"train.batch_size", KeyType::Int, "16", "mini-batch size"},
        {"train.lr_pretrain", KeyType::Float, "0.001", "stage-1 Adam learning rate"},
        {"train.lr_finetune", KeyType::Float, "0.0005", "stage-2 Adam learning rate"},
        {"train.adam_beta1", KeyType::Float, "0.9", "Adam beta1"},
        {"train.adam_beta2", KeyType::Float, "0.999", "Adam beta2"},
        {"train.adam_eps", KeyType::Float, "1e-8", "Adam epsilon"},

        {"split.test_fraction", KeyType::Float, "0.2", "held-out fraction per subject"},
    };
    return keys;
}

namespace {

const KeySpec* find_key(const std::string& name) {
    for (const KeySpec& k : run_config_keys()) {
        if (name == k.name) return &k;
    }
    return nullptr;
}

void validate_value(const KeySpec& spec, const std::string& value,
                    const std::string& where) {
    try {
        switch (spec.type) {
            case KeyType::Int:
                parse_int(value, where);
                break;
            case KeyType::Float:
                parse_float(value, where);
                break;
            case KeyType::Uint64: {
                const long long v = parse_int(value, where);
                if (v < 0) throw DataError(where + ": value must be non-negative");
                break;
            }
        }
    } catch (const DataError& e) {
        throw ConfigError(std::string(e.what()) + " (key '" + spec.name + "')");
    }
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    for (const KeySpec& k : run_config_keys()) {
        cfg.values_[k.name] = k.default_value;
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value,
                    const std::string& where) {
    const KeySpec* spec = find_key(key);
    if (spec == nullptr) {
        throw ConfigError(where + ": unknown key '" + key + "'");
    }
    validate_value(*spec, value, where);
    values_[key] = value;
    explicit_.insert(key);
}

RunConfig RunConfig::from_lines(const std::vector<std::string>& lines,
                                const std::string& origin) {
    RunConfig cfg = defaults();
    std::set<std::string> seen;
    int line_no = 0;
    for (const std::string& raw : lines) {
        ++line_no;
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::string where = origin + ":" + std::to_string(line_no);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(where + ": expected 'key = value'");
        }
        if (!seen.insert(key).second) {
            throw ConfigError(where + ": duplicate key '" + key + "'");
        }
        cfg.set(key, value, where);
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return from_lines(lines, path.string());
}

const std::string& RunConfig::get_raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw UsageError("unknown config key '" + key + "'");
    }
    return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
    return parse_int(get_raw(key), "config key " + key);
}

double RunConfig::get_float(const std::string& key) const {
    return parse_float(get_raw(key), "config key " + key);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    return static_cast<std::uint64_t>(get_int(key));
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(run_config_keys().size());
    for (const KeySpec& k : run_config_keys()) {
        out.emplace_back(k.name, values_.at(k.name));
    }
    return out;
}

}  // namespace modfuse
