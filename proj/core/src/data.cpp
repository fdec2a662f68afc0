#include "modfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "modfuse/rng.hpp"
#include "modfuse/tensor_io.hpp"
#include "modfuse/text.hpp"

namespace modfuse {

const char* const kClassNames[kClasses] = {"anger", "sadness", "neutrality", "calmness",
                                           "happiness"};

namespace {

constexpr int kVisionGroup[kClasses] = {0, 0, 1, 1, 2};
constexpr int kAudioGroup[kClasses] = {0, 1, 0, 2, 1};
constexpr int kEegGroup[kClasses] = {0, 1, 1, 0, 2};
constexpr int kGroups = 3;

float group_weight(float informativeness) {
    return std::min(2.0f * informativeness, 1.0f);
}

float full_weight(float informativeness) {
    return std::max(2.0f * informativeness - 1.0f, 0.0f);
}

std::string subject_dir(int subject) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "sub%02d", subject);
    return buf;
}

std::string trial_stem(int trial) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "trial%03d", trial);
    return buf;
}

}  // namespace

int vision_group(int label) { return kVisionGroup[label]; }
int audio_group(int label) { return kAudioGroup[label]; }
int eeg_group(int label) { return kEegGroup[label]; }

void SynthConfig::validate() const {
    if (subjects < 1 || subjects > kMaxSubjects) {
        throw ConfigError("synth: subjects must be in 1.." + std::to_string(kMaxSubjects) +
                          ", got " + std::to_string(subjects));
    }
    if (trials_per_subject < 10 || trials_per_subject % 10 != 0) {
        throw ConfigError(
            "synth: trials_per_subject must be a positive multiple of 10 (5 balanced "
            "classes x speaking/listening), got " +
            std::to_string(trials_per_subject));
    }
    for (float inf : {informativeness_vision, informativeness_audio, informativeness_eeg}) {
        if (inf < 0.0f || inf > 1.0f) {
            throw ConfigError("synth: informativeness must be in [0,1]");
        }
    }
    if (noise_sigma < 0.0f) throw ConfigError("synth: noise_sigma must be >= 0");
    if (subject_effect < 0.0f) throw ConfigError("synth: subject_effect must be >= 0");
    for (int d : {eeg_channels, eeg_samples, frames, frame_height, frame_width, mel_bins,
                  time_frames}) {
        if (d < 1) throw ConfigError("synth: tensor dimensions must be >= 1");
    }
}

std::string SynthConfig::hash() const {
    std::ostringstream os;
    os << "subjects=" << subjects << ";trials=" << trials_per_subject
       << ";inf_v=" << fmt_shortest(informativeness_vision)
       << ";inf_a=" << fmt_shortest(informativeness_audio)
       << ";inf_e=" << fmt_shortest(informativeness_eeg)
       << ";sigma=" << fmt_shortest(noise_sigma)
       << ";subject_effect=" << fmt_shortest(subject_effect) << ";C=" << eeg_channels
       << ";T=" << eeg_samples << ";N=" << frames << ";H=" << frame_height
       << ";W=" << frame_width << ";F=" << mel_bins << ";Ta=" << time_frames;
    return to_hex(fnv1a64(os.str()));
}

namespace {

struct Templates {
    // EEG: per-channel phases; the class identity lives in the frequency.
    std::vector<float> eeg_label_phase;  // [kClasses x C]
    std::vector<float> eeg_group_phase;  // [kGroups x C]
    // Vision: spatial intensity templates.
    std::vector<Tensor> frame_label;  // kClasses x [H x W]
    std::vector<Tensor> frame_group;  // kGroups x [H x W]
    // Audio: per-mel-bin band energies, tiled over time.
    std::vector<Tensor> band_label;  // kClasses x [F]
    std::vector<Tensor> band_group;  // kGroups x [F]
};

Templates draw_templates(const SynthConfig& cfg, Rng rng) {
    Templates t;
    t.eeg_label_phase.resize(static_cast<std::size_t>(kClasses) * cfg.eeg_channels);
    for (float& p : t.eeg_label_phase) {
        p = rng.uniform(0.0f, 2.0f * static_cast<float>(std::numbers::pi));
    }
    t.eeg_group_phase.resize(static_cast<std::size_t>(kGroups) * cfg.eeg_channels);
    for (float& p : t.eeg_group_phase) {
        p = rng.uniform(0.0f, 2.0f * static_cast<float>(std::numbers::pi));
    }
    for (int l = 0; l < kClasses; ++l) {
        t.frame_label.push_back(
            Tensor::normal(rng, {cfg.frame_height, cfg.frame_width}, 0.5f));
    }
    for (int g = 0; g < kGroups; ++g) {
        t.frame_group.push_back(
            Tensor::normal(rng, {cfg.frame_height, cfg.frame_width}, 0.5f));
    }
    for (int l = 0; l < kClasses; ++l) {
        t.band_label.push_back(Tensor::normal(rng, {cfg.mel_bins}, 0.5f));
    }
    for (int g = 0; g < kGroups; ++g) {
        t.band_group.push_back(Tensor::normal(rng, {cfg.mel_bins}, 0.5f));
    }
    return t;
}

struct SubjectEffect {
    Tensor eeg_offset;    // [C]
    float frame_offset;   // scalar intensity shift
    Tensor band_offset;   // [F]
};

Tensor make_eeg(const SynthConfig& cfg, const Templates& tpl, const SubjectEffect& subj,
                int label, Rng& rng) {
    const float gw = group_weight(cfg.informativeness_eeg);
    const float fw = full_weight(cfg.informativeness_eeg);
    const float noise = cfg.noise_sigma * (1.0f - cfg.informativeness_eeg);
    const int g = kEegGroup[label];
    const float f_label = 2.0f + 2.0f * static_cast<float>(label);
    const float f_group = 3.0f + 2.0f * static_cast<float>(g);
    const float tau = 2.0f * static_cast<float>(std::numbers::pi);

    Tensor out({cfg.eeg_channels, cfg.eeg_samples});
    for (int c = 0; c < cfg.eeg_channels; ++c) {
        const float base = cfg.subject_effect * subj.eeg_offset.values()[static_cast<std::size_t>(c)];
        const float pl = tpl.eeg_label_phase[static_cast<std::size_t>(label) * cfg.eeg_channels + c];
        const float pg = tpl.eeg_group_phase[static_cast<std::size_t>(g) * cfg.eeg_channels + c];
        float* row = out.values().data() + static_cast<std::size_t>(c) * cfg.eeg_samples;
        for (int s = 0; s < cfg.eeg_samples; ++s) {
            const float phase = tau * static_cast<float>(s) / static_cast<float>(cfg.eeg_samples);
            row[s] = base + fw * std::sin(f_label * phase + pl) +
                     gw * std::sin(f_group * phase + pg) + noise * rng.normal();
        }
    }
    return out;
}

Tensor make_frames(const SynthConfig& cfg, const Templates& tpl, const SubjectEffect& subj,
                   int label, Rng& rng) {
    const float gw = group_weight(cfg.informativeness_vision);
    const float fw = full_weight(cfg.informativeness_vision);
    const float noise = cfg.noise_sigma * (1.0f - cfg.informativeness_vision);
    const Tensor& lt = tpl.frame_label[static_cast<std::size_t>(label)];
    const Tensor& gt = tpl.frame_group[static_cast<std::size_t>(kVisionGroup[label])];
    const float base = cfg.subject_effect * subj.frame_offset;

    Tensor out({cfg.frames, cfg.frame_height, cfg.frame_width});
    const std::size_t frame_px =
        static_cast<std::size_t>(cfg.frame_height) * cfg.frame_width;
    for (int k = 0; k < cfg.frames; ++k) {
        float* dst = out.values().data() + static_cast<std::size_t>(k) * frame_px;
        for (std::size_t i = 0; i < frame_px; ++i) {
            dst[i] = base + fw * lt.values()[i] + gw * gt.values()[i] + noise * rng.normal();
        }
    }
    return out;
}

Tensor make_spectrogram(const SynthConfig& cfg, const Templates& tpl,
                        const SubjectEffect& subj, int label, Rng& rng) {
    const float gw = group_weight(cfg.informativeness_audio);
    const float fw = full_weight(cfg.informativeness_audio);
    const float noise = cfg.noise_sigma * (1.0f - cfg.informativeness_audio);
    const Tensor& lt = tpl.band_label[static_cast<std::size_t>(label)];
    const Tensor& gt = tpl.band_group[static_cast<std::size_t>(kAudioGroup[label])];

    Tensor out({cfg.mel_bins, cfg.time_frames});
    for (int f = 0; f < cfg.mel_bins; ++f) {
        const float band = cfg.subject_effect * subj.band_offset.values()[static_cast<std::size_t>(f)] +
                           fw * lt.values()[static_cast<std::size_t>(f)] +
                           gt.values()[static_cast<std::size_t>(f)] * gw;
        float* row = out.values().data() + static_cast<std::size_t>(f) * cfg.time_frames;
        for (int s = 0; s < cfg.time_frames; ++s) {
            row[s] = band + noise * rng.normal();
        }
    }
    return out;
}

}  // namespace

DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());

    const Rng master(cfg.seed);
    const Templates tpl = draw_templates(cfg, master.fork(1));

    Rng subject_rng = master.fork(2);
    std::vector<SubjectEffect> effects;
    effects.reserve(static_cast<std::size_t>(cfg.subjects));
    for (int s = 0; s < cfg.subjects; ++s) {
        SubjectEffect e;
        e.eeg_offset = Tensor::normal(subject_rng, {cfg.eeg_channels}, 1.0f);
        e.frame_offset = subject_rng.normal();
        e.band_offset = Tensor::normal(subject_rng, {cfg.mel_bins}, 1.0f);
        effects.push_back(std::move(e));
    }

    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.seed = cfg.seed;
    manifest.config_hash = cfg.hash();

    for (int s = 1; s <= cfg.subjects; ++s) {
        const std::string sdir = subject_dir(s);
        std::filesystem::create_directories(out_dir / sdir, ec);
        if (ec) {
            throw IoError("cannot create directory " + (out_dir / sdir).string() + ": " +
                          ec.message());
        }
        for (int t = 0; t < cfg.trials_per_subject; ++t) {
            const int label = t % kClasses;
            const bool speaking = (t % 2) == 0;
            Rng trial_rng = master.fork(1000000ULL +
                                        static_cast<std::uint64_t>(s - 1) *
                                            static_cast<std::uint64_t>(cfg.trials_per_subject) +
                                        static_cast<std::uint64_t>(t));

            TrialRecord rec;
            rec.subject = s;
            rec.trial = t;
            rec.label = label;
            rec.is_speaking = speaking;
            rec.eeg_path = sdir + "/" + trial_stem(t) + ".eeg.mft";
            rec.frames_path = sdir + "/" + trial_stem(t) + ".frm.mft";

            save_tensor(out_dir / rec.eeg_path,
                        make_eeg(cfg, tpl, effects[static_cast<std::size_t>(s - 1)], label,
                                 trial_rng));
            save_tensor(out_dir / rec.frames_path,
                        make_frames(cfg, tpl, effects[static_cast<std::size_t>(s - 1)],
                                    label, trial_rng));
            if (speaking) {
                rec.spectrogram_path = sdir + "/" + trial_stem(t) + ".spc.mft";
                save_tensor(out_dir / rec.spectrogram_path,
                            make_spectrogram(cfg, tpl,
                                             effects[static_cast<std::size_t>(s - 1)],
                                             label, trial_rng));
            }
            manifest.records.push_back(std::move(rec));
        }
    }

    const std::filesystem::path manifest_path = out_dir / "manifest.txt";
    std::ofstream f(manifest_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + manifest_path.string());
    f << "# modfuse synthetic dataset\n";
    f << "# seed = " << manifest.seed << "\n";
    f << "# config_hash = " << manifest.config_hash << "\n";
    for (const TrialRecord& r : manifest.records) {
        f << r.subject << ',' << r.trial << ',' << r.label << ',' << (r.is_speaking ? 1 : 0)
          << ',' << r.eeg_path << ',' << r.frames_path << ','
          << (r.spectrogram_path.empty() ? "-" : r.spectrogram_path) << '\n';
    }
    if (!f) throw IoError("write failed for " + manifest_path.string());
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open " + manifest_path.string());

    DatasetManifest manifest;
    manifest.root = manifest_path.parent_path();

    std::set<std::pair<int, int>> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (stripped[0] == '#') {
            // Provenance header, e.g. "# seed = 7".
            const std::size_t eq = stripped.find('=');
            if (eq != std::string::npos) {
                const std::string key = trim(stripped.substr(1, eq - 1));
                const std::string val = trim(stripped.substr(eq + 1));
                if (key == "seed") {
                    manifest.seed =
                        static_cast<std::uint64_t>(parse_int(val, where));
                } else if (key == "config_hash") {
                    manifest.config_hash = val;
                }
            }
            continue;
        }

        const std::vector<std::string> cols = split(stripped, ',');
        if (cols.size() != 7) {
            throw DataError(where + ": expected 7 comma-separated fields, got " +
                            std::to_string(cols.size()));
        }
        TrialRecord rec;
        rec.subject = static_cast<int>(parse_int(cols[0], where));
        rec.trial = static_cast<int>(parse_int(cols[1], where));
        rec.label = static_cast<int>(parse_int(cols[2], where));
        const long long speaking = parse_int(cols[3], where);
        rec.eeg_path = cols[4];
        rec.frames_path = cols[5];
        rec.spectrogram_path = cols[6] == "-" ? "" : cols[6];

        if (rec.subject < 1 || rec.subject > kMaxSubjects) {
            throw DataError(where + ": subject " + std::to_string(rec.subject) +
                            " out of range 1.." + std::to_string(kMaxSubjects));
        }
        if (rec.label < 0 || rec.label >= kClasses) {
            throw DataError(where + ": label " + std::to_string(rec.label) +
                            " out of range 0.." + std::to_string(kClasses - 1));
        }
        if (speaking != 0 && speaking != 1) {
            throw DataError(where + ": is_speaking must be 0 or 1");
        }
        rec.is_speaking = speaking == 1;
        if (rec.is_speaking && rec.spectrogram_path.empty()) {
            throw DataError(where + ": speaking trial lacks a spectrogram");
        }
        if (!rec.is_speaking && !rec.spectrogram_path.empty()) {
            throw DataError(where + ": listening trial must not have a spectrogram");
        }
        if (rec.eeg_path.empty() || rec.frames_path.empty()) {
            throw DataError(where + ": eeg and frames paths are required");
        }
        if (!seen.insert({rec.subject, rec.trial}).second) {
            throw DataError(where + ": duplicate trial " + std::to_string(rec.trial) +
                            " for subject " + std::to_string(rec.subject));
        }
        manifest.records.push_back(std::move(rec));
    }
    return manifest;
}

std::vector<Trial> load_dataset(const std::filesystem::path& manifest_path, int subject) {
    const DatasetManifest manifest = load_manifest(manifest_path);

    std::vector<Trial> trials;
    std::vector<int> eeg_shape, frames_shape, spec_shape;
    for (const TrialRecord& rec : manifest.records) {
        if (subject != -1 && rec.subject != subject) continue;
        const std::string where = "subject " + std::to_string(rec.subject) + " trial " +
                                  std::to_string(rec.trial);

        Trial tr;
        tr.subject_id = rec.subject;
        tr.trial_id = rec.trial;
        tr.label = rec.label;
        tr.is_speaking = rec.is_speaking;
        tr.eeg = load_tensor(manifest.root / rec.eeg_path);
        tr.frames = load_tensor(manifest.root / rec.frames_path);
        if (tr.eeg.rank() != 2) {
            throw DataError(where + ": eeg tensor must be rank 2, got " +
                            shape_str(tr.eeg.shape()));
        }
        if (tr.frames.rank() != 3) {
            throw DataError(where + ": frames tensor must be rank 3, got " +
                            shape_str(tr.frames.shape()));
        }
        if (eeg_shape.empty()) {
            eeg_shape = tr.eeg.shape();
            frames_shape = tr.frames.shape();
        } else {
            if (tr.eeg.shape() != eeg_shape) {
                throw DataError(where + ": eeg shape " + shape_str(tr.eeg.shape()) +
                                " differs from " + shape_str(eeg_shape));
            }
            if (tr.frames.shape() != frames_shape) {
                throw DataError(where + ": frames shape " + shape_str(tr.frames.shape()) +
                                " differs from " + shape_str(frames_shape));
            }
        }
        if (rec.is_speaking) {
            Tensor spec = load_tensor(manifest.root / rec.spectrogram_path);
            if (spec.rank() != 2) {
                throw DataError(where + ": spectrogram must be rank 2, got " +
                                shape_str(spec.shape()));
            }
            if (spec_shape.empty()) {
                spec_shape = spec.shape();
            } else if (spec.shape() != spec_shape) {
                throw DataError(where + ": spectrogram shape " + shape_str(spec.shape()) +
                                " differs from " + shape_str(spec_shape));
            }
            tr.spectrogram = std::move(spec);
        }
        trials.push_back(std::move(tr));
    }
    return trials;
}

std::map<int, SplitIndices> subject_split(const std::vector<Trial>& trials,
                                          float test_fraction, std::uint64_t seed,
                                          bool require_all_modalities) {
    if (!(test_fraction > 0.0f) || !(test_fraction < 1.0f)) {
        throw UsageError("subject_split: test_fraction must be in (0, 1)");
    }

    // subject -> class -> trial indices, in input order.
    std::map<int, std::vector<std::vector<int>>> by_subject;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const Trial& tr = trials[i];
        if (require_all_modalities && !tr.spectrogram.has_value()) continue;
        auto it = by_subject.find(tr.subject_id);
        if (it == by_subject.end()) {
            it = by_subject.emplace(tr.subject_id, std::vector<std::vector<int>>(kClasses))
                     .first;
        }
        it->second[static_cast<std::size_t>(tr.label)].push_back(static_cast<int>(i));
    }

    const Rng base(seed);
    std::map<int, SplitIndices> out;
    for (auto& [subject, classes] : by_subject) {
        Rng rng = base.fork(static_cast<std::uint64_t>(subject));
        SplitIndices split;
        for (int label = 0; label < kClasses; ++label) {
            std::vector<int>& group = classes[static_cast<std::size_t>(label)];
            const int n = static_cast<int>(group.size());
            const int n_test = static_cast<int>(
                std::llround(static_cast<double>(n) * static_cast<double>(test_fraction)));
            if (n < 2 || n_test < 1 || n_test >= n) {
                throw DataError("subject " + std::to_string(subject) + ": class " +
                                std::to_string(label) + " has " + std::to_string(n) +
                                " trials, cannot place at least one on each side of the "
                                "split");
            }
            rng.shuffle(group);
            split.test.insert(split.test.end(), group.begin(), group.begin() + n_test);
            split.train.insert(split.train.end(), group.begin() + n_test, group.end());
        }
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.test.begin(), split.test.end());
        out.emplace(subject, std::move(split));
    }
    return out;
}

}  // namespace modfuse
