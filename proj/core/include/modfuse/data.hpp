#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modfuse/tensor.hpp"

namespace modfuse {

inline constexpr int kClasses = 5;
inline constexpr int kMaxSubjects = 42;

// Emotion labels: anger=0, sadness=1, neutrality=2, calmness=3, happiness=4.
extern const char* const kClassNames[kClasses];

// One 20-second interaction. The spectrogram exists exactly for speaking
// trials; listening trials have no audio.
struct Trial {
    int subject_id = 0;  // 1..42
    int trial_id = 0;
    int label = 0;  // 0..4
    bool is_speaking = false;
    Tensor eeg;     // [C x T]
    Tensor frames;  // [N x H x W]
    std::optional<Tensor> spectrogram;  // [F x T_a] iff is_speaking
};

// One manifest row; paths are relative to the manifest's directory.
struct TrialRecord {
    int subject = 0;
    int trial = 0;
    int label = 0;
    bool is_speaking = false;
    std::string eeg_path;
    std::string frames_path;
    std::string spectrogram_path;  // empty for listening trials
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<TrialRecord> records;
    std::uint64_t seed = 0;
    std::string config_hash;  // present for synthetic datasets
};

// Synthetic generator configuration. Informativeness in [0, 1] controls how
// much label signal a modality carries: up to 0.5 the signal encodes only
// that modality's class-group (a disjoint share of the label information,
// jointly sufficient across the three modalities); beyond 0.5 a full
// per-class template ramps in, reaching linear separability at 1. Noise is
// sigma * (1 - informativeness).
struct SynthConfig {
    int subjects = 42;
    int trials_per_subject = 200;  // multiple of 10; half speaking
    float informativeness_vision = 0.5f;
    float informativeness_audio = 0.5f;
    float informativeness_eeg = 0.5f;
    float noise_sigma = 0.25f;
    float subject_effect = 0.3f;
    int eeg_channels = 30;
    int eeg_samples = 200;
    int frames = 4;
    int frame_height = 32;
    int frame_width = 32;
    int mel_bins = 16;
    int time_frames = 32;
    std::uint64_t seed = 0;

    void validate() const;
    std::string hash() const;  // hex digest of the geometry/knob fields
};

// Class-group partitions, one per modality; (g_v, g_a, g_e) identifies the
// label uniquely while each partition alone caps accuracy at 60%.
int vision_group(int label);
int audio_group(int label);
int eeg_group(int label);

// Writes root/subXX/trialYYY.{eeg,frm,spc}.mft plus manifest.txt; byte-level
// deterministic in the seed.
DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir);

// Structural parse of a manifest file (no tensor loading).
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

// Loads trials (optionally one subject only), validating tensors and the
// Trial invariants. Shapes must be consistent across the loaded set.
std::vector<Trial> load_dataset(const std::filesystem::path& manifest_path,
                                int subject = -1);

struct SplitIndices {
    std::vector<int> train;
    std::vector<int> test;
};

// Per-subject stratified split. With require_all_modalities, listening
// trials are excluded before splitting. Deterministic in (input order, seed).
std::map<int, SplitIndices> subject_split(const std::vector<Trial>& trials,
                                          float test_fraction, std::uint64_t seed,
                                          bool require_all_modalities);

}  // namespace modfuse
