#include "modfuse/pipeline.hpp"

namespace modfuse {

void TrainSettings::validate() const {
    if (epochs_pretrain < 1 || epochs_finetune < 1) {
        throw ConfigError("train: epochs must be >= 1");
    }
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr_pretrain > 0.0f) || !(lr_finetune > 0.0f)) {
        throw ConfigError("train: learning rates must be > 0");
    }
    if (!(adam_beta1 >= 0.0f && adam_beta1 < 1.0f) ||
        !(adam_beta2 >= 0.0f && adam_beta2 < 1.0f)) {
        throw ConfigError("train: adam betas must be in [0, 1)");
    }
    if (!(adam_eps > 0.0f)) throw ConfigError("train: adam_eps must be > 0");
}

PipelineConfig PipelineConfig::from(const RunConfig& rc) {
    PipelineConfig p;
    p.seed = rc.get_u64("seed");
    p.classes = static_cast<int>(rc.get_int("classes"));
    if (p.classes < 2) throw ConfigError("classes must be >= 2");

    p.synth.subjects = static_cast<int>(rc.get_int("synth.subjects"));
    p.synth.trials_per_subject = static_cast<int>(rc.get_int("synth.trials_per_subject"));
    p.synth.informativeness_vision =
        static_cast<float>(rc.get_float("synth.informativeness_vision"));
    p.synth.informativeness_audio =
        static_cast<float>(rc.get_float("synth.informativeness_audio"));
    p.synth.informativeness_eeg =
        static_cast<float>(rc.get_float("synth.informativeness_eeg"));
    p.synth.noise_sigma = static_cast<float>(rc.get_float("synth.noise_sigma"));
    p.synth.subject_effect = static_cast<float>(rc.get_float("synth.subject_effect"));
    p.synth.eeg_channels = static_cast<int>(rc.get_int("data.eeg_channels"));
    p.synth.eeg_samples = static_cast<int>(rc.get_int("data.eeg_samples"));
    p.synth.frames = static_cast<int>(rc.get_int("data.frames"));
    p.synth.frame_height = static_cast<int>(rc.get_int("data.frame_height"));
    p.synth.frame_width = static_cast<int>(rc.get_int("data.frame_width"));
    p.synth.mel_bins = static_cast<int>(rc.get_int("data.mel_bins"));
    p.synth.time_frames = static_cast<int>(rc.get_int("data.time_frames"));
    p.synth.seed = p.seed;

    p.vision.frames = p.synth.frames;
    p.vision.height = p.synth.frame_height;
    p.vision.width = p.synth.frame_width;
    p.vision.patch = static_cast<int>(rc.get_int("vision.patch"));
    p.vision.d_model = static_cast<int>(rc.get_int("vision.d_model"));
    p.vision.d_ff = static_cast<int>(rc.get_int("vision.d_ff"));
    p.vision.blocks = static_cast<int>(rc.get_int("vision.blocks"));
    p.vision.heads = static_cast<int>(rc.get_int("vision.heads"));

    p.audio.mel_bins = p.synth.mel_bins;
    p.audio.time_frames = p.synth.time_frames;
    p.audio.patch_f = static_cast<int>(rc.get_int("audio.patch_f"));
    p.audio.patch_t = static_cast<int>(rc.get_int("audio.patch_t"));
    p.audio.d_model = static_cast<int>(rc.get_int("audio.d_model"));
    p.audio.d_ff = static_cast<int>(rc.get_int("audio.d_ff"));
    p.audio.blocks = static_cast<int>(rc.get_int("audio.blocks"));
    p.audio.heads = static_cast<int>(rc.get_int("audio.heads"));

    p.eeg.channels = p.synth.eeg_channels;
    p.eeg.samples = p.synth.eeg_samples;
    p.eeg.kernel = static_cast<int>(rc.get_int("eeg.kernel"));
    p.eeg.stride = static_cast<int>(rc.get_int("eeg.stride"));
    p.eeg.d_model = static_cast<int>(rc.get_int("eeg.d_model"));
    p.eeg.d_ff = static_cast<int>(rc.get_int("eeg.d_ff"));
    p.eeg.blocks = static_cast<int>(rc.get_int("eeg.blocks"));
    p.eeg.heads = static_cast<int>(rc.get_int("eeg.heads"));

    p.fusion.d_fuse = static_cast<int>(rc.get_int("fusion.d_fuse"));
    p.fusion.heads = static_cast<int>(rc.get_int("fusion.heads"));
    p.fusion.hidden = static_cast<int>(rc.get_int("fusion.hidden"));
    p.fusion.classes = p.classes;
    p.fusion.d_model = p.vision.d_model;  // overridden from checkpoints at stage 2

    p.train.epochs_pretrain = static_cast<int>(rc.get_int("train.epochs_pretrain"));
    p.train.epochs_finetune = static_cast<int>(rc.get_int("train.epochs_finetune"));
    p.train.batch_size = static_cast<int>(rc.get_int("train.batch_size"));
    p.train.lr_pretrain = static_cast<float>(rc.get_float("train.lr_pretrain"));
    p.train.lr_finetune = static_cast<float>(rc.get_float("train.lr_finetune"));
    p.train.adam_beta1 = static_cast<float>(rc.get_float("train.adam_beta1"));
    p.train.adam_beta2 = static_cast<float>(rc.get_float("train.adam_beta2"));
    p.train.adam_eps = static_cast<float>(rc.get_float("train.adam_eps"));
    p.train.validate();

    p.test_fraction = static_cast<float>(rc.get_float("split.test_fraction"));
    if (!(p.test_fraction > 0.0f) || !(p.test_fraction < 1.0f)) {
        throw ConfigError("split.test_fraction must be in (0, 1)");
    }

    p.echo = rc.echo();
    return p;
}

}  // namespace modfuse
