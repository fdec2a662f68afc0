// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits non-zero if any fail.
//
// Usage: modfuse_acceptance --cli /path/to/modfuse [--workdir DIR]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "modfuse/data.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/nn.hpp"
#include "modfuse/ops.hpp"
#include "modfuse/pipeline.hpp"
#include "modfuse/report.hpp"
#include "modfuse/train.hpp"

#include "../reference_table.hpp"
#include "../test_helpers.hpp"

using namespace modfuse;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> g_failures;

void detail(const std::string& msg) { g_failures.push_back(msg); }

bool expect(bool ok, const std::string& msg) {
    if (!ok) detail(msg);
    return ok;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

// ---------------------------------------------------------------- config ---

const char* kTinyConfig =
    "seed = 5\n"
    "synth.subjects = 1\n"
    "synth.trials_per_subject = 40\n"
    "data.eeg_channels = 6\n"
    "data.eeg_samples = 30\n"
    "data.frames = 2\n"
    "data.frame_height = 8\n"
    "data.frame_width = 8\n"
    "data.mel_bins = 8\n"
    "data.time_frames = 8\n"
    "vision.patch = 4\n"
    "vision.d_model = 16\n"
    "vision.d_ff = 24\n"
    "vision.blocks = 1\n"
    "vision.heads = 2\n"
    "audio.patch_f = 4\n"
    "audio.patch_t = 4\n"
    "audio.d_model = 16\n"
    "audio.d_ff = 24\n"
    "audio.blocks = 1\n"
    "audio.heads = 2\n"
    "eeg.kernel = 5\n"
    "eeg.stride = 5\n"
    "eeg.d_model = 16\n"
    "eeg.d_ff = 24\n"
    "eeg.blocks = 1\n"
    "eeg.heads = 2\n"
    "fusion.d_fuse = 16\n"
    "fusion.heads = 2\n"
    "fusion.hidden = 24\n"
    "train.epochs_pretrain = 4\n"
    "train.epochs_finetune = 4\n"
    "train.batch_size = 8\n";

RunConfig advantage_config(std::uint64_t seed) {
    RunConfig rc = RunConfig::defaults();
    rc.set("seed", std::to_string(seed));
    rc.set("synth.subjects", "1");
    rc.set("synth.trials_per_subject", "300");
    rc.set("synth.informativeness_vision", "0.5");
    rc.set("synth.informativeness_audio", "0.5");
    rc.set("synth.informativeness_eeg", "0.5");
    rc.set("data.eeg_channels", "16");
    rc.set("data.eeg_samples", "100");
    rc.set("data.frames", "2");
    rc.set("data.frame_height", "16");
    rc.set("data.frame_width", "16");
    rc.set("data.mel_bins", "16");
    rc.set("data.time_frames", "16");
    rc.set("vision.patch", "8");
    rc.set("vision.d_model", "32");
    rc.set("vision.d_ff", "64");
    rc.set("vision.blocks", "1");
    rc.set("vision.heads", "4");
    rc.set("audio.patch_f", "8");
    rc.set("audio.patch_t", "8");
    rc.set("audio.d_model", "32");
    rc.set("audio.d_ff", "64");
    rc.set("audio.blocks", "1");
    rc.set("audio.heads", "4");
    rc.set("eeg.kernel", "11");
    rc.set("eeg.stride", "10");
    rc.set("eeg.d_model", "32");
    rc.set("eeg.d_ff", "64");
    rc.set("eeg.blocks", "1");
    rc.set("eeg.heads", "4");
    rc.set("fusion.d_fuse", "32");
    rc.set("fusion.heads", "4");
    rc.set("fusion.hidden", "64");
    rc.set("train.epochs_pretrain", "30");
    rc.set("train.epochs_finetune", "40");
    rc.set("train.batch_size", "16");
    return rc;
}

// ------------------------------------------------------------ criterion 1 --

bool aggregation_fidelity(const fs::path& work) {
    std::ostringstream metrics;
    for (const testutil::ReferenceRow& r : testutil::kReferenceRows) {
        metrics << r.subject << ",vision,0," << r.vision / 100.0 << "\n"
                << r.subject << ",audio,0," << r.audio / 100.0 << "\n"
                << r.subject << ",eeg,0," << r.eeg / 100.0 << "\n"
                << r.subject << ",multimodal,0," << r.multimodal / 100.0 << "\n";
    }
    const fs::path file = work / "reference_metrics.csv";
    testutil::write_file(file, metrics.str());

    const auto res = testutil::run_cli("report --metrics " + q(file.string()));
    bool ok = expect(res.code == 0, "report exited with " + std::to_string(res.code));
    ok &= expect(res.out.find("Avg.,67.22,58.17,53.51,70.86,Multimodal") != std::string::npos,
                 "Avg. row mismatch:\n" + res.out);
    ok &= expect(res.out.find("# delta_vs_vision,3.64") != std::string::npos,
                 "vision delta mismatch");
    ok &= expect(res.out.find("# delta_vs_audio,12.69") != std::string::npos,
                 "audio delta mismatch");
    ok &= expect(res.out.find("# delta_vs_eeg,17.35") != std::string::npos,
                 "eeg delta mismatch");
    return ok;
}

// ------------------------------------------------------------ criterion 2 --

bool check_op(const std::string& name, const TensorFn& f,
              const std::function<std::vector<Tensor>(Rng&)>& make_inputs, float eps,
              float tol) {
    Rng rng(fnv1a64(name) ^ 0xacce97edULL);
    bool ok = true;
    for (int i = 0; i < 5; ++i) {
        const GradCheckReport r = grad_check(name, f, make_inputs(rng), eps);
        if (r.max_rel_error >= tol) {
            detail(name + " instance " + std::to_string(i) + ": max_rel_error " +
                   fmt_shortest(r.max_rel_error) + " >= " + fmt_shortest(tol));
            ok = false;
        }
    }
    return ok;
}

bool gradient_suite() {
    bool ok = true;
    auto weighted = [](const Tensor& t) {
        Tensor w(t.shape());
        for (std::size_t i = 0; i < w.values().size(); ++i) {
            w.values()[i] = 0.25f + 0.1f * static_cast<float>(i);
        }
        return sum(mul(t, w));
    };
    auto uni = [](std::vector<int> shape) {
        return [shape](Rng& rng) {
            return std::vector<Tensor>{Tensor::uniform(rng, shape, -1.0f, 1.0f)};
        };
    };

    ok &= check_op("matmul",
                   [](const std::vector<Tensor>& xs) { return sum(matmul(xs[0], xs[1])); },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 4}, -1, 1),
                                                  Tensor::uniform(rng, {4, 2}, -1, 1)};
                   },
                   1e-3f, 1e-3f);
    ok &= check_op("add",
                   [&](const std::vector<Tensor>& xs) { return weighted(add(xs[0], xs[1])); },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 4}, -1, 1),
                                                  Tensor::uniform(rng, {3, 4}, -1, 1)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("sub",
                   [&](const std::vector<Tensor>& xs) { return weighted(sub(xs[0], xs[1])); },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {2, 5}, -1, 1),
                                                  Tensor::uniform(rng, {2, 5}, -1, 1)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("mul",
                   [&](const std::vector<Tensor>& xs) { return weighted(mul(xs[0], xs[1])); },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {4, 3}, -1, 1),
                                                  Tensor::uniform(rng, {4, 3}, -1, 1)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("scale",
                   [&](const std::vector<Tensor>& xs) { return weighted(scale(xs[0], 1.3f)); },
                   uni({6}), 1e-2f, 1e-3f);
    ok &= check_op("add_scalar",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(add_scalar(xs[0], -0.4f));
                   },
                   uni({6}), 1e-2f, 1e-3f);
    ok &= check_op("gelu",
                   [&](const std::vector<Tensor>& xs) { return weighted(gelu(xs[0])); },
                   uni({7}), 1e-2f, 1e-3f);
    ok &= check_op("mean", [](const std::vector<Tensor>& xs) { return mean(xs[0]); },
                   uni({3, 3}), 1e-1f, 1e-3f);
    ok &= check_op("sum", [](const std::vector<Tensor>& xs) { return sum(xs[0]); },
                   uni({5}), 1e-1f, 1e-3f);
    ok &= check_op("reshape",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(reshape(xs[0], {6, 2}));
                   },
                   uni({3, 4}), 1e-2f, 1e-3f);
    ok &= check_op("transpose",
                   [&](const std::vector<Tensor>& xs) { return weighted(transpose(xs[0])); },
                   uni({3, 4}), 1e-2f, 1e-3f);
    ok &= check_op("slice",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(slice(xs[0], 1, 1, 2));
                   },
                   uni({3, 4}), 1e-2f, 1e-3f);
    ok &= check_op("concat",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(concat({xs[0], xs[1]}, 1));
                   },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 2}, -1, 1),
                                                  Tensor::uniform(rng, {3, 3}, -1, 1)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("softmax",
                   [&](const std::vector<Tensor>& xs) { return weighted(softmax(xs[0], 1)); },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 5}, -2, 2)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("repeat_rows",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(repeat_rows(xs[0], 4));
                   },
                   uni({5}), 1e-2f, 1e-3f);
    ok &= check_op("conv1d_depthwise",
                   [](const std::vector<Tensor>& xs) {
                       return sum(gelu(conv1d_depthwise(xs[0], xs[1], 2)));
                   },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 10}, -1, 1),
                                                  Tensor::uniform(rng, {3, 4}, -1, 1)};
                   },
                   1e-3f, 1e-3f);
    ok &= check_op("layer_norm",
                   [](const std::vector<Tensor>& xs) {
                       const Tensor y = layer_norm(xs[0], xs[1], xs[2]);
                       return mean(mul(y, y));
                   },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 6}, -1, 1),
                                                  Tensor::uniform(rng, {6}, 0.5f, 1.5f),
                                                  Tensor::uniform(rng, {6}, -1, 1)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("cross_entropy",
                   [](const std::vector<Tensor>& xs) {
                       return cross_entropy(xs[0], {1, 3, 0});
                   },
                   [](Rng& rng) {
                       return std::vector<Tensor>{Tensor::uniform(rng, {3, 5}, -2, 2)};
                   },
                   1e-2f, 1e-3f);
    ok &= check_op("patchify",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(patchify(xs[0], 2, 3));
                   },
                   uni({4, 6}), 1e-2f, 1e-3f);
    ok &= check_op("unpatchify",
                   [&](const std::vector<Tensor>& xs) {
                       return weighted(unpatchify(xs[0], 4, 6, 2, 3));
                   },
                   uni({4, 6}), 1e-2f, 1e-3f);

    // stack -> fuse -> classify composite, < 1e-2
    FusionConfig fc;
    fc.d_model = 6;
    fc.d_fuse = 6;
    fc.heads = 2;
    fc.hidden = 8;
    fc.classes = 5;
    Rng data(999);
    const Tensor hv = Tensor::uniform(data, {6}, -1, 1);
    const Tensor ha = Tensor::uniform(data, {6}, -1, 1);
    const Tensor he = Tensor::uniform(data, {6}, -1, 1);
    for (int i = 0; i < 5; ++i) {
        Rng seed_rng(5000 + static_cast<std::uint64_t>(i));
        ParamRegistry reg;
        init_fusion_params(reg, fc, seed_rng);
        std::vector<Tensor> inputs;
        std::vector<std::string> names;
        for (const auto& e : reg.entries()) {
            inputs.push_back(e.value);
            names.push_back(e.name);
        }
        auto f = [&](const std::vector<Tensor>& xs) {
            ParamRegistry probed;
            for (std::size_t k = 0; k < names.size(); ++k) probed.add(names[k], xs[k]);
            const ParamLeaves vals(nullptr, probed);
            return cross_entropy(reshape(fusion_logits(vals, hv, ha, he, fc), {1, 5}), {2});
        };
        const GradCheckReport r = grad_check("fusion_composite", f, inputs, 1e-2f);
        if (r.max_rel_error >= 1e-2f) {
            detail("fusion_composite instance " + std::to_string(i) + ": " +
                   fmt_shortest(r.max_rel_error));
            ok = false;
        }
    }
    return ok;
}

// ------------------------------------------------------------ criterion 3 --

bool freezing_contract(const fs::path& work) {
    const fs::path cfg = work / "tiny.cfg";
    testutil::write_file(cfg, kTinyConfig);
    const fs::path data = work / "freeze_data";

    bool ok = expect(
        testutil::run_cli("synth --config " + q(cfg.string()) + " --out " +
                          q(data.string())).code == 0,
        "synth failed");

    const fs::path ck[3] = {work / "freeze_v", work / "freeze_a", work / "freeze_e"};
    const char* mods[3] = {"vision", "audio", "eeg"};
    for (int m = 0; m < 3 && ok; ++m) {
        ok = expect(testutil::run_cli("pretrain --modality " + std::string(mods[m]) +
                                      " --data " + q(data.string()) +
                                      " --subject 1 --config " + q(cfg.string()) +
                                      " --out " + q(ck[m].string())).code == 0,
                    std::string("pretrain ") + mods[m] + " failed");
    }
    if (!ok) return false;

    const std::uint64_t before[3] = {testutil::dir_hash(ck[0]), testutil::dir_hash(ck[1]),
                                     testutil::dir_hash(ck[2])};
    ok = expect(testutil::run_cli("finetune --data " + q(data.string()) +
                                  " --subject 1 --encoders " +
                                  q(ck[0].string() + "," + ck[1].string() + "," +
                                    ck[2].string()) +
                                  " --config " + q(cfg.string()) + " --out " +
                                  q((work / "freeze_f").string())).code == 0,
                "finetune failed");
    for (int m = 0; m < 3; ++m) {
        ok &= expect(testutil::dir_hash(ck[m]) == before[m],
                     std::string("encoder checkpoint ") + mods[m] +
                         " changed during finetune");
    }
    return ok;
}

// ------------------------------------------------------------ criterion 4 --

bool multimodal_advantage(const fs::path& work) {
    double mm_mean = 0.0;
    double uni_mean[3] = {0.0, 0.0, 0.0};
    const std::uint64_t seeds[3] = {101, 202, 303};

    for (int s = 0; s < 3; ++s) {
        const RunConfig rc = advantage_config(seeds[s]);
        const PipelineConfig pc = PipelineConfig::from(rc);
        const fs::path data = work / ("adv_data_" + std::to_string(s));
        generate_synthetic(pc.synth, data);
        const std::vector<Trial> trials = load_dataset(data / "manifest.txt");
        std::vector<Trial> speaking;
        for (const Trial& t : trials) {
            if (t.spectrogram.has_value()) speaking.push_back(t);
        }

        const Checkpoint vis = pretrain_modality(trials, Modality::vision, pc);
        const Checkpoint aud = pretrain_modality(speaking, Modality::audio, pc);
        const Checkpoint eeg = pretrain_modality(trials, Modality::eeg, pc);
        const Checkpoint fused = finetune_fusion(trials, vis, aud, eeg, pc);

        const double accs[3] = {parse_float(vis.meta_get("run.val_acc"), "v"),
                                parse_float(aud.meta_get("run.val_acc"), "a"),
                                parse_float(eeg.meta_get("run.val_acc"), "e")};
        const double mm = parse_float(fused.meta_get("run.val_acc"), "m");
        detail("seed " + std::to_string(seeds[s]) + ": vision " + fmt_shortest(accs[0]) +
               ", audio " + fmt_shortest(accs[1]) + ", eeg " + fmt_shortest(accs[2]) +
               ", multimodal " + fmt_shortest(mm));
        for (int m = 0; m < 3; ++m) uni_mean[m] += accs[m] / 3.0;
        mm_mean += mm / 3.0;
    }

    const double best_uni = std::max({uni_mean[0], uni_mean[1], uni_mean[2]});
    detail("means: vision " + fmt_shortest(uni_mean[0]) + ", audio " +
           fmt_shortest(uni_mean[1]) + ", eeg " + fmt_shortest(uni_mean[2]) +
           ", multimodal " + fmt_shortest(mm_mean));
    return expect(mm_mean >= best_uni + 0.05,
                  "multimodal mean " + fmt_shortest(mm_mean) +
                      " does not exceed best unimodal " + fmt_shortest(best_uni) +
                      " by 5 points");
}

// ------------------------------------------------------------ criterion 5 --

bool chance_floor(const fs::path& work) {
    bool ok = true;
    const std::uint64_t seeds[3] = {11, 22, 33};
    for (int s = 0; s < 3; ++s) {
        RunConfig rc = RunConfig::defaults();
        rc.set("seed", std::to_string(seeds[s]));
        rc.set("synth.subjects", "1");
        rc.set("synth.trials_per_subject", "200");
        rc.set("synth.informativeness_vision", "0.8");
        rc.set("data.eeg_channels", "4");
        rc.set("data.eeg_samples", "20");
        rc.set("data.frames", "2");
        rc.set("data.frame_height", "8");
        rc.set("data.frame_width", "8");
        rc.set("data.mel_bins", "4");
        rc.set("data.time_frames", "4");
        rc.set("vision.patch", "4");
        rc.set("vision.d_model", "16");
        rc.set("vision.d_ff", "24");
        rc.set("vision.blocks", "1");
        rc.set("vision.heads", "2");
        rc.set("eeg.kernel", "5");
        rc.set("eeg.stride", "5");
        rc.set("train.epochs_pretrain", "8");
        rc.set("train.batch_size", "16");
        const PipelineConfig pc = PipelineConfig::from(rc);

        const fs::path data = work / ("chance_" + std::to_string(s));
        generate_synthetic(pc.synth, data);
        std::vector<Trial> trials = load_dataset(data / "manifest.txt");

        std::vector<int> labels;
        for (const Trial& t : trials) labels.push_back(t.label);
        Rng shuffle_rng(seeds[s] * 7919);
        shuffle_rng.shuffle(labels);
        for (std::size_t i = 0; i < trials.size(); ++i) trials[i].label = labels[i];

        const Checkpoint ckpt = pretrain_modality(trials, Modality::vision, pc);
        const double val = parse_float(ckpt.meta_get("run.val_acc"), "val");
        detail("seed " + std::to_string(seeds[s]) + ": shuffled-label val acc " +
               fmt_shortest(val));
        ok &= expect(val >= 0.10 && val <= 0.35,
                     "seed " + std::to_string(seeds[s]) + ": val acc " +
                         fmt_shortest(val) + " outside [0.10, 0.35]");
    }
    return ok;
}

// ------------------------------------------------------------ criterion 6 --

bool determinism(const fs::path& work) {
    const fs::path cfg = work / "det.cfg";
    testutil::write_file(cfg, kTinyConfig);

    auto pipeline = [&](const fs::path& root, std::string& transcript) -> bool {
        fs::create_directories(root);
        const fs::path data = root / "data";
        auto run = [&](const std::string& args) {
            const auto r = testutil::run_cli(args);
            transcript += r.out;
            return r.code == 0;
        };
        if (!run("synth --config " + q(cfg.string()) + " --out " + q(data.string()))) {
            return false;
        }
        const char* mods[3] = {"vision", "audio", "eeg"};
        for (const char* m : mods) {
            if (!run("pretrain --modality " + std::string(m) + " --data " +
                     q(data.string()) + " --subject 1 --config " + q(cfg.string()) +
                     " --out " + q((root / ("ck_" + std::string(m))).string()))) {
                return false;
            }
        }
        if (!run("finetune --data " + q(data.string()) + " --subject 1 --encoders " +
                 q((root / "ck_vision").string() + "," + (root / "ck_audio").string() +
                   "," + (root / "ck_eeg").string()) +
                 " --config " + q(cfg.string()) + " --out " +
                 q((root / "ck_fused").string()))) {
            return false;
        }
        testutil::write_file(root / "metrics.csv", transcript);
        return run("report --metrics " + q((root / "metrics.csv").string()) + " --out " +
                   q((root / "table.csv").string()));
    };

    std::string t1, t2;
    bool ok = expect(pipeline(work / "det1", t1), "first pipeline run failed");
    ok &= expect(pipeline(work / "det2", t2), "second pipeline run failed");
    if (!ok) return false;

    ok &= expect(t1 == t2, "metrics transcripts differ:\n" + t1 + "---\n" + t2);
    ok &= expect(testutil::dir_hash(work / "det1") == testutil::dir_hash(work / "det2"),
                 "pipeline output trees differ");
    return ok;
}

// ------------------------------------------------------------ criterion 7 --

bool invariant_suites(const fs::path& work) {
    bool ok = true;
    Rng rng(777);

    // softmax normalization and shift invariance
    for (int i = 0; i < 50; ++i) {
        const Tensor x = Tensor::uniform(rng, {rng.uniform_int(2, 9)}, -4, 4);
        const Tensor y = softmax(x, 0);
        double total = 0.0;
        for (float v : y.values()) total += v;
        ok &= expect(std::fabs(total - 1.0) < 1e-6, "softmax rows must sum to 1");
        const Tensor ys = softmax(add_scalar(x, 3.0f), 0);
        for (std::size_t k = 0; k < y.values().size(); ++k) {
            ok &= expect(std::fabs(ys.values()[k] - y.values()[k]) < 1e-6,
                         "softmax must be shift invariant");
        }
    }

    // attention row sums across random geometries
    for (int i = 0; i < 10; ++i) {
        const int heads = rng.uniform_int(1, 3);
        const int d = 4 * heads;
        MhaParams p;
        Rng init(1000 + static_cast<std::uint64_t>(i));
        p.Wq = init_linear_weight(init, d, d);
        p.bq = Tensor::zeros({d});
        p.Wk = init_linear_weight(init, d, d);
        p.bk = Tensor::zeros({d});
        p.Wv = init_linear_weight(init, d, d);
        p.bv = Tensor::zeros({d});
        p.Wo = init_linear_weight(init, d, d);
        p.bo = Tensor::zeros({d});
        p.heads = heads;
        const Tensor q_in = Tensor::uniform(rng, {3, d}, -1, 1);
        const Tensor k_in = Tensor::uniform(rng, {4, d}, -1, 1);
        for (const Tensor& w : attention_weights(q_in, k_in, p)) {
            for (int r = 0; r < w.dim(0); ++r) {
                double total = 0.0;
                for (int c = 0; c < w.dim(1); ++c) total += w.at({r, c});
                ok &= expect(std::fabs(total - 1.0) < 1e-6,
                             "attention weight rows must sum to 1");
            }
        }
    }

    // fusion permutation equivariance with embeddings disabled
    {
        FusionConfig fc;
        fc.d_model = 8;
        fc.d_fuse = 8;
        fc.heads = 2;
        fc.hidden = 12;
        Rng init(31337);
        ParamRegistry reg;
        init_fusion_params(reg, fc, init);
        const ParamLeaves vals(nullptr, reg);
        const Tensor tokens = Tensor::uniform(rng, {3, 8}, -1, 1);
        const std::vector<int> perm{2, 0, 1};
        std::vector<Tensor> rows;
        for (int i : perm) rows.push_back(slice(tokens, 0, i, 1));
        const Tensor y = reshape(fuse(vals, tokens, fc), {3, 8});
        const Tensor yp = reshape(fuse(vals, concat(rows, 0), fc), {3, 8});
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 8; ++c) {
                ok &= expect(
                    std::fabs(yp.at({r, c}) -
                              y.at({perm[static_cast<std::size_t>(r)], c})) < 1e-6,
                    "fusion must be permutation equivariant");
            }
        }
    }

    // residual identity block
    {
        Rng init(99);
        ParamRegistry reg;
        add_block_params(reg, "b.", 8, 16, init);
        reg.value("b.attn.Wo") = Tensor::zeros({8, 8});
        reg.value("b.attn.bo") = Tensor::zeros({8});
        reg.value("b.ff.W2") = Tensor::zeros({16, 8});
        reg.value("b.ff.b2") = Tensor::zeros({8});
        const ParamLeaves vals(nullptr, reg);
        const Tensor x = Tensor::uniform(rng, {5, 8}, -1, 1);
        const Tensor y = transformer_block(x, block_params(vals, "b.", 2));
        ok &= expect(testutil::bit_equal(x, y),
                     "zeroed projections must make the block an exact identity");
    }

    // token-count formulas
    for (int i = 0; i < 20; ++i) {
        VisionEncoderConfig v;
        v.patch = rng.uniform_int(1, 4);
        v.height = v.patch * rng.uniform_int(1, 3);
        v.width = v.patch * rng.uniform_int(1, 3);
        v.frames = rng.uniform_int(1, 3);
        v.heads = 1;
        v.d_model = 4;
        v.d_ff = 8;
        v.blocks = 1;
        ParamRegistry reg;
        Rng init(2000 + static_cast<std::uint64_t>(i));
        init_vision_params(reg, "vision.", v, init);
        const ParamLeaves vals(nullptr, reg);
        const Tensor frames = Tensor::uniform(rng, {v.frames, v.height, v.width}, -1, 1);
        const int expected = v.frames * (v.height / v.patch) * (v.width / v.patch) + 1;
        ok &= expect(encode_vision(vals, "vision.", frames, v).tokens.dim(0) == expected,
                     "vision token count formula violated");

        const int samples = rng.uniform_int(10, 40);
        const int kernel = rng.uniform_int(1, samples);
        const int stride = rng.uniform_int(1, 6);
        EegEncoderConfig e;
        e.channels = 3;
        e.samples = samples;
        e.kernel = kernel;
        e.stride = stride;
        e.heads = 1;
        e.d_model = 4;
        e.d_ff = 8;
        e.blocks = 1;
        ok &= expect(e.conv_tokens() == (samples - kernel) / stride + 1,
                     "eeg token count formula violated");
    }

    // split disjointness and stratification on a generated dataset
    {
        SynthConfig sc;
        sc.subjects = 2;
        sc.trials_per_subject = 50;
        sc.eeg_channels = 2;
        sc.eeg_samples = 10;
        sc.frames = 1;
        sc.frame_height = 4;
        sc.frame_width = 4;
        sc.mel_bins = 4;
        sc.time_frames = 4;
        sc.seed = 4;
        const fs::path data = work / "invariants_data";
        generate_synthetic(sc, data);
        const std::vector<Trial> trials = load_dataset(data / "manifest.txt");

        // modality-presence law on the generated set
        for (const Trial& t : trials) {
            ok &= expect(t.spectrogram.has_value() == t.is_speaking,
                         "spectrogram presence must match is_speaking");
        }
        // the loader rejects a violation
        testutil::write_file(data / "bad.txt",
                             "1,0,0,0,sub01/trial000.eeg.mft,sub01/trial000.frm.mft,"
                             "sub01/trial000.spc.mft\n");
        bool rejected = false;
        try {
            (void)load_manifest(data / "bad.txt");
        } catch (const DataError&) {
            rejected = true;
        }
        ok &= expect(rejected, "loader must reject listening trials with spectrograms");

        const auto split = subject_split(trials, 0.2f, 17, false);
        for (const auto& [subject, si] : split) {
            std::set<int> train(si.train.begin(), si.train.end());
            for (int i : si.test) {
                ok &= expect(train.count(i) == 0, "split sides must be disjoint");
            }
            ok &= expect(si.train.size() + si.test.size() == 50,
                         "split must cover the subject's trials");
            for (int c = 0; c < kClasses; ++c) {
                int n_test = 0;
                for (int i : si.test) {
                    n_test += trials[static_cast<std::size_t>(i)].label == c;
                }
                ok &= expect(std::fabs(n_test - 10 * 0.2) <= 1.0,
                             "per-class test counts must track the fraction");
            }
        }
    }
    return ok;
}

struct Criterion {
    int number;
    const char* name;
    double budget_seconds;
    std::function<bool()> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    std::string workdir;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) cli = argv[++i];
        else if (arg == "--workdir" && i + 1 < argc) workdir = argv[++i];
    }
    if (cli.empty()) {
        std::fprintf(stderr, "usage: modfuse_acceptance --cli /path/to/modfuse\n");
        return 2;
    }
    ::setenv("MODFUSE_CLI", cli.c_str(), 1);

    testutil::TempDir scratch("acceptance");
    const fs::path work = workdir.empty() ? scratch.path() : fs::path(workdir);
    fs::create_directories(work);

    const std::vector<Criterion> criteria = {
        {1, "aggregation fidelity", 1.0, [&] { return aggregation_fidelity(work); }},
        {2, "gradient suite", 120.0, [&] { return gradient_suite(); }},
        {3, "freezing contract", 60.0, [&] { return freezing_contract(work); }},
        {4, "multimodal advantage", 600.0, [&] { return multimodal_advantage(work); }},
        {5, "chance-floor sanity", 300.0, [&] { return chance_floor(work); }},
        {6, "determinism", 300.0, [&] { return determinism(work); }},
        {7, "invariant suites", 120.0, [&] { return invariant_suites(work); }},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        g_failures.clear();
        const auto start = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = c.run();
        } catch (const std::exception& e) {
            detail(std::string("exception: ") + e.what());
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > c.budget_seconds) {
            detail("runtime " + fmt_fixed(elapsed, 1) + " s exceeds budget " +
                   fmt_fixed(c.budget_seconds, 0) + " s");
            ok = false;
        }
        std::printf("[%s] criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", c.number,
                    c.name, elapsed);
        if (!ok) {
            ++failures;
            for (const std::string& msg : g_failures) {
                std::printf("       %s\n", msg.c_str());
            }
        }
    }
    return failures == 0 ? 0 : 1;
}
