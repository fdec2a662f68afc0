// Command-line front end for the full pipeline: synthesize data, pretrain
// each modality encoder, fine-tune the fusion stage, and report subject-wise
// results.
//
// Exit codes: 0 success, 2 config/usage error, 3 data or I/O error,
// 4 numeric divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modfuse/data.hpp"
#include "modfuse/pipeline.hpp"
#include "modfuse/report.hpp"
#include "modfuse/run_config.hpp"
#include "modfuse/text.hpp"
#include "modfuse/train.hpp"

namespace fs = std::filesystem;
using namespace modfuse;

namespace {

RunConfig load_config(const std::string& path) {
    return path.empty() ? RunConfig::defaults() : RunConfig::load(path);
}

// Seed precedence: --seed flag, then an explicit `seed` in the config file,
// then MODFUSE_SEED from the environment, then the default.
std::uint64_t resolve_seed(RunConfig& cfg, std::optional<std::uint64_t> cli_seed) {
    if (cli_seed.has_value()) {
        cfg.set("seed", std::to_string(*cli_seed), "--seed");
    } else if (!cfg.was_set("seed")) {
        if (const char* env = std::getenv("MODFUSE_SEED")) {
            cfg.set("seed", env, "MODFUSE_SEED");
        }
    }
    return cfg.get_u64("seed");
}

fs::path manifest_path_for(const std::string& data) {
    fs::path p(data);
    if (fs::is_directory(p)) return p / "manifest.txt";
    return p;
}

void check_subject_range(int subject) {
    if (subject < 1 || subject > kMaxSubjects) {
        throw UsageError("subject out of range 1.." + std::to_string(kMaxSubjects));
    }
}

void write_output(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::fputs(text.c_str(), stdout);
        return;
    }
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + out_path);
    f << text;
    if (!f) throw IoError("write failed for " + out_path);
}

void print_metrics_line(int subject, const std::string& condition, double train_acc,
                        double val_acc) {
    std::printf("%d,%s,%.6f,%.6f\n", subject, condition.c_str(), train_acc, val_acc);
}

int run_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    RunConfig cfg = load_config(config_path);
    resolve_seed(cfg, seed);
    const PipelineConfig pc = PipelineConfig::from(cfg);
    const DatasetManifest manifest = generate_synthetic(pc.synth, out_dir);
    std::fprintf(stderr, "wrote %zu trials under %s\n", manifest.records.size(),
                 out_dir.c_str());
    return 0;
}

int run_pretrain(const std::string& modality_name, const std::string& data,
                 int subject, const std::string& config_path, const std::string& out_dir) {
    check_subject_range(subject);
    const Modality modality = parse_modality(modality_name);
    RunConfig cfg = load_config(config_path);
    resolve_seed(cfg, std::nullopt);
    const PipelineConfig pc = PipelineConfig::from(cfg);

    std::vector<Trial> trials = load_dataset(manifest_path_for(data), subject);
    if (trials.empty()) {
        throw DataError("no trials for subject " + std::to_string(subject) + " in " + data);
    }
    if (modality == Modality::audio) {
        std::erase_if(trials, [](const Trial& t) { return !t.spectrogram.has_value(); });
        if (trials.empty()) {
            throw DataError("no speaking trials for subject " + std::to_string(subject));
        }
    }

    const Checkpoint ckpt = pretrain_modality(trials, modality, pc);
    ckpt.save(out_dir);
    print_metrics_line(subject, modality_name,
                       parse_float(ckpt.meta_get("run.train_acc"), "train_acc"),
                       parse_float(ckpt.meta_get("run.val_acc"), "val_acc"));
    return 0;
}

int run_finetune(const std::string& data, int subject,
                 const std::vector<std::string>& encoder_dirs,
                 const std::string& config_path, const std::string& out_dir) {
    check_subject_range(subject);
    static const char* const kOrder[3] = {"vision", "audio", "eeg"};
    if (encoder_dirs.size() != 3) {
        throw UsageError(std::string("missing encoder checkpoint for ") +
                         kOrder[std::min<std::size_t>(encoder_dirs.size(), 2)] +
                         " (--encoders expects vision,audio,eeg)");
    }
    RunConfig cfg = load_config(config_path);
    resolve_seed(cfg, std::nullopt);
    const PipelineConfig pc = PipelineConfig::from(cfg);

    const Checkpoint vision_ckpt = Checkpoint::load(encoder_dirs[0]);
    const Checkpoint audio_ckpt = Checkpoint::load(encoder_dirs[1]);
    const Checkpoint eeg_ckpt = Checkpoint::load(encoder_dirs[2]);

    const std::vector<Trial> trials = load_dataset(manifest_path_for(data), subject);
    if (trials.empty()) {
        throw DataError("no trials for subject " + std::to_string(subject) + " in " + data);
    }

    const Checkpoint ckpt = finetune_fusion(trials, vision_ckpt, audio_ckpt, eeg_ckpt, pc);
    ckpt.save(out_dir);
    print_metrics_line(subject, "multimodal",
                       parse_float(ckpt.meta_get("run.train_acc"), "train_acc"),
                       parse_float(ckpt.meta_get("run.val_acc"), "val_acc"));
    return 0;
}

int condition_index(const std::string& name, const std::string& where) {
    for (int c = 0; c < kConditions; ++c) {
        if (name == kConditionNames[c]) return c;
    }
    throw DataError(where + ": unknown condition '" + name + "'");
}

int run_report(const std::vector<std::string>& metrics_files, const std::string& format,
               const std::string& out_path) {
    std::map<int, SubjectResult> by_subject;
    for (const std::string& file : metrics_files) {
        std::ifstream f(file);
        if (!f) throw IoError("cannot open metrics file " + file);
        std::string line;
        int line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            const std::string stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const std::string where = file + ":" + std::to_string(line_no);
            const std::vector<std::string> cols = split(stripped, ',');
            if (cols.size() != 4) {
                throw DataError(where + ": expected 'subject,condition,train_acc,val_acc'");
            }
            const int subject = static_cast<int>(parse_int(cols[0], where));
            const int cond = condition_index(cols[1], where);
            parse_float(cols[2], where);  // train accuracy: validated, unused in tables
            const double val = parse_float(cols[3], where);
            if (val < 0.0 || val > 1.0) {
                throw DataError(where + ": accuracy " + cols[3] + " out of [0,1]");
            }
            SubjectResult& row = by_subject[subject];
            row.subject_id = subject;
            auto& slot = row.accuracy[static_cast<std::size_t>(cond)];
            if (slot.has_value() && *slot != val) {
                throw DataError(where + ": conflicting duplicate entry for subject " +
                                cols[0] + ", condition " + cols[1]);
            }
            slot = val;
        }
    }

    std::vector<SubjectResult> rows;
    rows.reserve(by_subject.size());
    for (const auto& [subject, row] : by_subject) rows.push_back(row);
    const ReportTable table = aggregate(rows);

    std::string text;
    if (format == "csv") {
        text = emit_table(table, ReportFormat::csv);
    } else if (format == "markdown") {
        text = emit_table(table, ReportFormat::markdown);
    } else {
        text = emit_barplot_data(table);
    }
    write_output(out_path, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"modfuse: two-stage multimodal emotion recognition at desk scale"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic EAV-shaped dataset");
    std::string synth_config, synth_out;
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--config", synth_config, "run config file (key = value lines)");
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--seed", synth_seed, "seed override (default: config/env, then 0)");

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "stage 1: train one modality encoder");
    std::string pre_modality, pre_data, pre_config, pre_out;
    int pre_subject = 0;
    pretrain->add_option("--modality", pre_modality, "vision|audio|eeg")
        ->required()
        ->check(CLI::IsMember({"vision", "audio", "eeg"}));
    pretrain->add_option("--data", pre_data, "dataset directory or manifest path")
        ->required();
    pretrain->add_option("--subject", pre_subject, "subject id (1..42)")->required();
    pretrain->add_option("--config", pre_config, "run config file");
    pretrain->add_option("--out", pre_out, "checkpoint output directory")->required();

    // finetune
    auto* finetune =
        app.add_subcommand("finetune", "stage 2: frozen-encoder fusion fine-tuning");
    std::string fin_data, fin_config, fin_out;
    int fin_subject = 0;
    std::vector<std::string> fin_encoders;
    finetune->add_option("--data", fin_data, "dataset directory or manifest path")
        ->required();
    finetune->add_option("--subject", fin_subject, "subject id (1..42)")->required();
    finetune
        ->add_option("--encoders", fin_encoders,
                     "vision,audio,eeg pretrain checkpoint directories")
        ->required()
        ->delimiter(',');
    finetune->add_option("--config", fin_config, "run config file");
    finetune->add_option("--out", fin_out, "checkpoint output directory")->required();

    // report
    auto* report = app.add_subcommand("report", "aggregate metrics into Table-1-style output");
    std::vector<std::string> rep_metrics;
    std::string rep_format = "csv";
    std::string rep_out;
    report->add_option("--metrics", rep_metrics, "metrics CSV file(s)")->required();
    report->add_option("--format", rep_format, "csv|markdown|barplot")
        ->capture_default_str()
        ->check(CLI::IsMember({"csv", "markdown", "barplot"}));
    report->add_option("--out", rep_out, "output path (default: stdout)");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return run_synth(synth_config, synth_out, synth_seed);
        if (pretrain->parsed()) {
            return run_pretrain(pre_modality, pre_data, pre_subject, pre_config, pre_out);
        }
        if (finetune->parsed()) {
            return run_finetune(fin_data, fin_subject, fin_encoders, fin_config, fin_out);
        }
        if (report->parsed()) return run_report(rep_metrics, rep_format, rep_out);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
}
