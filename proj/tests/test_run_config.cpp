#include <doctest.h>

#include "modfuse/pipeline.hpp"
#include "modfuse/run_config.hpp"
#include "test_helpers.hpp"

using namespace modfuse;

TEST_SUITE("run_config") {

TEST_CASE("defaults cover every documented key") {
    const RunConfig cfg = RunConfig::defaults();
    for (const KeySpec& k : run_config_keys()) {
        CHECK(cfg.get_raw(k.name) == k.default_value);
        CHECK_FALSE(cfg.was_set(k.name));
        CHECK(std::string(k.help).size() > 0);
    }
    CHECK(cfg.get_int("synth.subjects") == 42);
    CHECK(cfg.get_float("train.lr_pretrain") == doctest::Approx(0.001));
    CHECK(cfg.get_u64("seed") == 0);
}

TEST_CASE("file parsing: comments, whitespace, overrides") {
    testutil::TempDir dir("cfg");
    testutil::write_file(dir.path() / "run.cfg",
                         "# a comment line\n"
                         "\n"
                         "seed = 7   # trailing comment\n"
                         "  train.batch_size=4\n"
                         "synth.noise_sigma = 0.5\n");
    const RunConfig cfg = RunConfig::load(dir.path() / "run.cfg");
    CHECK(cfg.get_u64("seed") == 7);
    CHECK(cfg.was_set("seed"));
    CHECK(cfg.get_int("train.batch_size") == 4);
    CHECK(cfg.get_float("synth.noise_sigma") == doctest::Approx(0.5));
    CHECK(cfg.get_int("classes") == 5);  // untouched default
}

TEST_CASE("unknown keys, duplicates, and bad values carry line numbers") {
    testutil::TempDir dir("cfgbad");

    testutil::write_file(dir.path() / "unknown.cfg", "seed = 1\nnot.a.key = 2\n");
    try {
        (void)RunConfig::load(dir.path() / "unknown.cfg");
        CHECK(false);
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":2") != std::string::npos);
        CHECK(msg.find("not.a.key") != std::string::npos);
    }

    testutil::write_file(dir.path() / "dup.cfg", "seed = 1\nseed = 2\n");
    CHECK_THROWS_AS((void)RunConfig::load(dir.path() / "dup.cfg"), ConfigError);

    testutil::write_file(dir.path() / "badval.cfg", "train.batch_size = four\n");
    CHECK_THROWS_AS((void)RunConfig::load(dir.path() / "badval.cfg"), ConfigError);

    testutil::write_file(dir.path() / "noeq.cfg", "seed 1\n");
    CHECK_THROWS_AS((void)RunConfig::load(dir.path() / "noeq.cfg"), ConfigError);

    CHECK_THROWS_AS((void)RunConfig::load(dir.path() / "missing.cfg"), ConfigError);
}

TEST_CASE("echo lists every key once, in table order, and round-trips") {
    RunConfig cfg = RunConfig::defaults();
    cfg.set("eeg.kernel", "7");
    const auto echoed = cfg.echo();
    CHECK(echoed.size() == run_config_keys().size());
    for (std::size_t i = 0; i < echoed.size(); ++i) {
        CHECK(echoed[i].first == run_config_keys()[i].name);
    }

    std::vector<std::string> lines;
    for (const auto& [k, v] : echoed) lines.push_back(k + " = " + v);
    const RunConfig back = RunConfig::from_lines(lines, "echo");
    CHECK(back.get_int("eeg.kernel") == 7);
    for (const KeySpec& k : run_config_keys()) {
        CHECK(back.get_raw(k.name) == cfg.get_raw(k.name));
    }
}

TEST_CASE("pipeline view validates semantic constraints") {
    RunConfig cfg = RunConfig::defaults();
    cfg.set("split.test_fraction", "1.5");
    CHECK_THROWS_AS((void)PipelineConfig::from(cfg), ConfigError);

    RunConfig cfg2 = RunConfig::defaults();
    cfg2.set("train.epochs_pretrain", "0");
    CHECK_THROWS_AS((void)PipelineConfig::from(cfg2), ConfigError);

    RunConfig ok = RunConfig::defaults();
    ok.set("seed", "99");
    const PipelineConfig pc = PipelineConfig::from(ok);
    CHECK(pc.seed == 99);
    CHECK(pc.synth.seed == 99);
    CHECK(pc.vision.d_model == 64);
    CHECK(pc.eeg.channels == 30);
    CHECK(pc.echo.size() == run_config_keys().size());
}

}  // TEST_SUITE
