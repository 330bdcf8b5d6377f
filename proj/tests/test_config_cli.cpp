#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "memdiff/config.hpp"
#include "memdiff/data.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/pipeline.hpp"
#include "test_support.hpp"

using namespace memdiff;

TEST_CASE("config round trip and defaults") {
    ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    // paper-parameter defaults
    CHECK(cfg.t_steps == 1000);
    CHECK(cfg.k_steps == 2);
    CHECK(cfg.iterations == 7800);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.learning_rate == doctest::Approx(1e-4));
    CHECK(cfg.lambda_prior == 1.0);
    CHECK(cfg.lambda_seg == 1.0);
    CHECK(cfg.k_classes == 4);

    cfg.seed = 987;
    cfg.base_width = 24;
    cfg.store_dir = "somewhere";
    const auto back = ExperimentConfig::from_json_text(cfg.to_json());
    CHECK(back.seed == 987);
    CHECK(back.base_width == 24);
    CHECK(back.store_dir == "somewhere");
    CHECK(back.hash() == cfg.hash());
}

TEST_CASE("unknown config keys are rejected") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(R"({"t_steps": 10, "promt": 1})"),
                         doctest::Contains("unknown config key: promt"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"t_steps": "ten"})"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("[1,2]"), ConfigError);
}

TEST_CASE("config hash ignores filesystem paths but tracks behavior") {
    ExperimentConfig a, b;
    a.store_dir = "/tmp/here";
    a.out_dir = "runs/a";
    b.store_dir = "/mnt/elsewhere";
    b.out_dir = "runs/b";
    b.params_path = "x.bin";
    CHECK(a.hash() == b.hash());

    b.learning_rate = 2e-4;
    CHECK(a.hash() != b.hash());
    b = a;
    b.seed = a.seed + 1;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("config validation failures") {
    auto expect_bad = [](auto mutate, const char* what) {
        ExperimentConfig cfg;
        mutate(cfg);
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        INFO(what);
    };
    expect_bad([](auto& c) { c.split_fraction = 1.5; }, "fraction");
    expect_bad([](auto& c) { c.beta_const = 0.0; }, "beta");
    expect_bad([](auto& c) { c.k_steps = 0; }, "k_steps");
    expect_bad([](auto& c) { c.k_steps = c.t_steps + 1; }, "k>T");
    expect_bad([](auto& c) { c.c_mem = 2; }, "c_mem < K");
    expect_bad([](auto& c) { c.grid_h = 10; }, "grid divides");
    expect_bad([](auto& c) { c.optimizer = "sgd"; }, "optimizer");
    expect_bad([](auto& c) { c.levels = 3; }, "levels");
    expect_bad([](auto& c) { c.fusion_weight = 1.5; }, "fusion weight");
    expect_bad([](auto& c) { c.domain_tag = "other"; }, "domain tag");
}

TEST_CASE("output root override resolves relative paths") {
    const auto root = testutil::fresh_dir("out_root");
    setenv("MEMDIFF_OUT_ROOT", root.c_str(), 1);
    CHECK(resolve_out_dir("runs/x") == root / "runs/x");
    CHECK(resolve_out_dir("/abs/path") == std::filesystem::path("/abs/path"));
    unsetenv("MEMDIFF_OUT_ROOT");
    CHECK(resolve_out_dir("runs/x") == std::filesystem::path("runs/x"));
}

TEST_CASE("no CLI surface accepts prompt-style inputs") {
    const auto surfaces = cli_surfaces();
    REQUIRE(surfaces.size() == 6);
    std::vector<std::string> names;
    for (const auto& s : surfaces) names.push_back(s.name);
    CHECK(names == std::vector<std::string>{"gen-data", "train", "infer", "eval", "sfuda", "diag"});

    const std::vector<std::string> banned = {"prompt", "point", "box", "click", "scribble", "seed-mask"};
    for (const auto& s : surfaces)
        for (const auto& flag : s.flags)
            for (const auto& bad : banned) {
                INFO(s.name << " " << flag);
                CHECK(flag.find(bad) == std::string::npos);
            }
}

#ifdef MEMDIFF_BIN
namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MEMDIFF_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("CLI end-to-end: gen-data determinism and exit codes") {
    const auto dir = testutil::fresh_dir("cli_run");
    ExperimentConfig cfg;
    cfg.n_volumes = 2;
    cfg.slices_per_volume = 3;
    cfg.k_classes = 2;
    cfg.seed = 31;
    cfg.store_dir = (dir / "store_a").string();
    cfg.save(dir / "config_a.json");
    cfg.store_dir = (dir / "store_b").string();
    cfg.save(dir / "config_b.json");

    SUBCASE("deterministic store generation, readable back") {
        REQUIRE(run_cli("gen-data --config " + (dir / "config_a.json").string()) == 0);
        REQUIRE(run_cli("gen-data --config " + (dir / "config_b.json").string()) == 0);
        const auto a = testutil::slurp(dir / "store_a" / "vol_000" / "slice_0000.f32");
        const auto b = testutil::slurp(dir / "store_b" / "vol_000" / "slice_0000.f32");
        CHECK_FALSE(a.empty());
        CHECK(a == b);
        CHECK(read_volume_store(dir / "store_a").size() == 2);
    }
    SUBCASE("config errors exit 2") {
        std::ofstream bad(dir / "bad.json");
        bad << R"({"unknown_key": 1})";
        bad.close();
        CHECK(run_cli("gen-data --config " + (dir / "bad.json").string()) == 2);
        CHECK(run_cli("definitely-not-a-subcommand") == 2);
    }
    SUBCASE("data errors exit 3") {
        cfg.store_dir = (dir / "missing_store").string();
        cfg.out_dir = (dir / "out").string();
        cfg.save(dir / "config_missing.json");
        CHECK(run_cli("train --config " + (dir / "config_missing.json").string()) == 3);
    }
    SUBCASE("seed flag overrides the config file") {
        REQUIRE(run_cli("gen-data --config " + (dir / "config_a.json").string()) == 0);
        const auto before = testutil::slurp(dir / "store_a" / "vol_000" / "slice_0000.f32");
        REQUIRE(run_cli("gen-data --config " + (dir / "config_a.json").string() + " --seed 77") == 0);
        const auto after = testutil::slurp(dir / "store_a" / "vol_000" / "slice_0000.f32");
        CHECK(before != after);
    }
}
#endif
