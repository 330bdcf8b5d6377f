#include <cstdio>
#include <exception>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/hash.hpp"
#include "memdiff/pipeline.hpp"

namespace {

using memdiff::ExperimentConfig;

// Per-subcommand option values, keyed by flag name; the CLI is built from
// the same surface table the prompt-free structural check inspects.
struct SubcommandState {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> values;
    bool deterministic_flag = false;
};

ExperimentConfig load_config(const SubcommandState& st) {
    ExperimentConfig cfg;
    const auto it = st.values.find("--config");
    if (it != st.values.end() && !it->second.empty()) cfg = ExperimentConfig::load(it->second);
    // flag overrides win over config-file values
    if (const auto s = st.values.find("--seed"); s != st.values.end() && !s->second.empty())
        cfg.seed = std::stoull(s->second);
    if (const auto o = st.values.find("--out"); o != st.values.end() && !o->second.empty())
        cfg.out_dir = o->second;
    if (const auto v = st.values.find("--store"); v != st.values.end() && !v->second.empty())
        cfg.store_dir = v->second;
    if (const auto v = st.values.find("--source-store"); v != st.values.end() && !v->second.empty())
        cfg.source_store_dir = v->second;
    if (st.deterministic_flag) cfg.deterministic = true;
    return cfg;
}

std::string need(const SubcommandState& st, const std::string& flag) {
    const auto it = st.values.find(flag);
    if (it == st.values.end() || it->second.empty())
        throw memdiff::ConfigError("missing required flag " + flag);
    return it->second;
}

int dispatch(const std::string& name, const SubcommandState& st) {
    if (name == "gen-data") {
        const ExperimentConfig cfg = load_config(st);
        const auto summary = memdiff::cmd_gen_data(cfg);
        std::printf("wrote %zu volumes to %s\n", summary.volume_ids.size(), cfg.store_dir.c_str());
    } else if (name == "train") {
        const ExperimentConfig cfg = load_config(st);
        const auto art = memdiff::cmd_train(cfg);
        std::printf("params: %s\nloss csv: %s\nsmoothed l_prior %.6f -> %.6f\n",
                    art.params_path.c_str(), art.loss_csv_path.c_str(), art.first_smoothed_prior,
                    art.last_smoothed_prior);
    } else if (name == "infer") {
        const ExperimentConfig cfg = load_config(st);
        const auto art = memdiff::cmd_infer(cfg, need(st, "--params"), cfg.store_dir);
        std::printf("segmented %zu volumes into %s\n", art.volume_ids.size(), art.out_dir.c_str());
    } else if (name == "eval") {
        const ExperimentConfig cfg = load_config(st);
        const auto out = memdiff::resolve_out_dir(cfg.out_dir.empty() ? "." : cfg.out_dir);
        const auto report = memdiff::cmd_eval(need(st, "--pred"), need(st, "--truth"), out / "dice.csv");
        std::printf("mean dice %.4f over %d volumes\n", report.mean, report.n_volumes);
        for (const auto& [organ, d] : report.per_organ) std::printf("  organ %d: %.4f\n", organ, d);
    } else if (name == "sfuda") {
        const ExperimentConfig cfg = load_config(st);
        const auto result = memdiff::cmd_sfuda(cfg, need(st, "--params"), need(st, "--target"));
        std::printf("sfuda run complete: %zu volumes, params hash %s unchanged\n",
                    result.volume_ids.size(), memdiff::to_hex(result.params_hash_after).c_str());
        if (result.report) std::printf("mean dice %.4f\n", result.report->mean);
    } else if (name == "diag") {
        const ExperimentConfig cfg = load_config(st);
        const auto diag = memdiff::cmd_diag(cfg, need(st, "--params"), cfg.store_dir);
        for (const auto& s : diag.stats)
            if (s.present) std::printf("class %d: gap %.4f spread_ratio %.4f\n", s.cls, s.gap, s.spread_ratio);
    } else {
        throw memdiff::ConfigError("unknown subcommand " + name);
    }
    return memdiff::kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffusion-prior memory-embedding segmentation pipeline"};
    app.require_subcommand(1);

    std::map<std::string, SubcommandState> states;
    for (const auto& surface : memdiff::cli_surfaces()) {
        auto& st = states[surface.name];
        st.app = app.add_subcommand(surface.name);
        for (const auto& flag : surface.flags) {
            if (flag == "--deterministic")
                st.app->add_flag(flag, st.deterministic_flag, "force single-threaded numeric paths");
            else
                st.app->add_option(flag, st.values[flag]);
        }
    }

    try {
        app.parse(argc, argv);
        for (auto& [name, st] : states)
            if (st.app->parsed()) return dispatch(name, st);
        throw memdiff::ConfigError("no subcommand given");
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? memdiff::kExitOk : memdiff::kExitConfigError;
    } catch (const memdiff::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return memdiff::kExitConfigError;
    } catch (const memdiff::DataError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return memdiff::kExitDataError;
    } catch (const memdiff::NumericError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return memdiff::kExitNumericError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
