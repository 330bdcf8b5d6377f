#pragma once
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memdiff/backbone.hpp"
#include "memdiff/prior.hpp"
#include "memdiff/schedule.hpp"

namespace memdiff {

// One flat key set covering data generation, backbone shapes, schedule,
// training, sampling and paths. Unknown keys are rejected. The config
// hash covers every behavioral key and deliberately excludes filesystem
// paths, so runs in different directories stay byte-identical.
struct ExperimentConfig {
    // data
    int n_volumes = 8;
    int slices_per_volume = 9;
    int height = 32, width = 32;
    int k_classes = 4;
    double split_fraction = 0.10;
    std::string domain_tag = "source";
    double domain_shift_scale = 1.0;
    double domain_shift_offset = 0.0;
    double domain_noise = 0.0;

    // backbone
    int c_img = 8, c_mem = 8;
    int grid_h = 16, grid_w = 16;
    std::uint64_t backbone_seed = 77;
    double fusion_weight = 0.3;

    // schedule / sampler
    int t_steps = 1000;
    double beta_const = 0.008;
    int k_steps = 2;
    bool stochastic_sampling = false;

    // training
    int iterations = 7800;
    int batch_size = 4;
    double learning_rate = 1e-4;
    double lambda_prior = 1.0;
    double lambda_seg = 1.0;
    std::string optimizer = "adam";
    bool cross_slice_conditioning = false;
    double target_noise = 0.0;
    int base_width = 32;
    int levels = 2;
    int cond_dim = 64;
    int fourier_bands = 4;

    // run
    std::uint64_t seed = 1234;
    bool deterministic = true;
    bool cross_slice_inference = true;

    // paths (excluded from the config hash)
    std::string store_dir;
    std::string out_dir;
    std::string params_path;
    std::string source_store_dir; // forbidden root for sfuda runs

    std::string to_json() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::uint64_t hash() const;
    void validate() const; // throws ConfigError

    BackboneSpec backbone_spec() const;
    TrainConfig train_config() const;
    SamplerConfig sampler_config() const;
};

// Resolves an output path against the output-root override environment
// variable (MEMDIFF_OUT_ROOT) when the path is relative.
std::filesystem::path resolve_out_dir(const std::string& out);

} // namespace memdiff
