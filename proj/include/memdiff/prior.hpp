#pragma once
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memdiff/backbone.hpp"
#include "memdiff/data.hpp"
#include "memdiff/denoiser.hpp"
#include "memdiff/grid.hpp"
#include "memdiff/schedule.hpp"

namespace memdiff {

struct TrainConfig {
    int iterations = 7800;
    int batch_size = 4;
    double learning_rate = 1e-4;
    double lambda_prior = 1.0;
    double lambda_seg = 1.0;
    std::string optimizer = "adam";
    std::uint64_t seed = 0;
    int t_steps = 1000;
    double beta_const = 0.008;
    int k_steps = 2;
    bool cross_slice_conditioning = false;
    double fusion_weight = 0.3;
    // Std of fixed per-example noise added to training targets; used by the
    // noisy-prior benchmark to make per-slice predictions imperfect.
    double target_noise = 0.0;
    int base_width = 32;
    int levels = 2;
    int cond_dim = 64;
    int fourier_bands = 4;
    bool single_thread = false; // force sequential batch processing
};

struct TrainingExample {
    ImageEmbedding z_img;
    MemoryEmbedding z_mem_target;
    int label = 0;
    std::optional<MemoryEmbedding> adjacent_memory;
    LabelMask truth; // slice truth restricted to `label`, for the seg branch
};

// Mean squared error over all entries and its gradient wrt the prediction.
double prior_loss(const Grid3& prediction, const Grid3& target);
Grid3 prior_loss_grad(const Grid3& prediction, const Grid3& target);

// Mean over classes of soft-Dice loss + per-pixel BCE on sigmoid(logits)
// against the per-class indicator planes of truth (smoothing s = 1).
double seg_loss(const MaskLogits& logits, const LabelMask& truth);
MaskLogits seg_loss_grad(const MaskLogits& logits, const LabelMask& truth);

double combined_loss(double l_prior, double l_seg, const TrainConfig& cfg);

// One example per slice per organ class (empty class masks included);
// targets are memory encodings of the class-restricted truth mask.
// When cross_slice is set, adjacent_memory holds the truth encoding of the
// slice's inward neighbor in the middle-out plan. target_noise > 0 adds
// fixed seeded noise to each example's target.
std::vector<TrainingExample> build_training_set(const std::vector<VolumeRecord>& volumes,
                                                const Backbone& backbone, bool cross_slice,
                                                double target_noise = 0.0,
                                                std::uint64_t noise_seed = 0);

struct LossRow {
    int iteration = 0;
    double l_prior = 0.0;
    std::optional<double> l_seg; // absent when lambda_seg == 0
    double l_total = 0.0;
};

struct TrainHooks {
    std::vector<int> checkpoint_iterations;
    std::function<void(int iteration, const Denoiser&)> on_checkpoint;
};

struct TrainResult {
    Denoiser denoiser;
    std::vector<LossRow> history;
};

TrainResult train(const std::vector<TrainingExample>& examples, const Backbone& backbone,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

// Versioned binary container: magic, format version, architecture
// descriptor, config hash, seed, float32 LE payload.
void save_params(const Denoiser& denoiser, const std::filesystem::path& path,
                 std::uint64_t config_hash, std::uint64_t seed);
struct LoadedParams {
    Denoiser denoiser;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};
LoadedParams load_params(const std::filesystem::path& path);

void write_loss_csv(const std::vector<LossRow>& history, const std::filesystem::path& path,
                    std::uint64_t config_hash, std::uint64_t seed);

double smoothed_mean(const std::vector<double>& values, std::size_t begin, std::size_t count);

} // namespace memdiff
