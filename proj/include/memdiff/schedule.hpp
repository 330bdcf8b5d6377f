#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "memdiff/backbone.hpp"
#include "memdiff/grid.hpp"

namespace memdiff {

// DDPM schedule; index convention: arrays are 0-based, timesteps are
// 1-based (t in 1..T), alpha_bar_prev(1) == 1.
struct NoiseSchedule {
    int t_steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int t) const { return beta[t - 1]; }
    double alpha_at(int t) const { return alpha[t - 1]; }
    double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
    double alpha_bar_prev(int t) const { return t > 1 ? alpha_bar[t - 2] : 1.0; }
};

NoiseSchedule make_schedule(int t_steps, double beta_const);

// Terminal state near pure noise; holds for production schedules
// (T=1000, beta=0.008) but intentionally not enforced by the
// constructor so short test schedules remain constructible.
bool terminal_near_noise(const NoiseSchedule& sched);

struct SamplerConfig {
    int k_steps = 2;
    bool stochastic = false;
    std::string timestep_selection = "even";
};

// Forward marginal: sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps.
Grid3 add_noise(const Grid3& x0, int t, const Grid3& eps, const NoiseSchedule& sched);

// Strictly descending, starts at T; even rule t_j = round(T*(k-j)/k).
std::vector<int> select_timesteps(const SamplerConfig& cfg, const NoiseSchedule& sched);

// Anything that predicts the clean memory embedding from a noised one.
class ConditionalDenoiser {
  public:
    virtual ~ConditionalDenoiser() = default;
    virtual Grid3 predict(const Grid3& x_t, int t, const Grid3& z_img, int label) const = 0;
    virtual std::array<int, 3> output_shape() const = 0;
};

// Truncated few-step sampler (x0 parameterization). Starts from unit
// normal noise; between selected timesteps re-noises either
// deterministically from the implied eps (DDIM-style) or with fresh
// noise when cfg.stochastic.
MemoryEmbedding sample(const ConditionalDenoiser& denoiser, const ImageEmbedding& z_img, int label,
                       const SamplerConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed);

// Full T-step ancestral DDPM sampling from the predicted-x0 posterior
// mean; reference sampler, used in tests against the truncated one.
MemoryEmbedding posterior_sample_full(const ConditionalDenoiser& denoiser, const ImageEmbedding& z_img,
                                      int label, const NoiseSchedule& sched, std::uint64_t seed);

} // namespace memdiff
