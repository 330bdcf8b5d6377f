#include "memdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"

namespace memdiff {

NoiseSchedule make_schedule(int t_steps, double beta_const) {
    if (t_steps < 1) throw ConfigError("schedule needs t_steps >= 1");
    if (!(beta_const > 0.0 && beta_const < 1.0)) throw ConfigError("beta must be in (0,1)");
    NoiseSchedule s;
    s.t_steps = t_steps;
    s.beta.assign(t_steps, beta_const);
    s.alpha.resize(t_steps);
    s.alpha_bar.resize(t_steps);
    double prod = 1.0;
    for (int i = 0; i < t_steps; ++i) {
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

bool terminal_near_noise(const NoiseSchedule& sched) {
    return !sched.alpha_bar.empty() && sched.alpha_bar.back() < 0.01;
}

Grid3 add_noise(const Grid3& x0, int t, const Grid3& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.t_steps)
        throw ConfigError("add_noise: t=" + std::to_string(t) + " outside [1," +
                          std::to_string(sched.t_steps) + "]");
    if (!x0.same_shape(eps)) throw DataError("add_noise: eps shape mismatch");
    const double ab = sched.alpha_bar_at(t);
    const double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
    Grid3 out(x0.ch, x0.h, x0.w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = cs * x0.v[i] + cn * eps.v[i];
    return out;
}

std::vector<int> select_timesteps(const SamplerConfig& cfg, const NoiseSchedule& sched) {
    if (cfg.k_steps < 1 || cfg.k_steps > sched.t_steps)
        throw ConfigError("sampler k_steps must be in [1, T]");
    if (cfg.timestep_selection != "even")
        throw ConfigError("unknown timestep selection rule: " + cfg.timestep_selection);
    std::vector<int> ts;
    ts.reserve(cfg.k_steps);
    const double T = sched.t_steps, k = cfg.k_steps;
    for (int j = 0; j < cfg.k_steps; ++j)
        ts.push_back(static_cast<int>(std::lround(T * (k - j) / k)));
    return ts;
}

namespace {

Grid3 predict_checked(const ConditionalDenoiser& denoiser, const Grid3& x, int t, const Grid3& z_img,
                      int label) {
    Grid3 x0 = denoiser.predict(x, t, z_img, label);
    if (!x0.all_finite())
        throw NumericError("denoiser returned non-finite output at t=" + std::to_string(t));
    return x0;
}

} // namespace

MemoryEmbedding sample(const ConditionalDenoiser& denoiser, const ImageEmbedding& z_img, int label,
                       const SamplerConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed) {
    const auto shape = denoiser.output_shape();
    Grid3 x(shape[0], shape[1], shape[2]);
    Rng rng(seed);
    rng.fill_normal(x);

    const auto timesteps = select_timesteps(cfg, sched);
    for (std::size_t j = 0; j < timesteps.size(); ++j) {
        const int t = timesteps[j];
        Grid3 x0 = predict_checked(denoiser, x, t, z_img.grid, label);
        if (j + 1 == timesteps.size()) return MemoryEmbedding{std::move(x0)};

        const int t_next = timesteps[j + 1];
        const double ab_t = sched.alpha_bar_at(t);
        const double ab_n = sched.alpha_bar_at(t_next);
        Grid3 eps_hat(x.ch, x.h, x.w);
        if (cfg.stochastic) {
            rng.fill_normal(eps_hat);
        } else {
            const double denom = std::sqrt(1.0 - ab_t);
            for (std::size_t i = 0; i < x.v.size(); ++i)
                eps_hat.v[i] = (x.v[i] - std::sqrt(ab_t) * x0.v[i]) / denom;
        }
        for (std::size_t i = 0; i < x.v.size(); ++i)
            x.v[i] = std::sqrt(ab_n) * x0.v[i] + std::sqrt(1.0 - ab_n) * eps_hat.v[i];
    }
    throw NumericError("sampler produced no output"); // unreachable: k_steps >= 1
}

MemoryEmbedding posterior_sample_full(const ConditionalDenoiser& denoiser, const ImageEmbedding& z_img,
                                      int label, const NoiseSchedule& sched, std::uint64_t seed) {
    const auto shape = denoiser.output_shape();
    Grid3 x(shape[0], shape[1], shape[2]);
    Rng rng(seed);
    rng.fill_normal(x);

    Grid3 noise(x.ch, x.h, x.w);
    for (int t = sched.t_steps; t >= 1; --t) {
        Grid3 x0 = predict_checked(denoiser, x, t, z_img.grid, label);
        if (t == 1) return MemoryEmbedding{std::move(x0)}; // posterior mean at t=1 is x0 exactly
        const double ab_t = sched.alpha_bar_at(t);
        const double ab_prev = sched.alpha_bar_prev(t);
        const double beta_t = sched.beta_at(t);
        const double alpha_t = sched.alpha_at(t);
        const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
        const double cx = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
        const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta_t);
        rng.fill_normal(noise);
        for (std::size_t i = 0; i < x.v.size(); ++i)
            x.v[i] = c0 * x0.v[i] + cx * x.v[i] + sigma * noise.v[i];
    }
    throw NumericError("posterior sampler produced no output"); // unreachable: T >= 1
}

} // namespace memdiff
