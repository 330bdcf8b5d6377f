#include "memdiff/prior.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "memdiff/errors.hpp"
#include "memdiff/format.hpp"
#include "memdiff/hash.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/volumetric.hpp"

namespace memdiff {

namespace {

constexpr char kParamsMagic[4] = {'M', 'D', 'P', 'R'};
constexpr std::uint32_t kParamsVersion = 1;

constexpr std::uint64_t kTagInit = 0x696e6974ull;
constexpr std::uint64_t kTagBatch = 0x6261746368ull;
constexpr std::uint64_t kTagTargetNoise = 0x746e6f69ull;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

double prior_loss(const Grid3& prediction, const Grid3& target) {
    if (!prediction.same_shape(target)) throw DataError("prior_loss: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.v.size(); ++i) {
        const double d = prediction.v[i] - target.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(prediction.v.size());
}

Grid3 prior_loss_grad(const Grid3& prediction, const Grid3& target) {
    if (!prediction.same_shape(target)) throw DataError("prior_loss_grad: shape mismatch");
    Grid3 g(prediction.ch, prediction.h, prediction.w);
    const double inv_n = 2.0 / static_cast<double>(prediction.v.size());
    for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = inv_n * (prediction.v[i] - target.v[i]);
    return g;
}

double seg_loss(const MaskLogits& logits, const LabelMask& truth) {
    if (logits.grid.h != truth.h || logits.grid.w != truth.w) throw DataError("seg_loss: shape mismatch");
    const int k_classes = logits.grid.ch;
    const std::size_t n = static_cast<std::size_t>(truth.h) * truth.w;
    const double smooth = 1.0;
    double total = 0.0;
    for (int k = 0; k < k_classes; ++k) {
        const double* z = logits.grid.channel(k);
        double bce = 0.0, sum_pg = 0.0, sum_p = 0.0, sum_g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = truth.labels[i] == k + 1 ? 1.0 : 0.0;
            // stable BCE from logits: max(z,0) - z*g + log1p(exp(-|z|))
            bce += std::max(z[i], 0.0) - z[i] * g + std::log1p(std::exp(-std::abs(z[i])));
            const double p = sigmoid(z[i]);
            sum_pg += p * g;
            sum_p += p;
            sum_g += g;
        }
        const double dice_loss = 1.0 - (2.0 * sum_pg + smooth) / (sum_p + sum_g + smooth);
        total += bce / static_cast<double>(n) + dice_loss;
    }
    return total / k_classes;
}

MaskLogits seg_loss_grad(const MaskLogits& logits, const LabelMask& truth) {
    if (logits.grid.h != truth.h || logits.grid.w != truth.w)
        throw DataError("seg_loss_grad: shape mismatch");
    const int k_classes = logits.grid.ch;
    const std::size_t n = static_cast<std::size_t>(truth.h) * truth.w;
    const double smooth = 1.0;
    MaskLogits out{Grid3(k_classes, logits.grid.h, logits.grid.w)};
    for (int k = 0; k < k_classes; ++k) {
        const double* z = logits.grid.channel(k);
        double sum_pg = 0.0, sum_p = 0.0, sum_g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = truth.labels[i] == k + 1 ? 1.0 : 0.0;
            const double p = sigmoid(z[i]);
            sum_pg += p * g;
            sum_p += p;
            sum_g += g;
        }
        const double denom = sum_p + sum_g + smooth;
        const double num = 2.0 * sum_pg + smooth;
        double* d = out.grid.channel(k);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = truth.labels[i] == k + 1 ? 1.0 : 0.0;
            const double p = sigmoid(z[i]);
            const double d_bce = (p - g) / static_cast<double>(n);
            const double d_dice_dp = -(2.0 * g * denom - num) / (denom * denom);
            d[i] = (d_bce + d_dice_dp * p * (1.0 - p)) / k_classes;
        }
    }
    return out;
}

double combined_loss(double l_prior, double l_seg, const TrainConfig& cfg) {
    if (!std::isfinite(l_prior) || !std::isfinite(l_seg))
        throw NumericError("combined_loss: non-finite component");
    return cfg.lambda_prior * l_prior + cfg.lambda_seg * l_seg;
}

std::vector<TrainingExample> build_training_set(const std::vector<VolumeRecord>& volumes,
                                                const Backbone& backbone, bool cross_slice,
                                                double target_noise, std::uint64_t noise_seed) {
    const int k_classes = backbone.spec().k_classes;
    std::vector<TrainingExample> examples;
    for (std::size_t vi = 0; vi < volumes.size(); ++vi) {
        const auto& vol = volumes[vi];
        if (!vol.has_masks()) throw DataError("build_training_set: volume " + vol.volume_id + " has no masks");

        std::vector<ImageEmbedding> z_imgs;
        z_imgs.reserve(vol.slices.size());
        for (const auto& slice : vol.slices) z_imgs.push_back(backbone.encode_image(slice));

        const auto plan = plan_propagation(vol.slice_count());
        for (int s = 0; s < vol.slice_count(); ++s) {
            for (int l = 1; l <= k_classes; ++l) {
                TrainingExample ex;
                ex.z_img = z_imgs[s];
                ex.label = l;
                ex.truth = restrict_to_class(vol.masks[s], l);
                ex.z_mem_target = backbone.encode_memory(ex.truth, z_imgs[s]);
                if (target_noise > 0.0) {
                    // one offset per channel, fixed per example: spatially
                    // iid noise would average out through the conv's weight
                    // sharing and leave the trained prior clean
                    Rng rng(derive_seed(noise_seed, {kTagTargetNoise, vi, static_cast<std::uint64_t>(s),
                                                     static_cast<std::uint64_t>(l)}));
                    auto& grid = ex.z_mem_target.grid;
                    for (int c = 0; c < grid.ch; ++c) {
                        const double offset = target_noise * rng.normal();
                        double* cp = grid.channel(c);
                        for (int i = 0; i < grid.h * grid.w; ++i) cp[i] += offset;
                    }
                }
                if (cross_slice && plan.adjacency[s] >= 0) {
                    const int adj = plan.adjacency[s];
                    ex.adjacent_memory =
                        backbone.encode_memory(restrict_to_class(vol.masks[adj], l), z_imgs[adj]);
                }
                examples.push_back(std::move(ex));
            }
        }
    }
    return examples;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    int step = 0;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& st, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++st.step;
    const double c1 = 1.0 - std::pow(b1, st.step);
    const double c2 = 1.0 - std::pow(b2, st.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * grad[i];
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
    }
}

} // namespace

TrainResult train(const std::vector<TrainingExample>& examples, const Backbone& backbone,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
    if (examples.empty()) throw DataError("train: no examples");
    if (cfg.iterations < 1 || cfg.batch_size < 1) throw ConfigError("train: iterations and batch_size must be >= 1");
    if (cfg.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (cfg.lambda_prior < 0.0 || cfg.lambda_seg < 0.0) throw ConfigError("train: lambdas must be >= 0");
    if (cfg.optimizer != "adam") throw ConfigError("train: unknown optimizer " + cfg.optimizer);

    const auto& spec = backbone.spec();
    ArchDescriptor arch;
    arch.c_mem = spec.c_mem;
    arch.c_img = spec.c_img;
    arch.grid_h = spec.grid_h;
    arch.grid_w = spec.grid_w;
    arch.label_count = spec.k_classes + 1;
    arch.base_width = cfg.base_width;
    arch.levels = cfg.levels;
    arch.cond_dim = cfg.cond_dim;
    arch.fourier_bands = cfg.fourier_bands;

    Denoiser denoiser = Denoiser::init(arch, derive_seed(cfg.seed, {kTagInit}));
    const NoiseSchedule sched = make_schedule(cfg.t_steps, cfg.beta_const);

    AdamState adam;
    adam.m.assign(denoiser.param_count(), 0.0);
    adam.v.assign(denoiser.param_count(), 0.0);
    std::vector<double> grad(denoiser.param_count(), 0.0);

    Rng rng(derive_seed(cfg.seed, {kTagBatch}));
    const int n = static_cast<int>(examples.size());
    const bool seg_active = cfg.lambda_seg > 0.0;

    std::vector<LossRow> history;
    history.reserve(cfg.iterations);

    // Per-slot scratch; batch randomness is drawn sequentially and slot
    // gradients are merged in slot order, so the result is bit-identical
    // whether slots run in parallel or not.
    struct Slot {
        int example = 0;
        int t = 1;
        Grid3 x_t;
        std::vector<double> grad;
        DenoiserTape tape;
        double lp = 0.0, ls = 0.0;
    };
    std::vector<Slot> slots(cfg.batch_size);
    for (auto& slot : slots) slot.grad.assign(denoiser.param_count(), 0.0);
    Grid3 eps;

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        for (auto& slot : slots) {
            slot.example = rng.uniform_int(0, n - 1);
            slot.t = rng.uniform_int(1, sched.t_steps);
            const Grid3& target = examples[slot.example].z_mem_target.grid;
            eps = Grid3(target.ch, target.h, target.w);
            rng.fill_normal(eps);
            slot.x_t = add_noise(target, slot.t, eps, sched);
        }

        auto run_slot = [&](Slot& slot) {
            const auto& ex = examples[slot.example];
            const Grid3& target = ex.z_mem_target.grid;
            std::fill(slot.grad.begin(), slot.grad.end(), 0.0);

            const Grid3 x0_hat = denoiser.forward(slot.x_t, slot.t, ex.z_img.grid, ex.label, slot.tape);
            slot.lp = prior_loss(x0_hat, target);
            slot.ls = 0.0;

            Grid3 d_out = prior_loss_grad(x0_hat, target);
            for (double& v : d_out.v) v *= cfg.lambda_prior;

            if (seg_active) {
                // single-step surrogate: the seg branch decodes the direct
                // x0 prediction, fused with the adjacent truth memory
                const MemoryEmbedding z_hat{x0_hat};
                const MemoryEmbedding* adj = ex.adjacent_memory ? &*ex.adjacent_memory : nullptr;
                const MemoryEmbedding fused =
                    backbone.memory_attention(z_hat, adj, adj ? cfg.fusion_weight : 0.0);
                const MaskLogits logits = backbone.decode_mask(fused, ex.z_img);
                slot.ls = seg_loss(logits, ex.truth);

                const MaskLogits d_logits = seg_loss_grad(logits, ex.truth);
                const Grid3 d_fused = backbone.decode_mask_grad(fused, ex.z_img, d_logits);
                const double self_coeff = adj ? (1.0 - cfg.fusion_weight) : 1.0;
                for (std::size_t i = 0; i < d_out.v.size(); ++i)
                    d_out.v[i] += cfg.lambda_seg * self_coeff * d_fused.v[i];
            }

            denoiser.backward(slot.tape, d_out, slot.grad);
        };

        if (cfg.single_thread || cfg.batch_size == 1) {
            for (auto& slot : slots) run_slot(slot);
        } else {
#pragma omp parallel for schedule(static)
            for (int b = 0; b < cfg.batch_size; ++b) run_slot(slots[b]);
        }

        double lp_sum = 0.0, ls_sum = 0.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& slot : slots) {
            lp_sum += slot.lp;
            ls_sum += slot.ls;
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += slot.grad[i];
        }

        const double inv_b = 1.0 / cfg.batch_size;
        for (double& g : grad) g *= inv_b;
        const double lp_mean = lp_sum * inv_b;
        const double ls_mean = ls_sum * inv_b;
        if (!std::isfinite(lp_mean) || !std::isfinite(ls_mean))
            throw NumericError("train: diverged (non-finite loss) at iteration " + std::to_string(iter));
        const double total = seg_active ? combined_loss(lp_mean, ls_mean, cfg) : cfg.lambda_prior * lp_mean;

        adam_step(denoiser.params(), grad, adam, cfg.learning_rate);

        LossRow row;
        row.iteration = iter;
        row.l_prior = lp_mean;
        if (seg_active) row.l_seg = ls_mean;
        row.l_total = total;
        history.push_back(row);

        if (hooks.on_checkpoint &&
            std::find(hooks.checkpoint_iterations.begin(), hooks.checkpoint_iterations.end(), iter) !=
                hooks.checkpoint_iterations.end()) {
            Denoiser snapshot = denoiser;
            snapshot.snap_to_f32();
            hooks.on_checkpoint(iter, snapshot);
        }
    }

    denoiser.snap_to_f32();
    return TrainResult{std::move(denoiser), std::move(history)};
}

void save_params(const Denoiser& denoiser, const std::filesystem::path& path, std::uint64_t config_hash,
                 std::uint64_t seed) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write params file " + path.string());
    f.write(kParamsMagic, 4);
    auto put_u32 = [&f](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&f](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    put_u32(kParamsVersion);
    const auto& a = denoiser.arch();
    for (int v : {a.c_mem, a.c_img, a.grid_h, a.grid_w, a.label_count, a.base_width, a.levels, a.cond_dim,
                  a.fourier_bands})
        put_u32(static_cast<std::uint32_t>(v));
    put_u64(config_hash);
    put_u64(seed);
    put_u64(denoiser.param_count());
    std::vector<float> payload(denoiser.param_count());
    for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(denoiser.params()[i]);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw DataError("short write to params file " + path.string());
}

LoadedParams load_params(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open params file " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kParamsMagic, 4) != 0)
        throw DataError("not a parameter file: " + path.string());
    auto get_u32 = [&f, &path]() {
        std::uint32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        if (!f) throw DataError("truncated parameter file: " + path.string());
        return v;
    };
    auto get_u64 = [&f, &path]() {
        std::uint64_t v;
        f.read(reinterpret_cast<char*>(&v), 8);
        if (!f) throw DataError("truncated parameter file: " + path.string());
        return v;
    };
    if (get_u32() != kParamsVersion) throw DataError("unsupported parameter format version in " + path.string());
    ArchDescriptor a;
    a.c_mem = static_cast<int>(get_u32());
    a.c_img = static_cast<int>(get_u32());
    a.grid_h = static_cast<int>(get_u32());
    a.grid_w = static_cast<int>(get_u32());
    a.label_count = static_cast<int>(get_u32());
    a.base_width = static_cast<int>(get_u32());
    a.levels = static_cast<int>(get_u32());
    a.cond_dim = static_cast<int>(get_u32());
    a.fourier_bands = static_cast<int>(get_u32());

    LoadedParams out{Denoiser(a), 0, 0};
    out.config_hash = get_u64();
    out.seed = get_u64();
    const std::uint64_t count = get_u64();
    if (count != out.denoiser.param_count())
        throw DataError("parameter payload size mismatch in " + path.string() + ": file has " +
                        std::to_string(count) + ", architecture needs " +
                        std::to_string(out.denoiser.param_count()));
    std::vector<float> payload(count);
    f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw DataError("truncated parameter payload in " + path.string());
    for (std::size_t i = 0; i < payload.size(); ++i) out.denoiser.params()[i] = payload[i];
    return out;
}

void write_loss_csv(const std::vector<LossRow>& history, const std::filesystem::path& path,
                    std::uint64_t config_hash, std::uint64_t seed) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write loss csv " + path.string());
    f << "# config_hash=" << to_hex(config_hash) << "\n# seed=" << seed << "\n";
    f << "iteration,l_prior,l_seg,l_total\n";
    for (const auto& row : history) {
        f << row.iteration << ',' << fmt_double(row.l_prior) << ',';
        if (row.l_seg) f << fmt_double(*row.l_seg);
        f << ',' << fmt_double(row.l_total) << "\n";
    }
}

double smoothed_mean(const std::vector<double>& values, std::size_t begin, std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = begin; i < begin + count && i < values.size(); ++i) acc += values[i];
    return acc / static_cast<double>(std::min(count, values.size() - begin));
}

} // namespace memdiff
