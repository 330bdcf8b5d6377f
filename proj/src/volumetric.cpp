#include "memdiff/volumetric.hpp"

#include <string>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"

namespace memdiff {

namespace {
constexpr std::uint64_t kTagSliceSample = 0x736c6963ull;
}

PropagationPlan plan_propagation(int s_count) {
    if (s_count < 1) throw DataError("plan_propagation: volume needs at least one slice");
    PropagationPlan plan;
    plan.adjacency.assign(s_count, -1);
    const int mid = s_count / 2;
    plan.order.push_back(mid);
    for (int step = 1; step < s_count; ++step) {
        const int hi = mid + step;
        const int lo = mid - step;
        if (hi < s_count) {
            plan.order.push_back(hi);
            plan.adjacency[hi] = hi - 1;
        }
        if (lo >= 0) {
            plan.order.push_back(lo);
            plan.adjacency[lo] = lo + 1;
        }
    }
    return plan;
}

std::uint64_t slice_sample_seed(std::uint64_t base_seed, int volume_index, int slice, int label) {
    return derive_seed(base_seed, {kTagSliceSample, static_cast<std::uint64_t>(volume_index),
                                   static_cast<std::uint64_t>(slice), static_cast<std::uint64_t>(label)});
}

VolumeSegmentation segment_volume(const VolumeRecord& volume, const ConditionalDenoiser& denoiser,
                                  const Backbone& backbone, const NoiseSchedule& sched,
                                  const SegmentOptions& options, const std::vector<int>& labels,
                                  const MemoryProvider& provider) {
    const auto& spec = backbone.spec();
    const int s_count = volume.slice_count();
    const auto plan = plan_propagation(s_count);

    std::vector<ImageEmbedding> z_imgs;
    z_imgs.reserve(s_count);
    for (const auto& slice : volume.slices) z_imgs.push_back(backbone.encode_image(slice));

    VolumeSegmentation seg;
    seg.masks.assign(s_count, LabelMask());
    if (options.keep_embeddings) seg.per_slice_embeddings.assign(s_count, {});
    std::vector<bool> done(s_count, false);

    for (const int s : plan.order) {
        const int adj = options.cross_slice ? plan.adjacency[s] : -1;
        if (adj >= 0 && !done[adj])
            throw NumericError("segment_volume: plan visited slice " + std::to_string(s) +
                               " before its neighbor " + std::to_string(adj));
        seg.trace.emplace_back(s, adj);

        MaskLogits logits{Grid3(spec.k_classes, spec.img_h, spec.img_w)};
        for (const int label : labels) {
            MemoryEmbedding z_hat =
                provider ? provider(s, label)
                         : sample(denoiser, z_imgs[s], label, options.sampler, sched,
                                  slice_sample_seed(options.seed, options.volume_index, s, label));
            if (!z_hat.grid.all_finite())
                throw NumericError("segment_volume: non-finite memory embedding at slice " +
                                   std::to_string(s));

            MemoryEmbedding fused = z_hat;
            if (adj >= 0) {
                const MemoryEmbedding adj_mem =
                    backbone.encode_memory(restrict_to_class(seg.masks[adj], label), z_imgs[adj]);
                fused = backbone.memory_attention(z_hat, &adj_mem, options.fusion_weight);
            }
            const MaskLogits class_logits = backbone.decode_mask(fused, z_imgs[s]);
            const int k = label - 1;
            for (int y = 0; y < spec.img_h; ++y)
                for (int x = 0; x < spec.img_w; ++x) logits.grid.at(k, y, x) = class_logits.grid.at(k, y, x);

            if (options.keep_embeddings) seg.per_slice_embeddings[s].push_back(std::move(z_hat));
        }
        seg.masks[s] = threshold_mask(logits);
        done[s] = true;
    }
    return seg;
}

} // namespace memdiff
