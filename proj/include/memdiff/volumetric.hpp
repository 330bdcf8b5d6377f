#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "memdiff/backbone.hpp"
#include "memdiff/data.hpp"
#include "memdiff/grid.hpp"
#include "memdiff/schedule.hpp"

namespace memdiff {

// Middle-out visitation order: middle slice first, then alternating
// outward; adjacency[i] is the inward neighbor conditioning slice i
// (-1 for the middle slice).
struct PropagationPlan {
    std::vector<int> order;
    std::vector<int> adjacency;
};

PropagationPlan plan_propagation(int s_count);

struct SegmentOptions {
    SamplerConfig sampler;
    double fusion_weight = 0.3;
    bool cross_slice = true; // false = per-slice prior only (no-3D ablation)
    std::uint64_t seed = 0;
    int volume_index = 0; // part of the per-slice sampling seed derivation
    bool keep_embeddings = false;
};

struct VolumeSegmentation {
    std::vector<LabelMask> masks;
    // (slice, label) -> sampled embedding, retained when keep_embeddings
    std::vector<std::vector<MemoryEmbedding>> per_slice_embeddings;
    // instrumentation: (visited slice, adjacency slice used or -1), in visit order
    std::vector<std::pair<int, int>> trace;
};

// Overrides the in-loop sampler (sfuda phase 2 replays cached embeddings).
using MemoryProvider = std::function<MemoryEmbedding(int slice, int label)>;

// Prompt-free full-volume segmentation: per slice and organ label the
// prior samples a memory embedding conditioned on the slice's image
// embedding; cross-slice mode fuses it with the memory encoding of the
// inward neighbor's already-decoded mask before decoding.
VolumeSegmentation segment_volume(const VolumeRecord& volume, const ConditionalDenoiser& denoiser,
                                  const Backbone& backbone, const NoiseSchedule& sched,
                                  const SegmentOptions& options, const std::vector<int>& labels,
                                  const MemoryProvider& provider = nullptr);

std::uint64_t slice_sample_seed(std::uint64_t base_seed, int volume_index, int slice, int label);

} // namespace memdiff
