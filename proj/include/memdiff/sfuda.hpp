#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memdiff/backbone.hpp"
#include "memdiff/metrics.hpp"
#include "memdiff/schedule.hpp"
#include "memdiff/volumetric.hpp"

namespace memdiff {

// Records every file opened during a run and refuses paths under any
// forbidden root; the auditable source-free guarantee.
class AccessRecorder {
  public:
    void forbid_root(const std::filesystem::path& root);
    void record(const std::filesystem::path& p); // throws DataError on forbidden access
    const std::vector<std::string>& log() const { return log_; }
    bool touches(const std::filesystem::path& root) const;

  private:
    std::vector<std::filesystem::path> forbidden_;
    std::vector<std::string> log_;
};

struct SfudaConfig {
    std::filesystem::path params_path;
    std::filesystem::path target_store;
    std::filesystem::path out_dir;
    // Source-domain store roots this run must never read.
    std::vector<std::filesystem::path> forbidden_source_roots;
    SamplerConfig sampler;
    double fusion_weight = 0.3;
    bool cross_slice = true;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

struct SfudaResult {
    std::optional<DiceReport> report; // present when target volumes carry masks
    std::vector<std::string> volume_ids;
    std::vector<VolumeSegmentation> segmentations;
    std::vector<std::string> access_log;
    std::uint64_t params_hash_before = 0;
    std::uint64_t params_hash_after = 0;
};

// Applies a source-trained prior to target volumes with no source data
// access and no parameter updates. Phase 1 samples pseudo-memory
// embeddings for every (slice, label) and caches them under out_dir so
// phase 2 (per-slice decoding with middle-out propagation) is restartable.
SfudaResult run_sfuda(const SfudaConfig& cfg, const Backbone& backbone, const NoiseSchedule& sched);

} // namespace memdiff
