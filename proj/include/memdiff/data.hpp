#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memdiff/grid.hpp"

namespace memdiff {

class AccessRecorder; // sfuda.hpp

struct VolumeRecord {
    std::string volume_id;
    std::vector<SliceImage> slices;
    std::vector<LabelMask> masks; // empty for unlabeled target volumes
    std::string domain_tag = "source";
    std::array<double, 3> spacing = {1.0, 1.0, 1.0};
    int k_classes = 0;

    int slice_count() const { return static_cast<int>(slices.size()); }
    bool has_masks() const { return !masks.empty(); }
};

struct SplitSpec {
    std::vector<std::string> train_volume_ids;
    std::vector<std::string> test_volume_ids;
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

// Analytic trajectory of one synthetic organ. Center/radii are in
// normalized [0,1] coordinates and drift sinusoidally across slices,
// so adjacent slices stay correlated.
struct OrganTrack {
    double cx0 = 0, cy0 = 0;          // base center
    double amp_cx = 0, amp_cy = 0;    // center drift amplitude
    double phase_cx = 0, phase_cy = 0;
    double rx0 = 0, ry0 = 0;          // base radii
    double amp_r = 0, phase_r = 0;    // relative radius modulation
    double freq = 1.0;                // drift cycles across the volume
    double intensity = 0.5;           // organ gray level

    // Center and radii at slice s of a volume with s_count slices.
    std::array<double, 4> at(int s, int s_count) const;
};

struct SyntheticVolumeSpec {
    std::string id;
    int s_count = 0, h = 0, w = 0, k_classes = 0;
    std::vector<OrganTrack> organs; // index k-1 = class k
    std::uint64_t texture_seed = 0;
};

// Organ membership is decided per 2x2 pixel block (per pixel when H or W
// is odd) so truth masks sit on the mock backbone's block grid and the
// encode/decode round trip is lossless on them.
int raster_block(int h, int w);

SyntheticVolumeSpec make_synthetic_volume_spec(int index, int s_count, int h, int w, int k_classes,
                                               std::uint64_t seed);
LabelMask rasterize_organs(const SyntheticVolumeSpec& spec, int s);
SliceImage render_slice(const SyntheticVolumeSpec& spec, int s, const LabelMask& mask);

std::vector<VolumeRecord> generate_synthetic_dataset(int n_volumes, int slices_per_volume,
                                                     std::array<int, 2> hw, int k_classes,
                                                     std::uint64_t seed);

// Global intensity affine shift x -> scale*x + offset plus additive noise,
// clamped back to [0,1]; the desk-scale stand-in for a modality change.
struct DomainShift {
    double scale = 1.0;
    double offset = 0.0;
    double noise_sigma = 0.0;
};
VolumeRecord apply_domain_shift(const VolumeRecord& src, const DomainShift& shift,
                                const std::string& new_id, std::uint64_t seed);

struct StoreSummary {
    int format_version = 1;
    std::vector<std::string> volume_ids;
};

StoreSummary write_volume_store(const std::vector<VolumeRecord>& records,
                                const std::filesystem::path& dir, std::uint64_t config_hash = 0,
                                std::uint64_t seed = 0);
std::vector<VolumeRecord> read_volume_store(const std::filesystem::path& dir,
                                            AccessRecorder* recorder = nullptr);

SplitSpec make_split(const std::vector<std::string>& volume_ids, double fraction,
                     std::uint64_t seed);

} // namespace memdiff
