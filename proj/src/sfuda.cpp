#include "memdiff/sfuda.hpp"

#include <cstdio>
#include <fstream>

#include "memdiff/data.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/hash.hpp"
#include "memdiff/prior.hpp"

namespace memdiff {

namespace fs = std::filesystem;

namespace {

bool path_under(const fs::path& p, const fs::path& root) {
    auto rit = root.begin();
    auto pit = p.begin();
    for (; rit != root.end(); ++rit, ++pit) {
        if (pit == p.end() || *pit != *rit) return false;
    }
    return true;
}

fs::path canon(const fs::path& p) {
    std::error_code ec;
    auto c = fs::weakly_canonical(p, ec);
    return ec ? p.lexically_normal() : c;
}

} // namespace

void AccessRecorder::forbid_root(const fs::path& root) { forbidden_.push_back(canon(root)); }

void AccessRecorder::record(const fs::path& p) {
    const fs::path cp = canon(p);
    for (const auto& root : forbidden_)
        if (path_under(cp, root))
            throw DataError("source-free violation: attempted access to " + cp.string() +
                            " under forbidden source root " + root.string());
    log_.push_back(cp.string());
}

bool AccessRecorder::touches(const fs::path& root) const {
    const fs::path cr = canon(root);
    for (const auto& entry : log_)
        if (path_under(fs::path(entry), cr)) return true;
    return false;
}

namespace {

std::string cache_name(const std::string& volume_id, int slice, int label, std::uint64_t seed) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s_s%04d_l%d_%s.f64", volume_id.c_str(), slice, label,
                  to_hex(seed).c_str());
    return buf;
}

void write_cache(const fs::path& p, const Grid3& g) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write embedding cache " + p.string());
    f.write(reinterpret_cast<const char*>(g.v.data()),
            static_cast<std::streamsize>(g.v.size() * sizeof(double)));
}

bool read_cache(const fs::path& p, Grid3& g, AccessRecorder& rec) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) return false;
    rec.record(p);
    if (static_cast<std::size_t>(f.tellg()) != g.v.size() * sizeof(double))
        throw DataError("embedding cache size mismatch: " + p.string());
    f.seekg(0);
    f.read(reinterpret_cast<char*>(g.v.data()), static_cast<std::streamsize>(g.v.size() * sizeof(double)));
    return true;
}

} // namespace

SfudaResult run_sfuda(const SfudaConfig& cfg, const Backbone& backbone, const NoiseSchedule& sched) {
    SfudaResult result;
    AccessRecorder rec;
    for (const auto& root : cfg.forbidden_source_roots) rec.forbid_root(root);

    rec.record(cfg.params_path);
    result.params_hash_before = hash_file(cfg.params_path);
    LoadedParams loaded = load_params(cfg.params_path);
    const auto& spec = backbone.spec();
    if (loaded.denoiser.arch().c_mem != spec.c_mem || loaded.denoiser.arch().c_img != spec.c_img ||
        loaded.denoiser.arch().grid_h != spec.grid_h || loaded.denoiser.arch().grid_w != spec.grid_w ||
        loaded.denoiser.arch().label_count != spec.k_classes + 1)
        throw ConfigError("params file architecture does not match the backbone spec");

    const auto volumes = read_volume_store(cfg.target_store, &rec);
    if (volumes.empty()) throw DataError("sfuda: target store is empty");

    std::vector<int> labels;
    for (int l = 1; l <= spec.k_classes; ++l) labels.push_back(l);

    const fs::path cache_dir = cfg.out_dir / "cache" / to_hex(result.params_hash_before);
    std::error_code ec;
    fs::create_directories(cache_dir, ec);
    if (ec) throw DataError("cannot create cache directory " + cache_dir.string());

    // phase 1: pseudo-memory embeddings for every (volume, slice, label),
    // cached so phase 2 can restart without resampling
    std::vector<std::vector<std::vector<MemoryEmbedding>>> cache(volumes.size());
    for (std::size_t vi = 0; vi < volumes.size(); ++vi) {
        const auto& vol = volumes[vi];
        cache[vi].resize(vol.slice_count());
        for (int s = 0; s < vol.slice_count(); ++s) {
            const ImageEmbedding z_img = backbone.encode_image(vol.slices[s]);
            for (const int label : labels) {
                const std::uint64_t seed = slice_sample_seed(cfg.seed, static_cast<int>(vi), s, label);
                const fs::path cpath = cache_dir / cache_name(vol.volume_id, s, label, seed);
                MemoryEmbedding z{Grid3(spec.c_mem, spec.grid_h, spec.grid_w)};
                if (!read_cache(cpath, z.grid, rec)) {
                    z = sample(loaded.denoiser, z_img, label, cfg.sampler, sched, seed);
                    write_cache(cpath, z.grid);
                }
                cache[vi][s].push_back(std::move(z));
            }
        }
    }

    // phase 2: per-slice decoding with middle-out propagation (Eq. 3 path)
    for (std::size_t vi = 0; vi < volumes.size(); ++vi) {
        const auto& vol = volumes[vi];
        SegmentOptions opt;
        opt.sampler = cfg.sampler;
        opt.fusion_weight = cfg.fusion_weight;
        opt.cross_slice = cfg.cross_slice;
        opt.seed = cfg.seed;
        opt.volume_index = static_cast<int>(vi);
        const auto& vol_cache = cache[vi];
        MemoryProvider provider = [&vol_cache, &labels](int slice, int label) {
            for (std::size_t li = 0; li < labels.size(); ++li)
                if (labels[li] == label) return vol_cache[slice][li];
            throw DataError("sfuda: no cached embedding for label " + std::to_string(label));
        };
        result.segmentations.push_back(
            segment_volume(vol, loaded.denoiser, backbone, sched, opt, labels, provider));
        result.volume_ids.push_back(vol.volume_id);
    }

    bool all_masked = true;
    for (const auto& vol : volumes) all_masked = all_masked && vol.has_masks();
    if (all_masked) {
        std::map<std::string, std::vector<LabelMask>> preds;
        for (std::size_t vi = 0; vi < volumes.size(); ++vi)
            preds[volumes[vi].volume_id] = result.segmentations[vi].masks;
        result.report = evaluate(preds, volumes, labels, cfg.config_hash, cfg.seed);
    }

    result.params_hash_after = hash_file(cfg.params_path);
    if (result.params_hash_after != result.params_hash_before)
        throw NumericError("sfuda: parameter file changed during the run");
    result.access_log = rec.log();
    return result;
}

} // namespace memdiff
