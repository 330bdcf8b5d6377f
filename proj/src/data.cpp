#include "memdiff/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"
#include "memdiff/hash.hpp"
#include "memdiff/sfuda.hpp"

static_assert(std::endian::native == std::endian::little, "store format is little-endian");

namespace memdiff {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTagOrgans = 0x6f7267616e73ull;
constexpr std::uint64_t kTagTexture = 0x74657874ull;
constexpr std::uint64_t kTagShift = 0x7368696674ull;
constexpr std::uint64_t kTagSplit = 0x73706c6974ull;

std::string volume_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vol_%03d", index);
    return buf;
}

std::string slice_file(int s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "slice_%04d.f32", s);
    return buf;
}

std::string mask_file(int s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mask_%04d.u8", s);
    return buf;
}

double organ_intensity(int cls, int k_classes) {
    if (k_classes <= 1) return 0.65;
    return 0.30 + 0.60 * static_cast<double>(cls - 1) / (k_classes - 1);
}

} // namespace

std::array<double, 4> OrganTrack::at(int s, int s_count) const {
    const double u = s_count > 1 ? static_cast<double>(s) / (s_count - 1) : 0.0;
    const double arg = 2.0 * std::numbers::pi * freq * u;
    const double cx = cx0 + amp_cx * std::sin(arg + phase_cx);
    const double cy = cy0 + amp_cy * std::sin(arg + phase_cy);
    const double rmod = 1.0 + amp_r * std::sin(arg + phase_r);
    return {cx, cy, rx0 * rmod, ry0 * rmod};
}

int raster_block(int h, int w) { return (h % 2 == 0 && w % 2 == 0) ? 2 : 1; }

SyntheticVolumeSpec make_synthetic_volume_spec(int index, int s_count, int h, int w, int k_classes,
                                               std::uint64_t seed) {
    SyntheticVolumeSpec spec;
    spec.id = volume_name(index);
    spec.s_count = s_count;
    spec.h = h;
    spec.w = w;
    spec.k_classes = k_classes;
    spec.texture_seed = derive_seed(seed, {kTagTexture, static_cast<std::uint64_t>(index)});

    Rng rng(derive_seed(seed, {kTagOrgans, static_cast<std::uint64_t>(index)}));
    const double radius_scale = std::min(1.0, 4.0 / k_classes);
    for (int k = 1; k <= k_classes; ++k) {
        OrganTrack t;
        if (k_classes == 1) {
            t.cx0 = 0.5 + rng.uniform(-0.04, 0.04);
            t.cy0 = 0.5 + rng.uniform(-0.04, 0.04);
            t.rx0 = rng.uniform(0.15, 0.20);
            t.ry0 = rng.uniform(0.15, 0.20);
        } else {
            const double angle = 2.0 * std::numbers::pi * (k - 1) / k_classes + std::numbers::pi / 4.0;
            t.cx0 = 0.5 + 0.22 * std::cos(angle) + rng.uniform(-0.02, 0.02);
            t.cy0 = 0.5 + 0.22 * std::sin(angle) + rng.uniform(-0.02, 0.02);
            t.rx0 = rng.uniform(0.10, 0.13) * radius_scale;
            t.ry0 = rng.uniform(0.10, 0.13) * radius_scale;
        }
        t.amp_cx = rng.uniform(0.03, 0.07);
        t.amp_cy = rng.uniform(0.03, 0.07);
        t.phase_cx = rng.uniform(0.0, 2.0 * std::numbers::pi);
        t.phase_cy = rng.uniform(0.0, 2.0 * std::numbers::pi);
        t.amp_r = rng.uniform(0.10, 0.20);
        t.phase_r = rng.uniform(0.0, 2.0 * std::numbers::pi);
        t.freq = rng.uniform(0.5, 0.9);
        t.intensity = organ_intensity(k, k_classes);
        spec.organs.push_back(t);
    }
    return spec;
}

LabelMask rasterize_organs(const SyntheticVolumeSpec& spec, int s) {
    LabelMask mask(spec.h, spec.w);
    const int b = raster_block(spec.h, spec.w);
    const int bh = spec.h / b, bw = spec.w / b;
    for (int k = 1; k <= spec.k_classes; ++k) {
        const auto [cx, cy, rx, ry] = spec.organs[k - 1].at(s, spec.s_count);
        for (int by = 0; by < bh; ++by) {
            const double v = (by * b + b * 0.5) / spec.h;
            for (int bx = 0; bx < bw; ++bx) {
                const double u = (bx * b + b * 0.5) / spec.w;
                const double du = (u - cx) / rx, dv = (v - cy) / ry;
                if (du * du + dv * dv <= 1.0) {
                    for (int yy = by * b; yy < (by + 1) * b; ++yy)
                        for (int xx = bx * b; xx < (bx + 1) * b; ++xx)
                            mask.at(yy, xx) = static_cast<std::uint8_t>(k);
                }
            }
        }
    }
    return mask;
}

SliceImage render_slice(const SyntheticVolumeSpec& spec, int s, const LabelMask& mask) {
    SliceImage img(spec.h, spec.w);
    Rng rng(derive_seed(spec.texture_seed, {static_cast<std::uint64_t>(s)}));
    const double ph1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ph2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int y = 0; y < spec.h; ++y) {
        for (int x = 0; x < spec.w; ++x) {
            double v;
            const int cls = mask.at(y, x);
            if (cls > 0) {
                v = spec.organs[cls - 1].intensity;
            } else {
                v = 0.10 +
                    0.04 * std::sin(2.0 * std::numbers::pi * x / spec.w + ph1) *
                        std::sin(2.0 * std::numbers::pi * y / spec.h + ph2);
            }
            v += 0.015 * rng.normal();
            img.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

std::vector<VolumeRecord> generate_synthetic_dataset(int n_volumes, int slices_per_volume,
                                                     std::array<int, 2> hw, int k_classes,
                                                     std::uint64_t seed) {
    if (n_volumes < 1) throw ConfigError("n_volumes must be >= 1");
    if (slices_per_volume < 3) throw ConfigError("slices_per_volume must be >= 3");
    if (hw[0] < 8 || hw[1] < 8) throw ConfigError("slice dimensions must be >= 8");
    if (k_classes < 1) throw ConfigError("k_classes must be >= 1");

    std::vector<VolumeRecord> out;
    out.reserve(n_volumes);
    for (int i = 0; i < n_volumes; ++i) {
        const auto spec = make_synthetic_volume_spec(i, slices_per_volume, hw[0], hw[1], k_classes, seed);
        VolumeRecord rec;
        rec.volume_id = spec.id;
        rec.domain_tag = "source";
        rec.k_classes = k_classes;
        for (int s = 0; s < slices_per_volume; ++s) {
            LabelMask mask = rasterize_organs(spec, s);
            rec.slices.push_back(render_slice(spec, s, mask));
            rec.masks.push_back(std::move(mask));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

VolumeRecord apply_domain_shift(const VolumeRecord& src, const DomainShift& shift,
                                const std::string& new_id, std::uint64_t seed) {
    VolumeRecord out = src;
    out.volume_id = new_id;
    out.domain_tag = "target";
    Rng rng(derive_seed(seed, {kTagShift}));
    for (auto& slice : out.slices) {
        for (auto& px : slice.pixels) {
            double v = shift.scale * px + shift.offset;
            if (shift.noise_sigma > 0.0) v += shift.noise_sigma * rng.normal();
            px = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

StoreSummary write_volume_store(const std::vector<VolumeRecord>& records,
                                const std::filesystem::path& dir, std::uint64_t config_hash,
                                std::uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create store directory " + dir.string() + ": " + ec.message());

    json volumes = json::array();
    for (const auto& rec : records) {
        if (rec.slices.empty()) throw DataError("volume " + rec.volume_id + " has no slices");
        const int h = rec.slices.front().h, w = rec.slices.front().w;
        for (const auto& s : rec.slices)
            if (s.h != h || s.w != w)
                throw DataError("volume " + rec.volume_id + " has inconsistent slice dimensions");
        if (rec.has_masks() && rec.masks.size() != rec.slices.size())
            throw DataError("volume " + rec.volume_id + " mask count does not match slice count");

        volumes.push_back({{"id", rec.volume_id},
                           {"slices", rec.slice_count()},
                           {"height", h},
                           {"width", w},
                           {"k_classes", rec.k_classes},
                           {"domain_tag", rec.domain_tag},
                           {"has_masks", rec.has_masks()},
                           {"spacing", rec.spacing}});

        const fs::path vdir = dir / rec.volume_id;
        fs::create_directories(vdir, ec);
        if (ec) throw DataError("cannot create volume directory " + vdir.string());
        for (int s = 0; s < rec.slice_count(); ++s) {
            std::ofstream f(vdir / slice_file(s), std::ios::binary);
            if (!f) throw DataError("cannot write " + (vdir / slice_file(s)).string());
            f.write(reinterpret_cast<const char*>(rec.slices[s].pixels.data()),
                    static_cast<std::streamsize>(rec.slices[s].pixels.size() * sizeof(float)));
            if (rec.has_masks()) {
                std::ofstream m(vdir / mask_file(s), std::ios::binary);
                if (!m) throw DataError("cannot write " + (vdir / mask_file(s)).string());
                m.write(reinterpret_cast<const char*>(rec.masks[s].labels.data()),
                        static_cast<std::streamsize>(rec.masks[s].labels.size()));
            }
        }
    }

    json manifest = {{"format_version", 1},
                     {"config_hash", to_hex(config_hash)},
                     {"seed", seed},
                     {"volumes", volumes}};
    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw DataError("cannot write manifest under " + dir.string());
    mf << manifest.dump(2) << "\n";

    StoreSummary summary;
    for (const auto& rec : records) summary.volume_ids.push_back(rec.volume_id);
    return summary;
}

namespace {

std::vector<char> read_file_checked(const std::filesystem::path& p, std::size_t expected_bytes,
                                    AccessRecorder* recorder, const char* what) {
    if (recorder) recorder->record(p);
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw DataError(std::string("missing ") + what + " file: " + p.string());
    const auto size = static_cast<std::size_t>(f.tellg());
    if (size != expected_bytes)
        throw DataError(std::string(what) + " file " + p.string() + " has " + std::to_string(size) +
                        " bytes, manifest expects " + std::to_string(expected_bytes));
    f.seekg(0);
    std::vector<char> buf(size);
    f.read(buf.data(), static_cast<std::streamsize>(size));
    return buf;
}

} // namespace

std::vector<VolumeRecord> read_volume_store(const std::filesystem::path& dir, AccessRecorder* recorder) {
    const auto manifest_path = dir / "manifest.json";
    if (recorder) recorder->record(manifest_path);
    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("missing manifest: " + manifest_path.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != 1)
        throw DataError("unknown store format version in " + manifest_path.string());

    std::vector<VolumeRecord> out;
    for (const auto& v : manifest.at("volumes")) {
        VolumeRecord rec;
        rec.volume_id = v.at("id").get<std::string>();
        rec.domain_tag = v.at("domain_tag").get<std::string>();
        rec.k_classes = v.at("k_classes").get<int>();
        const auto spacing = v.at("spacing");
        for (int i = 0; i < 3; ++i) rec.spacing[i] = spacing.at(i).get<double>();
        const int s_count = v.at("slices").get<int>();
        const int h = v.at("height").get<int>();
        const int w = v.at("width").get<int>();
        const bool has_masks = v.at("has_masks").get<bool>();
        const auto n_px = static_cast<std::size_t>(h) * w;

        for (int s = 0; s < s_count; ++s) {
            const auto sbuf =
                read_file_checked(dir / rec.volume_id / slice_file(s), n_px * sizeof(float), recorder, "slice");
            SliceImage img(h, w);
            std::memcpy(img.pixels.data(), sbuf.data(), sbuf.size());
            rec.slices.push_back(std::move(img));
            if (has_masks) {
                const auto mbuf = read_file_checked(dir / rec.volume_id / mask_file(s), n_px, recorder, "mask");
                LabelMask mask(h, w);
                std::memcpy(mask.labels.data(), mbuf.data(), mbuf.size());
                rec.masks.push_back(std::move(mask));
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

SplitSpec make_split(const std::vector<std::string>& volume_ids, double fraction, std::uint64_t seed) {
    if (volume_ids.size() < 2) throw DataError("make_split needs at least 2 volumes");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must be in (0,1)");

    std::vector<std::string> ids = volume_ids;
    Rng rng(derive_seed(seed, {kTagSplit}));
    for (std::size_t i = ids.size() - 1; i > 0; --i)
        std::swap(ids[i], ids[rng.uniform_int(0, static_cast<int>(i))]);

    const auto n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::max(1L, std::lround(fraction * n)));

    SplitSpec split;
    split.fraction = fraction;
    split.seed = seed;
    split.train_volume_ids.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
    split.test_volume_ids.assign(ids.begin() + static_cast<long>(n_train), ids.end());
    std::sort(split.train_volume_ids.begin(), split.train_volume_ids.end());
    std::sort(split.test_volume_ids.begin(), split.test_volume_ids.end());
    return split;
}

} // namespace memdiff
