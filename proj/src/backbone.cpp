#include "memdiff/backbone.hpp"

#include <cmath>
#include <string>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"

namespace memdiff {

namespace {

constexpr std::uint64_t kTagChannelMap = 0x6368616eull;
constexpr std::uint64_t kTagProjection = 0x70726f6aull;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw DataError(msg);
}

} // namespace

MockBackbone::MockBackbone(BackboneSpec spec) : Backbone(std::move(spec)) {
    require(spec_.c_img > 0 && spec_.c_mem > 0 && spec_.k_classes > 0, "backbone spec dims must be positive");
    require(spec_.c_mem >= spec_.k_classes, "c_mem must be >= k_classes (mask channels)");
    require(spec_.grid_h > 0 && spec_.grid_w > 0, "grid dims must be positive");
    require(spec_.img_h % spec_.grid_h == 0 && spec_.img_w % spec_.grid_w == 0,
            "grid dims must divide image dims");

    Rng cm(derive_seed(spec_.seed, {kTagChannelMap}));
    chan_weight_.resize(spec_.c_img);
    chan_bias_.resize(spec_.c_img);
    for (int c = 0; c < spec_.c_img; ++c) {
        const double mag = cm.uniform(0.25, 1.25);
        chan_weight_[c] = (cm.next_u64() & 1) ? mag : -mag;
        chan_bias_[c] = cm.uniform(-0.5, 0.5);
    }

    Rng pr(derive_seed(spec_.seed, {kTagProjection}));
    const int c_proj = spec_.c_mem - spec_.k_classes;
    proj_.resize(static_cast<std::size_t>(c_proj) * spec_.c_img);
    for (auto& v : proj_) v = pr.uniform(-0.35, 0.35);
}

ImageEmbedding MockBackbone::encode_image(const SliceImage& slice) const {
    require(slice.h == spec_.img_h && slice.w == spec_.img_w,
            "encode_image: slice is " + std::to_string(slice.h) + "x" + std::to_string(slice.w) +
                ", backbone expects " + std::to_string(spec_.img_h) + "x" + std::to_string(spec_.img_w));
    const int bh = spec_.img_h / spec_.grid_h, bw = spec_.img_w / spec_.grid_w;
    ImageEmbedding z{Grid3(spec_.c_img, spec_.grid_h, spec_.grid_w)};
    for (int gy = 0; gy < spec_.grid_h; ++gy) {
        for (int gx = 0; gx < spec_.grid_w; ++gx) {
            double acc = 0.0;
            for (int y = gy * bh; y < (gy + 1) * bh; ++y)
                for (int x = gx * bw; x < (gx + 1) * bw; ++x) acc += slice.at(y, x);
            const double avg = acc / (bh * bw);
            for (int c = 0; c < spec_.c_img; ++c)
                z.grid.at(c, gy, gx) = chan_weight_[c] * avg + chan_bias_[c];
        }
    }
    return z;
}

Grid3 MockBackbone::block_class_planes(const Grid3& soft_planes) const {
    const int bh = spec_.img_h / spec_.grid_h, bw = spec_.img_w / spec_.grid_w;
    Grid3 planes(spec_.k_classes, spec_.grid_h, spec_.grid_w);
    for (int k = 0; k < spec_.k_classes; ++k) {
        for (int gy = 0; gy < spec_.grid_h; ++gy) {
            for (int gx = 0; gx < spec_.grid_w; ++gx) {
                double acc = 0.0;
                for (int y = gy * bh; y < (gy + 1) * bh; ++y)
                    for (int x = gx * bw; x < (gx + 1) * bw; ++x) acc += soft_planes.at(k, y, x);
                planes.at(k, gy, gx) = acc / (bh * bw);
            }
        }
    }
    return planes;
}

namespace {

// Shared tail of both encode_memory overloads: mask planes + z_img projection.
MemoryEmbedding assemble_memory(const BackboneSpec& spec, const Grid3& planes,
                                const ImageEmbedding& z_img, const std::vector<double>& proj) {
    MemoryEmbedding z{Grid3(spec.c_mem, spec.grid_h, spec.grid_w)};
    for (int k = 0; k < spec.k_classes; ++k)
        for (int gy = 0; gy < spec.grid_h; ++gy)
            for (int gx = 0; gx < spec.grid_w; ++gx) z.grid.at(k, gy, gx) = planes.at(k, gy, gx);
    const int c_proj = spec.c_mem - spec.k_classes;
    for (int j = 0; j < c_proj; ++j) {
        for (int gy = 0; gy < spec.grid_h; ++gy) {
            for (int gx = 0; gx < spec.grid_w; ++gx) {
                double acc = 0.0;
                for (int c = 0; c < spec.c_img; ++c)
                    acc += proj[static_cast<std::size_t>(j) * spec.c_img + c] * z_img.grid.at(c, gy, gx);
                z.grid.at(spec.k_classes + j, gy, gx) = acc;
            }
        }
    }
    return z;
}

} // namespace

MemoryEmbedding MockBackbone::encode_memory(const LabelMask& mask, const ImageEmbedding& z_img) const {
    require(mask.h == spec_.img_h && mask.w == spec_.img_w, "encode_memory: mask dims mismatch");
    require(z_img.grid.ch == spec_.c_img && z_img.grid.h == spec_.grid_h && z_img.grid.w == spec_.grid_w,
            "encode_memory: z_img shape mismatch");
    for (auto v : mask.labels)
        require(v <= spec_.k_classes, "encode_memory: mask label exceeds k_classes");

    Grid3 hard(spec_.k_classes, spec_.img_h, spec_.img_w);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            const int cls = mask.at(y, x);
            if (cls > 0) hard.at(cls - 1, y, x) = 1.0;
        }
    return assemble_memory(spec_, block_class_planes(hard), z_img, proj_);
}

MemoryEmbedding MockBackbone::encode_memory(const MaskLogits& logits, const ImageEmbedding& z_img) const {
    require(logits.grid.ch == spec_.k_classes && logits.grid.h == spec_.img_h && logits.grid.w == spec_.img_w,
            "encode_memory: logits shape mismatch");
    require(z_img.grid.ch == spec_.c_img && z_img.grid.h == spec_.grid_h && z_img.grid.w == spec_.grid_w,
            "encode_memory: z_img shape mismatch");
    Grid3 soft(spec_.k_classes, spec_.img_h, spec_.img_w);
    for (std::size_t i = 0; i < soft.v.size(); ++i) soft.v[i] = sigmoid(logits.grid.v[i]);
    return assemble_memory(spec_, block_class_planes(soft), z_img, proj_);
}

MemoryEmbedding MockBackbone::memory_attention(const MemoryEmbedding& self, const MemoryEmbedding* adjacent,
                                               double fusion_weight) const {
    if (adjacent == nullptr) return self;
    require(self.grid.same_shape(adjacent->grid), "memory_attention: shape mismatch");
    require(fusion_weight >= 0.0 && fusion_weight <= 1.0, "memory_attention: fusion weight out of [0,1]");
    MemoryEmbedding out{Grid3(self.grid.ch, self.grid.h, self.grid.w)};
    for (std::size_t i = 0; i < out.grid.v.size(); ++i)
        out.grid.v[i] = (1.0 - fusion_weight) * self.grid.v[i] + fusion_weight * adjacent->grid.v[i];
    return out;
}

MaskLogits MockBackbone::decode_mask(const MemoryEmbedding& fused, const ImageEmbedding& z_img) const {
    require(fused.grid.ch == spec_.c_mem && fused.grid.h == spec_.grid_h && fused.grid.w == spec_.grid_w,
            "decode_mask: memory shape mismatch");
    require(z_img.grid.ch == spec_.c_img && z_img.grid.h == spec_.grid_h && z_img.grid.w == spec_.grid_w,
            "decode_mask: z_img shape mismatch");
    const int bh = spec_.img_h / spec_.grid_h, bw = spec_.img_w / spec_.grid_w;
    MaskLogits out{Grid3(spec_.k_classes, spec_.img_h, spec_.img_w)};
    for (int k = 0; k < spec_.k_classes; ++k) {
        for (int gy = 0; gy < spec_.grid_h; ++gy) {
            for (int gx = 0; gx < spec_.grid_w; ++gx) {
                const double p = std::clamp(fused.grid.at(k, gy, gx), kLogitEps, 1.0 - kLogitEps);
                const double logit = std::log(p / (1.0 - p));
                for (int y = gy * bh; y < (gy + 1) * bh; ++y)
                    for (int x = gx * bw; x < (gx + 1) * bw; ++x) out.grid.at(k, y, x) = logit;
            }
        }
    }
    return out;
}

Grid3 MockBackbone::decode_mask_grad(const MemoryEmbedding& fused, const ImageEmbedding& z_img,
                                     const MaskLogits& d_logits) const {
    require(fused.grid.ch == spec_.c_mem && fused.grid.h == spec_.grid_h && fused.grid.w == spec_.grid_w,
            "decode_mask_grad: memory shape mismatch");
    require(d_logits.grid.ch == spec_.k_classes && d_logits.grid.h == spec_.img_h &&
                d_logits.grid.w == spec_.img_w,
            "decode_mask_grad: logits shape mismatch");
    (void)z_img; // the mock decode reads only the memory's mask channels
    const int bh = spec_.img_h / spec_.grid_h, bw = spec_.img_w / spec_.grid_w;
    Grid3 d_fused(spec_.c_mem, spec_.grid_h, spec_.grid_w);
    for (int k = 0; k < spec_.k_classes; ++k) {
        for (int gy = 0; gy < spec_.grid_h; ++gy) {
            for (int gx = 0; gx < spec_.grid_w; ++gx) {
                const double v = fused.grid.at(k, gy, gx);
                if (v <= kLogitEps || v >= 1.0 - kLogitEps) continue; // clamp saturates
                double acc = 0.0;
                for (int y = gy * bh; y < (gy + 1) * bh; ++y)
                    for (int x = gx * bw; x < (gx + 1) * bw; ++x) acc += d_logits.grid.at(k, y, x);
                d_fused.at(k, gy, gx) = acc / (v * (1.0 - v));
            }
        }
    }
    return d_fused;
}

LabelMask threshold_mask(const MaskLogits& logits) {
    if (!logits.grid.all_finite()) throw NumericError("threshold_mask: non-finite logits");
    LabelMask mask(logits.grid.h, logits.grid.w);
    for (int y = 0; y < logits.grid.h; ++y) {
        for (int x = 0; x < logits.grid.w; ++x) {
            int best = 0;
            double best_v = 0.0; // class wins only when its logit exceeds 0
            for (int k = 0; k < logits.grid.ch; ++k) {
                const double v = logits.grid.at(k, y, x);
                if (v > best_v) {
                    best_v = v;
                    best = k + 1;
                }
            }
            mask.at(y, x) = static_cast<std::uint8_t>(best);
        }
    }
    return mask;
}

} // namespace memdiff
