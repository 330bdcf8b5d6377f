#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "memdiff/grid.hpp"

namespace memdiff {

struct ImageEmbedding {
    Grid3 grid; // c_img x grid_h x grid_w
};

struct MemoryEmbedding {
    Grid3 grid; // c_mem x grid_h x grid_w
};

struct MaskLogits {
    Grid3 grid; // k_classes x img_h x img_w
};

struct BackboneSpec {
    int c_img = 8;
    int c_mem = 8;
    int grid_h = 16, grid_w = 16; // embedding plane
    int img_h = 32, img_w = 32;   // slice plane; grid dims must divide these
    int k_classes = 4;
    std::string kind = "mock";
    std::uint64_t seed = 0;
};

// Frozen-backbone facade: image encoder, memory encoder ME, memory
// attention MA, mask decoder D. Implementations are immutable after
// construction; a real-backbone adapter plugs in behind this interface.
class Backbone {
  public:
    virtual ~Backbone() = default;

    const BackboneSpec& spec() const { return spec_; }

    virtual ImageEmbedding encode_image(const SliceImage& slice) const = 0;
    virtual MemoryEmbedding encode_memory(const LabelMask& mask, const ImageEmbedding& z_img) const = 0;
    virtual MemoryEmbedding encode_memory(const MaskLogits& logits, const ImageEmbedding& z_img) const = 0;
    // Identity when adjacent is null, else (1-w)*self + w*adjacent.
    virtual MemoryEmbedding memory_attention(const MemoryEmbedding& self, const MemoryEmbedding* adjacent,
                                             double fusion_weight) const = 0;
    virtual MaskLogits decode_mask(const MemoryEmbedding& fused, const ImageEmbedding& z_img) const = 0;
    // dL/dfused given dL/dlogits; lets the segmentation loss backpropagate
    // through the frozen decoder. Parameters stay untouched (frozen contract).
    virtual Grid3 decode_mask_grad(const MemoryEmbedding& fused, const ImageEmbedding& z_img,
                                   const MaskLogits& d_logits) const = 0;

  protected:
    explicit Backbone(BackboneSpec spec) : spec_(std::move(spec)) {}
    BackboneSpec spec_;
};

// Deterministic, analytically invertible mock:
//  - encode_image: block-average downsample + fixed seeded linear channel map
//  - encode_memory: first K channels are block-downsampled per-class mask
//    planes, remaining channels a fixed linear projection of z_img
//  - decode_mask: block-upsample the K mask channels, occupancy -> logit
// For hard masks on the block grid, D(MA(ME(y,z), absent), z) recovers y
// exactly.
class MockBackbone final : public Backbone {
  public:
    explicit MockBackbone(BackboneSpec spec);

    ImageEmbedding encode_image(const SliceImage& slice) const override;
    MemoryEmbedding encode_memory(const LabelMask& mask, const ImageEmbedding& z_img) const override;
    MemoryEmbedding encode_memory(const MaskLogits& logits, const ImageEmbedding& z_img) const override;
    MemoryEmbedding memory_attention(const MemoryEmbedding& self, const MemoryEmbedding* adjacent,
                                     double fusion_weight) const override;
    MaskLogits decode_mask(const MemoryEmbedding& fused, const ImageEmbedding& z_img) const override;
    Grid3 decode_mask_grad(const MemoryEmbedding& fused, const ImageEmbedding& z_img,
                           const MaskLogits& d_logits) const override;

    static constexpr double kLogitEps = 1e-4;

  private:
    Grid3 block_class_planes(const Grid3& soft_planes) const; // img plane -> grid plane per class
    std::vector<double> chan_weight_, chan_bias_; // c_img entries each
    std::vector<double> proj_;                    // (c_mem - k) x c_img
};

// Argmax over class logits where the max exceeds 0, else background;
// ties go to the lowest class index.
LabelMask threshold_mask(const MaskLogits& logits);

} // namespace memdiff
