#pragma once
#include <array>
#include <cstdint>
#include <vector>

#include "memdiff/grid.hpp"
#include "memdiff/schedule.hpp"

namespace memdiff {

// Shape contract of a conditional denoiser network; persisted alongside
// the parameters and checked on load.
struct ArchDescriptor {
    int c_mem = 8;
    int c_img = 8;
    int grid_h = 16, grid_w = 16;
    int label_count = 5; // rows in the label table; organ labels 1..K
    int base_width = 32;
    int levels = 2; // 1 = single stage, 2 = encoder/bottleneck/decoder
    int cond_dim = 64;
    // sinusoidal lift of the conditioning channels at the input stem:
    // each z_img channel x contributes sin(2^j x), cos(2^j x) pairs
    int fourier_bands = 4;

    bool operator==(const ArchDescriptor&) const = default;
};

struct TensorRef {
    std::size_t off = 0;
    std::array<int, 4> dims = {0, 0, 0, 0};
    std::size_t count() const {
        std::size_t n = 1;
        for (int d : dims)
            if (d > 0) n *= static_cast<std::size_t>(d);
        return n;
    }
};

// Offsets of every learned tensor inside the flat parameter vector.
struct DenoiserLayout {
    TensorRef time_w, time_b;
    TensorRef label_table;
    struct Stage {
        TensorRef inj_a_w, inj_a_b; // cond -> per-channel bias, first conv
        TensorRef inj_b_w, inj_b_b; // cond -> per-channel bias, second conv
        TensorRef conv_a_w, conv_a_b;
        TensorRef conv_b_w, conv_b_b;
        int in_ch = 0, out_ch = 0;
    };
    Stage s0, s1, s2; // s1/s2 unused when levels == 1
    TensorRef head_w, head_b;
    std::size_t total = 0;
};

DenoiserLayout make_layout(const ArchDescriptor& arch);

// Saved activations from one forward pass, consumed by backward().
struct DenoiserTape {
    Grid3 in;
    std::vector<double> sin_emb, tf_pre, cond;
    int label = 0;
    Grid3 a0_pre, a0, b0_pre, f0;
    Grid3 pooled, a1_pre, a1, b1_pre, f1, up, cat, a2_pre, a2, b2_pre, f2;
    Grid3 out;
};

// Conditional grid-to-grid network predicting the clean memory embedding
// from a noised one. Conditioning: z_img channel-concatenated with x_t at
// the input (plus a fixed sinusoidal lift of the z_img channels, which
// makes intensity-band features reachable with small weights); a
// sinusoidal timestep embedding summed with a learned label embedding is
// projected to a per-channel bias at each stage. All math in double;
// parameters snap to float32 values for serialization.
class Denoiser final : public ConditionalDenoiser {
  public:
    explicit Denoiser(ArchDescriptor arch);
    static Denoiser init(const ArchDescriptor& arch, std::uint64_t seed);

    const ArchDescriptor& arch() const { return arch_; }
    const DenoiserLayout& layout() const { return layout_; }
    std::vector<double>& params() { return p_; }
    const std::vector<double>& params() const { return p_; }
    std::size_t param_count() const { return p_.size(); }

    Grid3 predict(const Grid3& x_t, int t, const Grid3& z_img, int label) const override;
    std::array<int, 3> output_shape() const override { return {arch_.c_mem, arch_.grid_h, arch_.grid_w}; }

    Grid3 forward(const Grid3& x_t, int t, const Grid3& z_img, int label, DenoiserTape& tape) const;
    // Accumulates dL/dparams into grad (same length as params()).
    void backward(const DenoiserTape& tape, const Grid3& d_out, std::vector<double>& grad) const;

    // Rounds every parameter through float32 so that what is saved equals
    // what is held; called at the end of training and after load.
    void snap_to_f32();

  private:
    ArchDescriptor arch_;
    DenoiserLayout layout_;
    std::vector<double> p_;
};

std::vector<double> sinusoidal_embedding(int t, int dim);

} // namespace memdiff
