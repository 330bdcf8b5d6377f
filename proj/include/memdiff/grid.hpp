#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace memdiff {

// Dense C x H x W grid of doubles, row-major within a channel.
// Carrier for image embeddings, memory embeddings and mask logits.
struct Grid3 {
    int ch = 0, h = 0, w = 0;
    std::vector<double> v;

    Grid3() = default;
    Grid3(int c_, int h_, int w_) : ch(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    double at(int c, int y, int x) const { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
    double* channel(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
    const double* channel(int c) const { return v.data() + static_cast<std::size_t>(c) * h * w; }

    std::array<int, 3> shape() const { return {ch, h, w}; }
    bool same_shape(const Grid3& o) const { return ch == o.ch && h == o.h && w == o.w; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) { v.assign(v.size(), x); }
};

inline Grid3 operator-(const Grid3& a, const Grid3& b) {
    Grid3 r(a.ch, a.h, a.w);
    for (std::size_t i = 0; i < a.v.size(); ++i) r.v[i] = a.v[i] - b.v[i];
    return r;
}

inline double max_abs_diff(const Grid3& a, const Grid3& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

// One axial slice, H x W, normalized pixel values in [0,1].
struct SliceImage {
    int h = 0, w = 0;
    std::vector<float> pixels;

    SliceImage() = default;
    SliceImage(int h_, int w_) : h(h_), w(w_), pixels(static_cast<std::size_t>(h_) * w_, 0.0f) {}
    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * w + x]; }
};

// Integer label grid, 0 = background, 1..K = organ classes.
struct LabelMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> labels;

    LabelMask() = default;
    LabelMask(int h_, int w_) : h(h_), w(w_), labels(static_cast<std::size_t>(h_) * w_, 0) {}
    std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
};

// Keeps only one class of a multi-organ mask (values {0, cls}).
inline LabelMask restrict_to_class(const LabelMask& m, int cls) {
    LabelMask r(m.h, m.w);
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        r.labels[i] = (m.labels[i] == cls) ? static_cast<std::uint8_t>(cls) : 0;
    return r;
}

} // namespace memdiff
