#include "memdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memdiff/errors.hpp"
#include "memdiff/rng.hpp"

namespace memdiff {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// out[oc][y][x] = b[oc] + sum_{ic,ky,kx} w[oc][ic][ky][kx] * in[ic][y+ky-1][x+kx-1]
void conv3x3_forward(const Grid3& in, const double* w, const double* b, Grid3& out) {
    const int h = in.h, wd = in.w;
    for (int o = 0; o < out.ch; ++o) {
        double* op = out.channel(o);
        std::fill(op, op + static_cast<std::size_t>(h) * wd, b[o]);
        for (int i = 0; i < in.ch; ++i) {
            const double* ip = in.channel(i);
            const double* wk = w + (static_cast<std::size_t>(o) * in.ch + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int x0 = std::max(0, -dx), x1 = wd - std::max(0, dx);
                    const double wv = wk[ky * 3 + kx];
                    for (int y = y0; y < y1; ++y) {
                        const double* src = ip + static_cast<std::size_t>(y + dy) * wd + (x0 + dx);
                        double* dst = op + static_cast<std::size_t>(y) * wd + x0;
                        const int n = x1 - x0;
                        for (int x = 0; x < n; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
    }
}

// d_in += conv-transpose(d_out); dw/db accumulated from (in, d_out).
void conv3x3_backward(const Grid3& in, const double* w, const Grid3& d_out, Grid3* d_in, double* dw,
                      double* db) {
    const int h = in.h, wd = in.w;
    for (int o = 0; o < d_out.ch; ++o) {
        const double* dop = d_out.channel(o);
        double acc_b = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(h) * wd; ++i) acc_b += dop[i];
        db[o] += acc_b;
        for (int i = 0; i < in.ch; ++i) {
            const double* ip = in.channel(i);
            double* dip = d_in ? d_in->channel(i) : nullptr;
            const double* wk = w + (static_cast<std::size_t>(o) * in.ch + i) * 9;
            double* dwk = dw + (static_cast<std::size_t>(o) * in.ch + i) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int x0 = std::max(0, -dx), x1 = wd - std::max(0, dx);
                    const double wv = wk[ky * 3 + kx];
                    double acc_w = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* src_in = ip + static_cast<std::size_t>(y + dy) * wd + (x0 + dx);
                        const double* src_do = dop + static_cast<std::size_t>(y) * wd + x0;
                        const int n = x1 - x0;
                        for (int x = 0; x < n; ++x) acc_w += src_do[x] * src_in[x];
                        if (dip) {
                            double* dst = dip + static_cast<std::size_t>(y + dy) * wd + (x0 + dx);
                            for (int x = 0; x < n; ++x) dst[x] += wv * src_do[x];
                        }
                    }
                    dwk[ky * 3 + kx] += acc_w;
                }
            }
        }
    }
}

void conv1x1_forward(const Grid3& in, const double* w, const double* b, Grid3& out) {
    const std::size_t n = static_cast<std::size_t>(in.h) * in.w;
    for (int o = 0; o < out.ch; ++o) {
        double* op = out.channel(o);
        std::fill(op, op + n, b[o]);
        for (int i = 0; i < in.ch; ++i) {
            const double* ip = in.channel(i);
            const double wv = w[static_cast<std::size_t>(o) * in.ch + i];
            for (std::size_t p = 0; p < n; ++p) op[p] += wv * ip[p];
        }
    }
}

void conv1x1_backward(const Grid3& in, const double* w, const Grid3& d_out, Grid3& d_in, double* dw,
                      double* db) {
    const std::size_t n = static_cast<std::size_t>(in.h) * in.w;
    for (int o = 0; o < d_out.ch; ++o) {
        const double* dop = d_out.channel(o);
        double acc_b = 0.0;
        for (std::size_t p = 0; p < n; ++p) acc_b += dop[p];
        db[o] += acc_b;
        for (int i = 0; i < in.ch; ++i) {
            const double* ip = in.channel(i);
            double* dip = d_in.channel(i);
            const double wv = w[static_cast<std::size_t>(o) * in.ch + i];
            double acc_w = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                acc_w += dop[p] * ip[p];
                dip[p] += wv * dop[p];
            }
            dw[static_cast<std::size_t>(o) * in.ch + i] += acc_w;
        }
    }
}

Grid3 avgpool2(const Grid3& in) {
    Grid3 out(in.ch, in.h / 2, in.w / 2);
    for (int c = 0; c < in.ch; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                          in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
    return out;
}

void avgpool2_backward(const Grid3& d_out, Grid3& d_in) {
    for (int c = 0; c < d_out.ch; ++c)
        for (int y = 0; y < d_out.h; ++y)
            for (int x = 0; x < d_out.w; ++x) {
                const double g = 0.25 * d_out.at(c, y, x);
                d_in.at(c, 2 * y, 2 * x) += g;
                d_in.at(c, 2 * y, 2 * x + 1) += g;
                d_in.at(c, 2 * y + 1, 2 * x) += g;
                d_in.at(c, 2 * y + 1, 2 * x + 1) += g;
            }
}

Grid3 upsample2(const Grid3& in) {
    Grid3 out(in.ch, in.h * 2, in.w * 2);
    for (int c = 0; c < in.ch; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
    return out;
}

void upsample2_backward(const Grid3& d_out, Grid3& d_in) {
    for (int c = 0; c < d_out.ch; ++c)
        for (int y = 0; y < d_out.h; ++y)
            for (int x = 0; x < d_out.w; ++x) d_in.at(c, y / 2, x / 2) += d_out.at(c, y, x);
}

void silu_inplace(const Grid3& pre, Grid3& out) {
    out = pre;
    for (double& v : out.v) v = silu(v);
}

} // namespace

std::vector<double> sinusoidal_embedding(int t, int dim) {
    const int half = dim / 2;
    std::vector<double> emb(dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        emb[i] = std::sin(t * freq);
        emb[half + i] = std::cos(t * freq);
    }
    return emb;
}

DenoiserLayout make_layout(const ArchDescriptor& arch) {
    if (arch.c_mem < 1 || arch.c_img < 1 || arch.grid_h < 2 || arch.grid_w < 2)
        throw ConfigError("denoiser: invalid embedding shape");
    if (arch.cond_dim < 4 || arch.cond_dim % 2 != 0) throw ConfigError("denoiser: cond_dim must be even, >= 4");
    if (arch.levels != 1 && arch.levels != 2) throw ConfigError("denoiser: levels must be 1 or 2");
    if (arch.levels == 2 && (arch.grid_h % 2 != 0 || arch.grid_w % 2 != 0))
        throw ConfigError("denoiser: 2-level network needs even grid dims");
    if (arch.label_count < 2) throw ConfigError("denoiser: label_count must be >= 2");
    if (arch.base_width < 1) throw ConfigError("denoiser: base_width must be >= 1");

    DenoiserLayout ly;
    std::size_t off = 0;
    auto alloc = [&off](std::array<int, 4> dims) {
        TensorRef r;
        r.off = off;
        r.dims = dims;
        off += r.count();
        return r;
    };
    if (arch.fourier_bands < 0 || arch.fourier_bands > 8)
        throw ConfigError("denoiser: fourier_bands must be in [0,8]");
    const int cond = arch.cond_dim;
    const int w0 = arch.base_width, w1 = 2 * arch.base_width;
    const int c_in = arch.c_mem + arch.c_img * (1 + 2 * arch.fourier_bands);

    ly.time_w = alloc({cond, cond, 0, 0});
    ly.time_b = alloc({cond, 0, 0, 0});
    ly.label_table = alloc({arch.label_count, cond, 0, 0});

    auto stage = [&](int in_ch, int out_ch) {
        DenoiserLayout::Stage s;
        s.in_ch = in_ch;
        s.out_ch = out_ch;
        s.inj_a_w = alloc({out_ch, cond, 0, 0});
        s.inj_a_b = alloc({out_ch, 0, 0, 0});
        s.inj_b_w = alloc({out_ch, cond, 0, 0});
        s.inj_b_b = alloc({out_ch, 0, 0, 0});
        s.conv_a_w = alloc({out_ch, in_ch, 3, 3});
        s.conv_a_b = alloc({out_ch, 0, 0, 0});
        s.conv_b_w = alloc({out_ch, out_ch, 3, 3});
        s.conv_b_b = alloc({out_ch, 0, 0, 0});
        return s;
    };
    ly.s0 = stage(c_in, w0);
    if (arch.levels == 2) {
        ly.s1 = stage(w0, w1);
        ly.s2 = stage(w0 + w1, w0);
    }
    ly.head_w = alloc({arch.c_mem, w0, 0, 0});
    ly.head_b = alloc({arch.c_mem, 0, 0, 0});
    ly.total = off;
    return ly;
}

Denoiser::Denoiser(ArchDescriptor arch) : arch_(arch), layout_(make_layout(arch)), p_(layout_.total, 0.0) {}

Denoiser Denoiser::init(const ArchDescriptor& arch, std::uint64_t seed) {
    Denoiser d(arch);
    Rng rng(derive_seed(seed, {0x64656e6full}));
    auto fill_uniform = [&](const TensorRef& r, double a) {
        for (std::size_t i = 0; i < r.count(); ++i) d.p_[r.off + i] = rng.uniform(-a, a);
    };
    const auto& ly = d.layout_;
    fill_uniform(ly.time_w, std::sqrt(6.0 / arch.cond_dim));
    fill_uniform(ly.time_b, 0.0);
    fill_uniform(ly.label_table, 1.0);
    auto init_stage = [&](const DenoiserLayout::Stage& s) {
        fill_uniform(s.inj_a_w, std::sqrt(6.0 / arch.cond_dim));
        fill_uniform(s.inj_a_b, 0.0);
        fill_uniform(s.inj_b_w, std::sqrt(6.0 / arch.cond_dim));
        fill_uniform(s.inj_b_b, 0.0);
        fill_uniform(s.conv_a_w, std::sqrt(6.0 / (s.in_ch * 9.0)));
        fill_uniform(s.conv_a_b, 0.0);
        fill_uniform(s.conv_b_w, std::sqrt(6.0 / (s.out_ch * 9.0)));
        fill_uniform(s.conv_b_b, 0.0);
    };
    init_stage(ly.s0);
    if (arch.levels == 2) {
        init_stage(ly.s1);
        init_stage(ly.s2);
    }
    fill_uniform(ly.head_w, 0.5 * std::sqrt(6.0 / arch.base_width));
    fill_uniform(ly.head_b, 0.0);
    return d;
}

Grid3 Denoiser::forward(const Grid3& x_t, int t, const Grid3& z_img, int label, DenoiserTape& tape) const {
    if (x_t.ch != arch_.c_mem || x_t.h != arch_.grid_h || x_t.w != arch_.grid_w)
        throw DataError("denoiser: x_t shape mismatch");
    if (z_img.ch != arch_.c_img || z_img.h != arch_.grid_h || z_img.w != arch_.grid_w)
        throw DataError("denoiser: z_img shape mismatch");
    if (label < 1 || label >= arch_.label_count)
        throw DataError("denoiser: label " + std::to_string(label) + " outside [1," +
                        std::to_string(arch_.label_count - 1) + "]");
    if (t < 1) throw DataError("denoiser: t must be >= 1");

    const auto& ly = layout_;
    const int cond = arch_.cond_dim;
    const int gh = arch_.grid_h, gw = arch_.grid_w;

    tape.in = Grid3(arch_.c_mem + arch_.c_img * (1 + 2 * arch_.fourier_bands), gh, gw);
    std::copy(x_t.v.begin(), x_t.v.end(), tape.in.v.begin());
    std::copy(z_img.v.begin(), z_img.v.end(), tape.in.v.begin() + x_t.v.size());
    std::size_t off = x_t.v.size() + z_img.v.size();
    for (int j = 0; j < arch_.fourier_bands; ++j) {
        const double omega = static_cast<double>(1 << j);
        for (std::size_t i = 0; i < z_img.v.size(); ++i) tape.in.v[off + i] = std::sin(omega * z_img.v[i]);
        off += z_img.v.size();
        for (std::size_t i = 0; i < z_img.v.size(); ++i) tape.in.v[off + i] = std::cos(omega * z_img.v[i]);
        off += z_img.v.size();
    }

    tape.sin_emb = sinusoidal_embedding(t, cond);
    tape.tf_pre.assign(cond, 0.0);
    for (int o = 0; o < cond; ++o) {
        double acc = p_[ly.time_b.off + o];
        const double* wrow = &p_[ly.time_w.off + static_cast<std::size_t>(o) * cond];
        for (int i = 0; i < cond; ++i) acc += wrow[i] * tape.sin_emb[i];
        tape.tf_pre[o] = acc;
    }
    tape.label = label;
    tape.cond.assign(cond, 0.0);
    const double* lrow = &p_[ly.label_table.off + static_cast<std::size_t>(label) * cond];
    for (int i = 0; i < cond; ++i) tape.cond[i] = silu(tape.tf_pre[i]) + lrow[i];

    auto stage_bias = [&](const TensorRef& inj_w, const TensorRef& inj_b, int out_ch,
                          std::vector<double>& bias) {
        bias.assign(out_ch, 0.0);
        for (int o = 0; o < out_ch; ++o) {
            double acc = p_[inj_b.off + o];
            const double* wrow = &p_[inj_w.off + static_cast<std::size_t>(o) * cond];
            for (int i = 0; i < cond; ++i) acc += wrow[i] * tape.cond[i];
            bias[o] = acc;
        }
    };
    auto add_bias = [](Grid3& g, const std::vector<double>& bias) {
        const std::size_t n = static_cast<std::size_t>(g.h) * g.w;
        for (int c = 0; c < g.ch; ++c) {
            double* cp = g.channel(c);
            for (std::size_t i = 0; i < n; ++i) cp[i] += bias[c];
        }
    };

    auto run_stage = [&](const DenoiserLayout::Stage& s, const Grid3& input, Grid3& a_pre, Grid3& a,
                         Grid3& b_pre, Grid3& f) {
        a_pre = Grid3(s.out_ch, input.h, input.w);
        conv3x3_forward(input, &p_[s.conv_a_w.off], &p_[s.conv_a_b.off], a_pre);
        std::vector<double> bias;
        stage_bias(s.inj_a_w, s.inj_a_b, s.out_ch, bias);
        add_bias(a_pre, bias);
        silu_inplace(a_pre, a);
        b_pre = Grid3(s.out_ch, input.h, input.w);
        conv3x3_forward(a, &p_[s.conv_b_w.off], &p_[s.conv_b_b.off], b_pre);
        stage_bias(s.inj_b_w, s.inj_b_b, s.out_ch, bias);
        add_bias(b_pre, bias);
        silu_inplace(b_pre, f);
    };

    run_stage(ly.s0, tape.in, tape.a0_pre, tape.a0, tape.b0_pre, tape.f0);

    const Grid3* final_features = &tape.f0;
    if (arch_.levels == 2) {
        tape.pooled = avgpool2(tape.f0);
        run_stage(ly.s1, tape.pooled, tape.a1_pre, tape.a1, tape.b1_pre, tape.f1);
        tape.up = upsample2(tape.f1);
        tape.cat = Grid3(tape.f0.ch + tape.up.ch, gh, gw);
        std::copy(tape.f0.v.begin(), tape.f0.v.end(), tape.cat.v.begin());
        std::copy(tape.up.v.begin(), tape.up.v.end(), tape.cat.v.begin() + tape.f0.v.size());
        run_stage(ly.s2, tape.cat, tape.a2_pre, tape.a2, tape.b2_pre, tape.f2);
        final_features = &tape.f2;
    }

    tape.out = Grid3(arch_.c_mem, gh, gw);
    conv1x1_forward(*final_features, &p_[ly.head_w.off], &p_[ly.head_b.off], tape.out);
    return tape.out;
}

Grid3 Denoiser::predict(const Grid3& x_t, int t, const Grid3& z_img, int label) const {
    DenoiserTape tape;
    return forward(x_t, t, z_img, label, tape);
}

void Denoiser::backward(const DenoiserTape& tape, const Grid3& d_out, std::vector<double>& grad) const {
    const auto& ly = layout_;
    const int cond = arch_.cond_dim;
    std::vector<double> d_cond(cond, 0.0);

    // injected-bias backward: per-channel sums drive the projection grads
    auto inj_backward = [&](const TensorRef& inj_w, const TensorRef& inj_b, const Grid3& d_pre) {
        const std::size_t n = static_cast<std::size_t>(d_pre.h) * d_pre.w;
        for (int c = 0; c < d_pre.ch; ++c) {
            const double* cp = d_pre.channel(c);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += cp[i];
            grad[inj_b.off + c] += sum;
            const double* wrow = &p_[inj_w.off + static_cast<std::size_t>(c) * cond];
            double* dwrow = &grad[inj_w.off + static_cast<std::size_t>(c) * cond];
            for (int e = 0; e < cond; ++e) {
                dwrow[e] += sum * tape.cond[e];
                d_cond[e] += wrow[e] * sum;
            }
        }
    };

    // Stage backward: d_f -> d_input; accumulates conv/injection grads and d_cond.
    auto stage_backward = [&](const DenoiserLayout::Stage& s, const Grid3& input, const Grid3& a_pre,
                              const Grid3& a, const Grid3& b_pre, const Grid3& d_f, Grid3* d_input) {
        Grid3 d_b_pre(b_pre.ch, b_pre.h, b_pre.w);
        for (std::size_t i = 0; i < d_b_pre.v.size(); ++i)
            d_b_pre.v[i] = d_f.v[i] * silu_grad(b_pre.v[i]);
        inj_backward(s.inj_b_w, s.inj_b_b, d_b_pre);
        Grid3 d_a(a.ch, a.h, a.w);
        conv3x3_backward(a, &p_[s.conv_b_w.off], d_b_pre, &d_a, &grad[s.conv_b_w.off],
                         &grad[s.conv_b_b.off]);
        Grid3 d_a_pre(a_pre.ch, a_pre.h, a_pre.w);
        for (std::size_t i = 0; i < d_a_pre.v.size(); ++i)
            d_a_pre.v[i] = d_a.v[i] * silu_grad(a_pre.v[i]);
        inj_backward(s.inj_a_w, s.inj_a_b, d_a_pre);
        conv3x3_backward(input, &p_[s.conv_a_w.off], d_a_pre, d_input, &grad[s.conv_a_w.off],
                         &grad[s.conv_a_b.off]);
    };

    const Grid3& final_features = arch_.levels == 2 ? tape.f2 : tape.f0;
    Grid3 d_final(final_features.ch, final_features.h, final_features.w);
    conv1x1_backward(final_features, &p_[ly.head_w.off], d_out, d_final, &grad[ly.head_w.off],
                     &grad[ly.head_b.off]);

    Grid3 d_f0(tape.f0.ch, tape.f0.h, tape.f0.w);
    if (arch_.levels == 2) {
        Grid3 d_cat(tape.cat.ch, tape.cat.h, tape.cat.w);
        stage_backward(ly.s2, tape.cat, tape.a2_pre, tape.a2, tape.b2_pre, d_final, &d_cat);
        std::copy(d_cat.v.begin(), d_cat.v.begin() + tape.f0.v.size(), d_f0.v.begin());
        Grid3 d_up(tape.up.ch, tape.up.h, tape.up.w);
        std::copy(d_cat.v.begin() + tape.f0.v.size(), d_cat.v.end(), d_up.v.begin());
        Grid3 d_f1(tape.f1.ch, tape.f1.h, tape.f1.w);
        upsample2_backward(d_up, d_f1);
        Grid3 d_pooled(tape.pooled.ch, tape.pooled.h, tape.pooled.w);
        stage_backward(ly.s1, tape.pooled, tape.a1_pre, tape.a1, tape.b1_pre, d_f1, &d_pooled);
        avgpool2_backward(d_pooled, d_f0);
    } else {
        d_f0 = d_final;
    }
    stage_backward(ly.s0, tape.in, tape.a0_pre, tape.a0, tape.b0_pre, d_f0, nullptr);

    // conditioning path
    double* d_lrow = &grad[ly.label_table.off + static_cast<std::size_t>(tape.label) * cond];
    for (int e = 0; e < cond; ++e) d_lrow[e] += d_cond[e];
    for (int o = 0; o < cond; ++o) {
        const double d_tf_pre = d_cond[o] * silu_grad(tape.tf_pre[o]);
        grad[ly.time_b.off + o] += d_tf_pre;
        double* dwrow = &grad[ly.time_w.off + static_cast<std::size_t>(o) * cond];
        for (int i = 0; i < cond; ++i) dwrow[i] += d_tf_pre * tape.sin_emb[i];
    }
}

void Denoiser::snap_to_f32() {
    for (double& v : p_) v = static_cast<double>(static_cast<float>(v));
}

} // namespace memdiff
