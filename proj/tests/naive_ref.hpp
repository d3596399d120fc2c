#pragma once

// Straight-line re-implementation of the toy model forward pass, written
// against the architecture description with plain loops and none of the tape
// machinery. Serves as the independent oracle for ldm/sdl/cost values.
#include <cmath>
#include <vector>

#include "dg/losses.hpp"

namespace naive {

using dg::Tensor;
using dg::ToyLdm;

using Mat = std::vector<std::vector<double>>;  // [rows][cols]

inline Mat to_mat(const Tensor<double>& t) {
    Mat m(t.shape[0], std::vector<double>(t.shape[1]));
    for (int r = 0; r < t.shape[0]; ++r)
        for (int c = 0; c < t.shape[1]; ++c) m[r][c] = t.v[r * t.shape[1] + c];
    return m;
}

struct Vol {  // [C][H][W]
    int C = 0, H = 0, W = 0;
    std::vector<double> d;
    double at(int c, int h, int w) const { return d[(c * H + h) * W + w]; }
    double& at(int c, int h, int w) { return d[(c * H + h) * W + w]; }
};

inline Vol to_vol(const Tensor<double>& t) {
    return Vol{t.shape[0], t.shape[1], t.shape[2], t.v};
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline Vol conv(const ToyLdm<double>& m, const std::string& name, const Vol& x, int stride) {
    const auto& w = m.params.at(name + ".w");
    const auto& b = m.params.at(name + ".b");
    const int cout = w.shape[0], cin = w.shape[1], k = w.shape[2];
    Vol y;
    y.C = cout;
    y.H = (x.H + 2 - k) / stride + 1;
    y.W = (x.W + 2 - k) / stride + 1;
    y.d.assign(static_cast<std::size_t>(y.C) * y.H * y.W, 0.0);
    for (int co = 0; co < cout; ++co)
        for (int oh = 0; oh < y.H; ++oh)
            for (int ow = 0; ow < y.W; ++ow) {
                double acc = b.v[co];
                for (int ci = 0; ci < cin; ++ci)
                    for (int kh = 0; kh < k; ++kh)
                        for (int kw = 0; kw < k; ++kw) {
                            const int ih = oh * stride - 1 + kh;
                            const int iw = ow * stride - 1 + kw;
                            if (ih < 0 || ih >= x.H || iw < 0 || iw >= x.W) continue;
                            acc += x.at(ci, ih, iw) *
                                   w.v[((co * cin + ci) * k + kh) * k + kw];
                        }
                y.at(co, oh, ow) = acc;
            }
    return y;
}

inline Vol map_silu(Vol v) {
    for (auto& x : v.d) x = silu(x);
    return v;
}

inline Vol encode(const ToyLdm<double>& m, const Tensor<double>& img) {
    Vol h = map_silu(conv(m, "enc.c1", to_vol(img), 1));
    h = map_silu(conv(m, "enc.c2", h, 2));
    h = map_silu(conv(m, "enc.c3", h, 2));
    return conv(m, "enc.c4", h, 1);
}

inline std::vector<double> linear(const ToyLdm<double>& m, const std::string& name,
                                  const std::vector<double>& x) {
    const auto& w = m.params.at(name + ".w");
    const auto& b = m.params.at(name + ".b");
    std::vector<double> y(w.shape[1], 0.0);
    for (int c = 0; c < w.shape[1]; ++c) {
        double acc = b.v[c];
        for (int r = 0; r < w.shape[0]; ++r) acc += x[r] * w.v[r * w.shape[1] + c];
        y[c] = acc;
    }
    return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline Mat weight_mat(const ToyLdm<double>& m, const std::string& name) {
    return to_mat(m.params.at(name));
}

// Returns the post-residual volume; appends per-head maps to `maps` if given.
inline Vol cross_attention(const ToyLdm<double>& m, const std::string& name, const Vol& h,
                           const Mat& f, std::vector<Mat>* maps) {
    const int C = h.C, N = h.H * h.W;
    const int heads = m.cfg.n_heads, dh = C / heads;
    Mat x2d(N, std::vector<double>(C));
    for (int p = 0; p < N; ++p)
        for (int c = 0; c < C; ++c) x2d[p][c] = h.d[c * N + p];
    Mat q = matmul(x2d, weight_mat(m, name + ".wq.w"));
    Mat k = matmul(f, weight_mat(m, name + ".wk.w"));
    Mat v = matmul(f, weight_mat(m, name + ".wv.w"));
    const int L = static_cast<int>(f.size());

    Mat o(N, std::vector<double>(C, 0.0));
    for (int hd = 0; hd < heads; ++hd) {
        Mat map(N, std::vector<double>(L));
        for (int p = 0; p < N; ++p) {
            std::vector<double> logits(L);
            double mx = -1e300;
            for (int l = 0; l < L; ++l) {
                double acc = 0;
                for (int c = 0; c < dh; ++c) acc += q[p][hd * dh + c] * k[l][hd * dh + c];
                logits[l] = acc / std::sqrt(static_cast<double>(dh));
                mx = std::max(mx, logits[l]);
            }
            double sum = 0;
            for (int l = 0; l < L; ++l) {
                map[p][l] = std::exp(logits[l] - mx);
                sum += map[p][l];
            }
            for (int l = 0; l < L; ++l) map[p][l] /= sum;
            for (int c = 0; c < dh; ++c) {
                double acc = 0;
                for (int l = 0; l < L; ++l) acc += map[p][l] * v[l][hd * dh + c];
                o[p][hd * dh + c] = acc;
            }
        }
        if (maps) maps->push_back(map);
    }
    Mat proj = matmul(o, weight_mat(m, name + ".wo.w"));
    Vol out = h;
    for (int c = 0; c < C; ++c)
        for (int p = 0; p < N; ++p) out.d[c * N + p] += proj[p][c];
    return out;
}

inline Vol add_tproj(const ToyLdm<double>& m, const std::string& name, Vol h,
                     const std::vector<double>& temb) {
    auto proj = linear(m, name, temb);
    for (int c = 0; c < h.C; ++c)
        for (int p = 0; p < h.H * h.W; ++p) h.d[c * h.H * h.W + p] += proj[c];
    return h;
}

inline Vol upsample2(const Vol& x) {
    Vol y{x.C, 2 * x.H, 2 * x.W, {}};
    y.d.resize(static_cast<std::size_t>(y.C) * y.H * y.W);
    for (int c = 0; c < x.C; ++c)
        for (int i = 0; i < y.H; ++i)
            for (int j = 0; j < y.W; ++j) y.at(c, i, j) = x.at(c, i / 2, j / 2);
    return y;
}

inline Vol unet(const ToyLdm<double>& m, const Vol& zt, int t, const Mat& f,
                std::vector<Mat>* maps) {
    const int dim = m.cfg.temb_dim, half = dim / 2;
    std::vector<double> sinu(dim);
    const double log_base = std::log(10000.0) / half;
    for (int i = 0; i < half; ++i) {
        const double angle = t * std::exp(-log_base * i);
        sinu[i] = std::cos(angle);
        sinu[i + half] = std::sin(angle);
    }
    auto temb = linear(m, "unet.temb", sinu);
    for (auto& x : temb) x = silu(x);

    Mat fp = f;  // prompt rows with the positional table added
    const auto& pos = m.params.at("unet.pos");
    for (std::size_t r = 0; r < fp.size(); ++r)
        for (std::size_t c2 = 0; c2 < fp[0].size(); ++c2)
            fp[r][c2] += pos.v[r * fp[0].size() + c2];

    Vol h = conv(m, "unet.in", zt, 1);
    h = map_silu(add_tproj(m, "unet.d.tproj", conv(m, "unet.d.conv", h, 1), temb));
    h = cross_attention(m, "unet.d.attn", h, fp, maps);
    Vol skip = h;

    h = map_silu(conv(m, "unet.ds", h, 2));
    h = map_silu(add_tproj(m, "unet.m.tproj", conv(m, "unet.m.conv1", h, 1), temb));
    h = cross_attention(m, "unet.m.attn", h, fp, maps);
    h = map_silu(conv(m, "unet.m.conv2", h, 1));

    h = map_silu(conv(m, "unet.u.conv", upsample2(h), 1));
    Vol cat{h.C + skip.C, h.H, h.W, {}};
    cat.d = h.d;
    cat.d.insert(cat.d.end(), skip.d.begin(), skip.d.end());
    h = map_silu(conv(m, "unet.u.fuse", cat, 1));
    return conv(m, "unet.out", h, 1);
}

struct Losses {
    double ldm = 0, sdl = 0;
};

inline Losses eval_losses(const ToyLdm<double>& m, const Tensor<double>& x,
                          const Tensor<double>& f, const std::vector<dg::Draw<double>>& draws) {
    Vol z = encode(m, x);
    Mat fm = to_mat(f);
    Losses out;
    for (const auto& d : draws) {
        const double ab = m.sched.alpha_bar(d.t);
        Vol zt = z;
        for (std::size_t i = 0; i < zt.d.size(); ++i)
            zt.d[i] = std::sqrt(ab) * zt.d[i] + std::sqrt(1.0 - ab) * d.eps.v[i];
        std::vector<Mat> maps;
        Vol eps_hat = unet(m, zt, d.t, fm, &maps);
        double mse = 0;
        for (std::size_t i = 0; i < eps_hat.d.size(); ++i) {
            const double df = eps_hat.d[i] - d.eps.v[i];
            mse += df * df;
        }
        out.ldm += mse / static_cast<double>(eps_hat.d.size());

        // zero-target map energy: mean over layers of mean over heads
        const int heads = m.cfg.n_heads;
        double layer_mean = 0;
        for (std::size_t layer = 0; layer < maps.size() / heads; ++layer) {
            double head_mean = 0;
            for (int hd = 0; hd < heads; ++hd) {
                const Mat& map = maps[layer * heads + hd];
                double acc = 0;
                for (const auto& row : map)
                    for (double e : row) acc += e * e;
                head_mean += acc / (map.size() * map[0].size());
            }
            layer_mean += head_mean / heads;
        }
        out.sdl += layer_mean / (maps.size() / heads);
    }
    out.ldm /= static_cast<double>(draws.size());
    out.sdl /= static_cast<double>(draws.size());
    return out;
}

}  // namespace naive
