#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dg/params.hpp"
#include "dg/rng.hpp"
#include "dg/schedule.hpp"
#include "dg/tape.hpp"

namespace dg {

// Architecture of the toy latent diffusion stack:
//   encoder: 3x3 convs with two stride-2 stages, image [3,S,S] -> latent [4,S/4,S/4]
//   decoder: mirror with nearest-neighbor upsampling, sigmoid output
//   unet:    two resolutions, one cross-attention block per resolution,
//            sinusoidal timestep embedding injected per block
//   embedder: token lookup table over a fixed vocabulary
struct ModelConfig {
    int image_size = 32;  // H = W, power of two
    int image_channels = 3;
    int latent_channels = 4;
    int enc_ch1 = 8;
    int enc_ch2 = 16;
    int unet_ch1 = 16;  // at latent resolution
    int unet_ch2 = 32;  // at half latent resolution
    int n_heads = 2;
    int temb_dim = 16;
    int temb_hidden = 32;
    int vocab_size = 64;
    int tok_len = 8;    // L_tok
    int embed_dim = 32; // d_embed

    int latent_size() const { return image_size / 4; }

    void validate() const {
        if (image_size < 8 || (image_size & (image_size - 1)) != 0)
            throw ConfigError("image_size must be a power of two >= 8");
        if (unet_ch1 % n_heads != 0 || unet_ch2 % n_heads != 0)
            throw ConfigError("unet channels must be divisible by n_heads");
        if (vocab_size < 2 || tok_len < 1 || embed_dim < 1)
            throw ConfigError("bad embedder dims");
    }

    Shape image_shape() const { return {image_channels, image_size, image_size}; }
    Shape latent_shape() const { return {latent_channels, latent_size(), latent_size()}; }
    Shape embed_shape() const { return {tok_len, embed_dim}; }
};

// Defaults give alpha_bar_T ~= 0.08 over the short 100-step table: close to
// pure noise at the end while mid-range timesteps still carry enough signal
// for partial-noising edits to depend on their input.
struct ScheduleConfig {
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.05;
};

template <class S>
struct ToyLdm {
    ModelConfig cfg;
    NoiseSchedule sched;
    ParamStore<S> params;
};

namespace detail {

template <class S>
Tensor<S> init_conv(Rng& rng, int cout, int cin, int k) {
    Tensor<S> w({cout, cin, k, k});
    const double scale = std::sqrt(2.0 / (cin * k * k));
    for (auto& x : w.v) x = static_cast<S>(rng.normal() * scale);
    return w;
}

template <class S>
Tensor<S> init_linear(Rng& rng, int rows, int cols) {
    Tensor<S> w({rows, cols});
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (auto& x : w.v) x = static_cast<S>(rng.normal() * scale);
    return w;
}

template <class S>
void add_conv(ParamStore<S>& p, Rng& rng, const std::string& name, const std::string& group,
              int cout, int cin, int k = 3) {
    p.add(name + ".w", group, init_conv<S>(rng, cout, cin, k));
    p.add(name + ".b", group, Tensor<S>({cout}));
}

template <class S>
void add_linear(ParamStore<S>& p, Rng& rng, const std::string& name, const std::string& group,
                int rows, int cols, bool bias = true) {
    p.add(name + ".w", group, init_linear<S>(rng, rows, cols));
    if (bias) p.add(name + ".b", group, Tensor<S>({cols}));
}

}  // namespace detail

template <class S>
ToyLdm<S> init_model(const ModelConfig& cfg, const ScheduleConfig& sc, uint64_t seed) {
    cfg.validate();
    ToyLdm<S> m;
    m.cfg = cfg;
    m.sched = build_schedule(sc.T, sc.beta_start, sc.beta_end);
    Rng rng(derive_seed(seed, "model-init"));
    auto& p = m.params;

    detail::add_conv(p, rng, "enc.c1", "encoder", cfg.enc_ch1, cfg.image_channels);
    detail::add_conv(p, rng, "enc.c2", "encoder", cfg.enc_ch2, cfg.enc_ch1);
    detail::add_conv(p, rng, "enc.c3", "encoder", cfg.enc_ch2, cfg.enc_ch2);
    detail::add_conv(p, rng, "enc.c4", "encoder", cfg.latent_channels, cfg.enc_ch2);

    detail::add_conv(p, rng, "dec.c1", "decoder", cfg.enc_ch2, cfg.latent_channels);
    detail::add_conv(p, rng, "dec.c2", "decoder", cfg.enc_ch2, cfg.enc_ch2);
    detail::add_conv(p, rng, "dec.c3", "decoder", cfg.enc_ch1, cfg.enc_ch2);
    detail::add_conv(p, rng, "dec.c4", "decoder", cfg.image_channels, cfg.enc_ch1);

    detail::add_linear(p, rng, "unet.temb", "unet", cfg.temb_dim, cfg.temb_hidden);
    detail::add_conv(p, rng, "unet.in", "unet", cfg.unet_ch1, cfg.latent_channels);
    detail::add_conv(p, rng, "unet.d.conv", "unet", cfg.unet_ch1, cfg.unet_ch1);
    detail::add_linear(p, rng, "unet.d.tproj", "unet", cfg.temb_hidden, cfg.unet_ch1);
    detail::add_linear(p, rng, "unet.d.attn.wq", "unet", cfg.unet_ch1, cfg.unet_ch1, false);
    detail::add_linear(p, rng, "unet.d.attn.wk", "unet", cfg.embed_dim, cfg.unet_ch1, false);
    detail::add_linear(p, rng, "unet.d.attn.wv", "unet", cfg.embed_dim, cfg.unet_ch1, false);
    detail::add_linear(p, rng, "unet.d.attn.wo", "unet", cfg.unet_ch1, cfg.unet_ch1, false);
    detail::add_conv(p, rng, "unet.ds", "unet", cfg.unet_ch2, cfg.unet_ch1);
    detail::add_conv(p, rng, "unet.m.conv1", "unet", cfg.unet_ch2, cfg.unet_ch2);
    detail::add_linear(p, rng, "unet.m.tproj", "unet", cfg.temb_hidden, cfg.unet_ch2);
    detail::add_linear(p, rng, "unet.m.attn.wq", "unet", cfg.unet_ch2, cfg.unet_ch2, false);
    detail::add_linear(p, rng, "unet.m.attn.wk", "unet", cfg.embed_dim, cfg.unet_ch2, false);
    detail::add_linear(p, rng, "unet.m.attn.wv", "unet", cfg.embed_dim, cfg.unet_ch2, false);
    detail::add_linear(p, rng, "unet.m.attn.wo", "unet", cfg.unet_ch2, cfg.unet_ch2, false);
    detail::add_conv(p, rng, "unet.m.conv2", "unet", cfg.unet_ch2, cfg.unet_ch2);
    detail::add_conv(p, rng, "unet.u.conv", "unet", cfg.unet_ch1, cfg.unet_ch2);
    detail::add_conv(p, rng, "unet.u.fuse", "unet", cfg.unet_ch1, 2 * cfg.unet_ch1);
    detail::add_conv(p, rng, "unet.out", "unet", cfg.latent_channels, cfg.unet_ch1);

    // token-position table added to the prompt inside the UNet; without it the
    // blocks are permutation-symmetric over prompt rows and an all-pad prompt
    // could never differentiate under tuning
    Tensor<S> pos({cfg.tok_len, cfg.embed_dim});
    for (auto& x : pos.v) x = static_cast<S>(rng.normal() * 0.1);
    p.add("unet.pos", "unet", std::move(pos));

    Tensor<S> table({cfg.vocab_size, cfg.embed_dim});
    for (auto& x : table.v) x = static_cast<S>(rng.normal() * 0.1);
    p.add("embed.table", "embedder", std::move(table));
    return m;
}

// ------------------------------------------------------------ tape builders

template <class S>
struct BuildCtx {
    Tape<S>& tape;
    const ToyLdm<S>& model;
    std::unordered_map<std::string, int> pnodes;

    BuildCtx(Tape<S>& t, const ToyLdm<S>& m) : tape(t), model(m) {}

    int param(const std::string& name) {
        auto it = pnodes.find(name);
        if (it != pnodes.end()) return it->second;
        int id = tape.leaf(model.params.at(name));
        pnodes.emplace(name, id);
        return id;
    }
};

template <class S>
int build_conv(BuildCtx<S>& c, const std::string& name, int x, int stride = 1, int pad = 1) {
    return c.tape.conv2d(x, c.param(name + ".w"), c.param(name + ".b"), stride, pad);
}

template <class S>
int build_encoder(BuildCtx<S>& c, int x) {
    auto& t = c.tape;
    int h = t.silu(build_conv(c, "enc.c1", x));
    h = t.silu(build_conv(c, "enc.c2", h, 2));
    h = t.silu(build_conv(c, "enc.c3", h, 2));
    return build_conv(c, "enc.c4", h);
}

template <class S>
int build_decoder(BuildCtx<S>& c, int z) {
    auto& t = c.tape;
    int h = t.silu(build_conv(c, "dec.c1", z));
    h = t.silu(build_conv(c, "dec.c2", t.upsample2x(h)));
    h = t.silu(build_conv(c, "dec.c3", t.upsample2x(h)));
    return t.sigmoid(build_conv(c, "dec.c4", h));
}

template <class S>
Tensor<S> timestep_embedding(int t, int dim) {
    Tensor<S> e({dim});
    const int half = dim / 2;
    const double log_base = std::log(10000.0) / half;
    for (int i = 0; i < half; ++i) {
        const double angle = static_cast<double>(t) * std::exp(-log_base * i);
        e.v[i] = static_cast<S>(std::cos(angle));
        e.v[i + half] = static_cast<S>(std::sin(angle));
    }
    return e;
}

// Per-head attention nodes captured during a UNet forward.
struct AttnNodes {
    std::string layer_id;
    int heads = 0, n_query = 0, tok = 0;
    std::vector<int> head_maps;  // softmax nodes, one per head, each [N,L]
};

template <class S>
int build_cross_attention(BuildCtx<S>& c, const std::string& name, int h, int f,
                          std::vector<AttnNodes>* capture) {
    auto& t = c.tape;
    const Shape& hs = t.shape(h);
    const int C = hs[0], H = hs[1], W = hs[2];
    const int heads = c.model.cfg.n_heads;
    const int dh = C / heads;
    const int N = H * W;

    int x2d = t.chw_to_nc(h);
    int q = t.matmul(x2d, c.param(name + ".wq.w"));
    int k = t.matmul(f, c.param(name + ".wk.w"));
    int v = t.matmul(f, c.param(name + ".wv.w"));

    AttnNodes an;
    an.layer_id = name;
    an.heads = heads;
    an.n_query = N;
    an.tok = t.shape(f)[0];

    std::vector<int> outs;
    for (int i = 0; i < heads; ++i) {
        int qh = t.slice_cols(q, i * dh, dh);
        int kh = t.slice_cols(k, i * dh, dh);
        int vh = t.slice_cols(v, i * dh, dh);
        int logits = t.scale(t.matmul(qh, kh, false, true),
                             static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))));
        int m = t.softmax_rows(logits);
        an.head_maps.push_back(m);
        outs.push_back(t.matmul(m, vh));
    }
    if (capture) capture->push_back(an);
    int o = t.matmul(t.concat_cols(outs), c.param(name + ".wo.w"));
    return t.add(h, t.nc_to_chw(o, C, H, W));
}

// Adds the projected timestep embedding as a per-channel offset.
template <class S>
int build_tproj(BuildCtx<S>& c, const std::string& name, int h, int temb) {
    auto& t = c.tape;
    int proj = t.add_bias_rows(t.matmul(temb, c.param(name + ".w")), c.param(name + ".b"));
    const Shape& hs = t.shape(h);
    return t.add_bias_chan(h, t.reshape(proj, {hs[0]}));
}

template <class S>
int build_unet(BuildCtx<S>& c, int zt, int tstep, int f, std::vector<AttnNodes>* capture) {
    auto& t = c.tape;
    const ModelConfig& cfg = c.model.cfg;
    c.model.sched.check_t(tstep);

    int temb_in = t.leaf({1, cfg.temb_dim}, timestep_embedding<S>(tstep, cfg.temb_dim).data());
    int temb = t.silu(
        t.add_bias_rows(t.matmul(temb_in, c.param("unet.temb.w")), c.param("unet.temb.b")));
    int fp = t.add(f, c.param("unet.pos"));

    int h = build_conv(c, "unet.in", zt);
    h = t.silu(build_tproj(c, "unet.d.tproj", build_conv(c, "unet.d.conv", h), temb));
    h = build_cross_attention(c, "unet.d.attn", h, fp, capture);
    int skip = h;

    h = t.silu(build_conv(c, "unet.ds", h, 2));
    h = t.silu(build_tproj(c, "unet.m.tproj", build_conv(c, "unet.m.conv1", h), temb));
    h = build_cross_attention(c, "unet.m.attn", h, fp, capture);
    h = t.silu(build_conv(c, "unet.m.conv2", h));

    h = t.silu(build_conv(c, "unet.u.conv", t.upsample2x(h)));
    h = t.silu(build_conv(c, "unet.u.fuse", t.concat_c(h, skip)));
    return build_conv(c, "unet.out", h);
}

// Tape-level z_t = sqrt(ab) z + sqrt(1-ab) eps with gradient through z.
template <class S>
int build_add_noise(BuildCtx<S>& c, int z, int tstep, const Tensor<S>& eps) {
    auto& t = c.tape;
    const double ab = c.model.sched.alpha_bar(tstep);
    Tensor<S> scaled_eps(eps.shape);
    const S b = static_cast<S>(std::sqrt(1.0 - ab));
    for (std::size_t i = 0; i < eps.size(); ++i) scaled_eps.v[i] = b * eps.v[i];
    return t.add(t.scale(z, static_cast<S>(std::sqrt(ab))), t.leaf(scaled_eps));
}

// ------------------------------------------------------------- eager ops

template <class S>
struct AttentionCapture {
    struct Map {
        std::string layer_id;
        int heads = 0, n_query = 0, tok = 0;
        Tensor<S> m;  // [heads, N, L]
    };
    std::vector<Map> maps;
};

template <class S>
Tensor<S> encode(const ToyLdm<S>& model, const Tensor<S>& x) {
    require_shape(x, model.cfg.image_shape(), "encode");
    Tape<S> tape(false);
    BuildCtx<S> c(tape, model);
    return tape.value_tensor(build_encoder(c, tape.leaf(x)));
}

template <class S>
Tensor<S> decode(const ToyLdm<S>& model, const Tensor<S>& z) {
    require_shape(z, model.cfg.latent_shape(), "decode");
    Tape<S> tape(false);
    BuildCtx<S> c(tape, model);
    Tensor<S> out = tape.value_tensor(build_decoder(c, tape.leaf(z)));
    for (auto& p : out.v) p = std::min(S(1), std::max(S(0), p));
    return out;
}

template <class S>
Tensor<S> predict_noise(const ToyLdm<S>& model, const Tensor<S>& zt, int t, const Tensor<S>& f,
                        AttentionCapture<S>* capture = nullptr) {
    require_shape(zt, model.cfg.latent_shape(), "predict_noise: z_t");
    require_shape(f, model.cfg.embed_shape(), "predict_noise: f");
    Tape<S> tape(false);
    BuildCtx<S> c(tape, model);
    std::vector<AttnNodes> attn;
    int out = build_unet(c, tape.leaf(zt), t, tape.leaf(f), capture ? &attn : nullptr);
    if (capture) {
        capture->maps.clear();
        for (const auto& a : attn) {
            typename AttentionCapture<S>::Map m;
            m.layer_id = a.layer_id;
            m.heads = a.heads;
            m.n_query = a.n_query;
            m.tok = a.tok;
            m.m = Tensor<S>({a.heads, a.n_query, a.tok});
            for (int h = 0; h < a.heads; ++h) {
                const auto& hv = tape.val(a.head_maps[h]);
                std::copy(hv.begin(), hv.end(),
                          m.m.v.begin() + static_cast<std::size_t>(h) * a.n_query * a.tok);
            }
            capture->maps.push_back(std::move(m));
        }
    }
    return tape.value_tensor(out);
}

// Plain attention: M = softmax(Q K^T / sqrt(d)), out = M V.
template <class S>
std::pair<Tensor<S>, Tensor<S>> cross_attention(const Tensor<S>& q, const Tensor<S>& k,
                                                const Tensor<S>& v) {
    if (q.shape.size() != 2 || k.shape.size() != 2 || v.shape.size() != 2)
        throw ShapeError("cross_attention expects 2-D Q,K,V");
    const int N = q.shape[0], d = q.shape[1], L = k.shape[0];
    if (k.shape[1] != d) throw ShapeError("cross_attention: Q/K dim mismatch");
    if (v.shape[0] != L) throw ShapeError("cross_attention: K/V row mismatch");
    Tensor<S> logits({N, L});
    kern::matmul(q.data(), k.data(), logits.data(), N, L, d, false, true, false);
    const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
    for (auto& x : logits.v) x *= inv;
    Tensor<S> m({N, L});
    kern::softmax_rows(logits.data(), m.data(), N, L);
    Tensor<S> out({N, v.shape[1]});
    kern::matmul(m.data(), v.data(), out.data(), N, v.shape[1], L, false, false, false);
    return {out, m};
}

// Caption embedding: token ids padded/truncated to tok_len with pad id 0.
inline std::vector<int> pad_tokens(std::vector<int> tokens, int tok_len) {
    tokens.resize(tok_len, 0);
    return tokens;
}

template <class S>
Tensor<S> embed_tokens(const ToyLdm<S>& model, const std::vector<int>& tokens) {
    auto ids = pad_tokens(tokens, model.cfg.tok_len);
    Tape<S> tape(false);
    BuildCtx<S> c(tape, model);
    return tape.value_tensor(tape.gather_rows(c.param("embed.table"), ids));
}

}  // namespace dg
