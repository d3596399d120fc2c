#pragma once

#include <functional>
#include <map>
#include <set>

#include "dg/model.hpp"

namespace dg {

// One Monte-Carlo draw of the diffusion training expectation.
template <class S>
struct Draw {
    int t = 1;
    Tensor<S> eps;
};

template <class S>
std::vector<Draw<S>> sample_draws(const ToyLdm<S>& model, int n, Rng& rng) {
    std::vector<Draw<S>> out(n);
    for (auto& d : out) {
        d.t = rng.uniform_int(1, model.sched.T);
        d.eps = Tensor<S>(model.cfg.latent_shape());
        for (auto& x : d.eps.v) x = static_cast<S>(rng.normal());
    }
    return out;
}

template <class S>
std::vector<Draw<S>> probe_draws(const ToyLdm<S>& model, uint64_t seed, int n = 16) {
    Rng rng(derive_seed(seed, "probe"));
    return sample_draws(model, n, rng);
}

// ------------------------------------------------------- attention targets

enum class AttnTargetKind { Zero, Noise, Diagonal };

inline const char* attn_target_name(AttnTargetKind k) {
    switch (k) {
        case AttnTargetKind::Zero: return "zero";
        case AttnTargetKind::Noise: return "noise";
        case AttnTargetKind::Diagonal: return "diagonal";
    }
    return "?";
}

inline AttnTargetKind parse_attn_target(const std::string& s) {
    if (s == "zero") return AttnTargetKind::Zero;
    if (s == "noise") return AttnTargetKind::Noise;
    if (s == "diagonal") return AttnTargetKind::Diagonal;
    throw ConfigError("unknown attention target: " + s + " (want zero|noise|diagonal)");
}

struct AttnLayerShape {
    std::string layer_id;
    int heads, n_query, tok;
};

inline std::vector<AttnLayerShape> attention_layer_shapes(const ModelConfig& cfg) {
    const int s1 = cfg.latent_size();
    const int s2 = s1 / 2;
    return {{"unet.d.attn", cfg.n_heads, s1 * s1, cfg.tok_len},
            {"unet.m.attn", cfg.n_heads, s2 * s2, cfg.tok_len}};
}

// Per-layer target maps. A [N,L] map broadcasts over heads; a [heads,N,L]
// map addresses each head individually.
template <class S>
struct AttnTargets {
    AttnTargetKind kind = AttnTargetKind::Zero;
    std::vector<Tensor<S>> maps;
};

template <class S>
Tensor<S> target_head_slice(const Tensor<S>& map, int head, int n_query, int tok) {
    if (map.shape == Shape{n_query, tok}) return map;
    if (map.shape.size() == 3 && map.shape[1] == n_query && map.shape[2] == tok) {
        if (head >= map.shape[0]) throw ShapeError("attention target has too few heads");
        Tensor<S> out({n_query, tok});
        const std::size_t n = out.size();
        std::copy(map.v.begin() + head * n, map.v.begin() + (head + 1) * n, out.v.begin());
        return out;
    }
    throw ShapeError("attention target " + shape_str(map.shape) + " incompatible with map [" +
                     std::to_string(n_query) + "," + std::to_string(tok) + "]");
}

template <class S>
AttnTargets<S> make_attn_targets(const ModelConfig& cfg, AttnTargetKind kind, uint64_t seed) {
    AttnTargets<S> t;
    t.kind = kind;
    Rng rng(derive_seed(seed, "attn-target"));
    for (const auto& layer : attention_layer_shapes(cfg)) {
        Tensor<S> m({layer.n_query, layer.tok});
        switch (kind) {
            case AttnTargetKind::Zero: break;
            case AttnTargetKind::Noise:
                for (auto& x : m.v) x = static_cast<S>(rng.uniform());
                break;
            case AttnTargetKind::Diagonal:
                for (int i = 0; i < std::min(layer.n_query, layer.tok); ++i)
                    m.v[i * layer.tok + i] = S(1);
                break;
        }
        t.maps.push_back(std::move(m));
    }
    return t;
}

// ------------------------------------------------------------ loss builders

// Text conditioning: either an explicit embedding matrix or caption tokens
// routed through the embedder table (the latter lets gradients reach it).
template <class S>
struct Cond {
    const Tensor<S>* f = nullptr;
    const std::vector<int>* tokens = nullptr;
};

template <class S>
int build_cond(BuildCtx<S>& c, const Cond<S>& cond) {
    if (cond.f) {
        require_shape(*cond.f, c.model.cfg.embed_shape(), "conditioning embedding");
        return c.tape.leaf(*cond.f);
    }
    if (!cond.tokens) throw ConfigError("conditioning needs an embedding or tokens");
    return c.tape.gather_rows(c.param("embed.table"),
                              pad_tokens(*cond.tokens, c.model.cfg.tok_len));
}

template <class S>
struct LossNodes {
    int ldm = -1;  // scalar: mean over draws of per-element MSE
    int sdl = -1;  // scalar: mean over draws & layers of map MSE vs target
};

// Shared forward for the denoising and attention terms: one UNet pass per
// draw feeds both, so combined costs use identical draws by construction.
template <class S>
LossNodes<S> build_losses(BuildCtx<S>& c, int x_node, const Cond<S>& cond,
                          const std::vector<Draw<S>>& draws, const AttnTargets<S>* targets) {
    if (draws.empty()) throw ConfigError("loss needs at least one (t, eps) draw");
    auto& t = c.tape;
    int f_node = build_cond(c, cond);
    int z = build_encoder(c, x_node);

    std::vector<int> ldm_terms, sdl_terms;
    for (const auto& d : draws) {
        require_shape(d.eps, c.model.cfg.latent_shape(), "draw eps");
        int zt = build_add_noise(c, z, d.t, d.eps);
        std::vector<AttnNodes> attn;
        int eps_hat = build_unet(c, zt, d.t, f_node, targets ? &attn : nullptr);
        ldm_terms.push_back(t.msd_const(eps_hat, d.eps));
        if (targets) {
            if (targets->maps.size() != attn.size())
                throw ShapeError("attention targets: expected one map per layer");
            std::vector<int> layer_terms;
            for (std::size_t li = 0; li < attn.size(); ++li) {
                const auto& a = attn[li];
                std::vector<int> head_terms;
                for (int h = 0; h < a.heads; ++h)
                    head_terms.push_back(t.msd_const(
                        a.head_maps[h],
                        target_head_slice(targets->maps[li], h, a.n_query, a.tok)));
                layer_terms.push_back(t.mean_scalars(head_terms));
            }
            sdl_terms.push_back(t.mean_scalars(layer_terms));
        }
    }
    LossNodes<S> out;
    out.ldm = t.mean_scalars(ldm_terms);
    if (targets) out.sdl = t.mean_scalars(sdl_terms);
    return out;
}

template <class S>
AttnTargets<S> targets_from_capture(const AttentionCapture<S>& cap) {
    AttnTargets<S> t;
    t.kind = AttnTargetKind::Zero;
    for (const auto& m : cap.maps) t.maps.push_back(m.m);
    return t;
}

template <class S>
S checked(S value, const char* what) {
    if (!std::isfinite(static_cast<double>(value)))
        throw NumericError(std::string(what) + " is not finite");
    return value;
}

// --------------------------------------------------------------- eager ops

template <class S>
S ldm_loss(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
           const std::vector<Draw<S>>& draws) {
    Tape<S> tape(false);
    BuildCtx<S> c(tape, model);
    Cond<S> cond{&f, nullptr};
    auto nodes = build_losses<S>(c, tape.leaf(x), cond, draws, nullptr);
    return checked(tape.scalar(nodes.ldm), "ldm_loss");
}

// Negated denoising error; always the exact negation of ldm_loss.
template <class S>
S url_loss(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
           const std::vector<Draw<S>>& draws) {
    return -ldm_loss(model, x, f, draws);
}

template <class S>
S sdl_loss(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
           const AttnTargets<S>& targets, const std::vector<Draw<S>>& draws) {
    Tape<S> tape(false);
    BuildCtx<S> c(tape, model);
    Cond<S> cond{&f, nullptr};
    auto nodes = build_losses(c, tape.leaf(x), cond, draws, &targets);
    return checked(tape.scalar(nodes.sdl), "sdl_loss");
}

template <class S>
struct CostWeights {
    S url = S(1);
    S sdl = S(1);
};

template <class S>
struct CostEval {
    S cost = S(0), url = S(0), sdl = S(0);
    Tensor<S> grad_x;  // set when requested
};

// C = w_url * L_URL + w_sdl * L_SDL on shared draws; optionally with d/dx.
template <class S>
CostEval<S> cost_eval(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
                      const AttnTargets<S>& targets, CostWeights<S> w,
                      const std::vector<Draw<S>>& draws, bool want_grad_x) {
    Tape<S> tape(want_grad_x);
    BuildCtx<S> c(tape, model);
    int x_node = tape.leaf(x);
    Cond<S> cond{&f, nullptr};
    const bool use_sdl = w.sdl != S(0);
    auto nodes = build_losses(c, x_node, cond, draws, use_sdl ? &targets : nullptr);

    CostEval<S> out;
    S ldm = tape.scalar(nodes.ldm);
    out.url = -ldm;
    out.sdl = use_sdl ? tape.scalar(nodes.sdl) : S(0);
    int cost_node = use_sdl ? tape.add_scaled(nodes.ldm, nodes.sdl, -w.url, w.sdl)
                            : tape.scale(nodes.ldm, -w.url);
    out.cost = checked(tape.scalar(cost_node), "cost");
    if (want_grad_x) {
        tape.backward(cost_node);
        out.grad_x = tape.grad_tensor(x_node);
    }
    return out;
}

template <class S>
S cost_value(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
             const AttnTargets<S>& targets, CostWeights<S> w, const std::vector<Draw<S>>& draws) {
    return cost_eval(model, x, f, targets, w, draws, false).cost;
}

// --------------------------------------------------------- gradient drivers

template <class S>
struct ValueGrad {
    S value = S(0);
    Tensor<S> grad;
};

template <class S>
ValueGrad<S> ldm_grad_x(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
                        const std::vector<Draw<S>>& draws) {
    Tape<S> tape(true);
    BuildCtx<S> c(tape, model);
    int x_node = tape.leaf(x);
    Cond<S> cond{&f, nullptr};
    auto nodes = build_losses<S>(c, x_node, cond, draws, nullptr);
    tape.backward(nodes.ldm);
    return {checked(tape.scalar(nodes.ldm), "ldm_loss"), tape.grad_tensor(x_node)};
}

template <class S>
ValueGrad<S> sdl_grad_x(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f,
                        const AttnTargets<S>& targets, const std::vector<Draw<S>>& draws) {
    Tape<S> tape(true);
    BuildCtx<S> c(tape, model);
    int x_node = tape.leaf(x);
    Cond<S> cond{&f, nullptr};
    auto nodes = build_losses<S>(c, x_node, cond, draws, &targets);
    tape.backward(nodes.sdl);
    return {checked(tape.scalar(nodes.sdl), "sdl_loss"), tape.grad_tensor(x_node)};
}

// Mean ldm loss over a batch and its gradient w.r.t. the shared embedding f.
template <class S>
ValueGrad<S> ldm_batch_grad_f(const ToyLdm<S>& model, const std::vector<Tensor<S>>& xs,
                              const Tensor<S>& f,
                              const std::vector<std::vector<Draw<S>>>& draws_per_image) {
    ValueGrad<S> out;
    out.grad = Tensor<S>(f.shape);
    const S inv = S(1) / static_cast<S>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Tape<S> tape(true);
        BuildCtx<S> c(tape, model);
        int f_node = tape.leaf(f);
        int z = build_encoder(c, tape.leaf(xs[i]));
        std::vector<int> terms;
        for (const auto& d : draws_per_image[i]) {
            int zt = build_add_noise(c, z, d.t, d.eps);
            terms.push_back(tape.msd_const(build_unet(c, zt, d.t, f_node, nullptr), d.eps));
        }
        int loss = tape.mean_scalars(terms);
        tape.backward(loss);
        out.value += tape.scalar(loss);
        const auto& g = tape.grad(f_node);
        for (std::size_t j = 0; j < g.size(); ++j) out.grad.v[j] += g[j];
    }
    out.value = checked(out.value * inv, "ldm_loss (batch)");
    for (auto& g : out.grad.v) g *= inv;
    return out;
}

template <class S>
struct BatchParamGrads {
    S value = S(0);
    GradList<S> grads;
};

// Mean ldm loss over a batch with grads for the parameter groups in `groups`.
// Conditioning per image; tokens route gradients into the embedder table.
template <class S>
BatchParamGrads<S> ldm_batch_param_grads(const ToyLdm<S>& model, const std::vector<Tensor<S>>& xs,
                                         const std::vector<Cond<S>>& conds,
                                         const std::vector<std::vector<Draw<S>>>& draws_per_image,
                                         const std::set<std::string>& groups) {
    std::map<int, Tensor<S>> acc;
    BatchParamGrads<S> out;
    const S inv = S(1) / static_cast<S>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Tape<S> tape(true);
        BuildCtx<S> c(tape, model);
        auto nodes = build_losses<S>(c, tape.leaf(xs[i]), conds[i], draws_per_image[i], nullptr);
        tape.backward(nodes.ldm);
        out.value += tape.scalar(nodes.ldm);
        for (const auto& [name, node] : c.pnodes) {
            int idx = model.params.index.at(name);
            if (!groups.count(model.params.entries[idx].group)) continue;
            auto [it, fresh] = acc.try_emplace(idx, Tensor<S>(tape.shape(node)));
            const auto& g = tape.grad(node);
            for (std::size_t j = 0; j < g.size(); ++j) it->second.v[j] += g[j];
        }
    }
    out.value = checked(out.value * inv, "ldm_loss (batch)");
    for (auto& [idx, g] : acc) {
        for (auto& x : g.v) x *= inv;
        out.grads.emplace_back(idx, std::move(g));
    }
    return out;
}

// Autoencoder reconstruction objective for pretraining.
template <class S>
BatchParamGrads<S> recon_batch_param_grads(const ToyLdm<S>& model,
                                           const std::vector<Tensor<S>>& xs) {
    std::map<int, Tensor<S>> acc;
    BatchParamGrads<S> out;
    const S inv = S(1) / static_cast<S>(xs.size());
    for (const auto& x : xs) {
        Tape<S> tape(true);
        BuildCtx<S> c(tape, model);
        int x_node = tape.leaf(x);
        int rec = build_decoder(c, build_encoder(c, x_node));
        int loss = tape.msd_const(rec, x);
        tape.backward(loss);
        out.value += tape.scalar(loss);
        for (const auto& [name, node] : c.pnodes) {
            int idx = model.params.index.at(name);
            const auto& group = model.params.entries[idx].group;
            if (group != "encoder" && group != "decoder") continue;
            auto [it, fresh] = acc.try_emplace(idx, Tensor<S>(tape.shape(node)));
            const auto& g = tape.grad(node);
            for (std::size_t j = 0; j < g.size(); ++j) it->second.v[j] += g[j];
        }
    }
    out.value = checked(out.value * inv, "recon loss (batch)");
    for (auto& [idx, g] : acc) {
        for (auto& x : g.v) x *= inv;
        out.grads.emplace_back(idx, std::move(g));
    }
    return out;
}

template <class S>
S recon_mse(const ToyLdm<S>& model, const Tensor<S>& x) {
    Tensor<S> rec = decode(model, encode(model, x));
    S acc = S(0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        S d = rec.v[i] - x.v[i];
        acc += d * d;
    }
    return acc / static_cast<S>(x.size());
}

}  // namespace dg
