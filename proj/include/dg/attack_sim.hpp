#pragma once

#include "dg/losses.hpp"
#include "dg/params.hpp"

namespace dg {

struct FinetuneConfig {
    int steps = 300;
    float lr = 3e-3f;  // Adam
    int draws_per_step = 2;
    uint64_t seed = 0;
};

// Personalization surrogate: Adam descent on the denoising loss conditioned
// on a rare subject token. Touches the unet group and exactly one embedder
// row; every other embedder row keeps its bits.
template <class S>
ToyLdm<S> finetune_attack(ToyLdm<S> model, const std::vector<Tensor<S>>& images,
                          int subject_token, const FinetuneConfig& cfg) {
    if (images.empty()) throw ConfigError("finetune_attack: empty image set");
    if (subject_token < 1 || subject_token >= model.cfg.vocab_size)
        throw ConfigError("finetune_attack: subject token out of vocabulary");

    const std::vector<int> caption{subject_token};
    std::vector<Cond<S>> conds(images.size(), Cond<S>{nullptr, &caption});
    const int embed_idx = model.params.index.at("embed.table");
    const int dim = model.cfg.embed_dim;

    AdamOptimizer<S> opt(static_cast<S>(cfg.lr));
    for (int s = 0; s < cfg.steps; ++s) {
        std::vector<std::vector<Draw<S>>> draws;
        for (std::size_t i = 0; i < images.size(); ++i) {
            Rng rng(derive_seed(cfg.seed, "ft-step", static_cast<uint64_t>(s), i));
            draws.push_back(sample_draws(model, cfg.draws_per_step, rng));
        }
        auto bg = ldm_batch_param_grads(model, images, conds, draws, {"unet", "embedder"});
        for (auto& [idx, g] : bg.grads)
            if (idx == embed_idx)  // only the subject row may learn
                for (int r = 0; r < model.cfg.vocab_size; ++r)
                    if (r != subject_token)
                        std::fill(g.v.begin() + r * dim, g.v.begin() + (r + 1) * dim, S(0));
        opt.step(model.params, bg.grads);
    }
    return model;
}

// Deterministic DDIM trajectory (eta = 0). n_steps must divide T evenly.
template <class S>
Tensor<S> ddim_denoise(const ToyLdm<S>& model, Tensor<S> z, int t_start, int stride,
                       const Tensor<S>& f) {
    if (stride < 1) throw ConfigError("ddim: stride must be >= 1");
    for (int t = t_start; t >= 1; t -= stride) {
        Tensor<S> eps_hat = predict_noise(model, z, t, f);
        const double ab = model.sched.alpha_bar(t);
        const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        const int t_prev = t - stride;
        Tensor<S> z0(z.shape);
        for (std::size_t i = 0; i < z.size(); ++i)
            z0.v[i] = static_cast<S>((static_cast<double>(z.v[i]) -
                                      sb * static_cast<double>(eps_hat.v[i])) /
                                     sa);
        if (t_prev < 1) {
            z = std::move(z0);
        } else {
            const double abp = model.sched.alpha_bar(t_prev);
            const double sap = std::sqrt(abp), sbp = std::sqrt(1.0 - abp);
            for (std::size_t i = 0; i < z.size(); ++i)
                z.v[i] = static_cast<S>(sap * static_cast<double>(z0.v[i]) +
                                        sbp * static_cast<double>(eps_hat.v[i]));
        }
    }
    return z;
}

template <class S>
Tensor<S> ddim_sample(const ToyLdm<S>& model, const Tensor<S>& f, int n_steps, uint64_t seed) {
    if (n_steps < 1) throw ConfigError("ddim_sample: n_steps must be >= 1");
    if (model.sched.T % n_steps != 0)
        throw ConfigError("ddim_sample: n_steps must divide T evenly");
    Rng rng(derive_seed(seed, "ddim-init"));
    Tensor<S> z(model.cfg.latent_shape());
    for (auto& x : z.v) x = static_cast<S>(rng.normal());
    z = ddim_denoise(model, std::move(z), model.sched.T, model.sched.T / n_steps, f);
    return decode(model, z);
}

struct EditConfig {
    double t_frac = 0.6;
    int denoise_stride = 5;
    uint64_t seed = 0;
};

// Editing surrogate: encode, partially noise to t = round(t_frac * T), then
// conditionally DDIM-denoise toward the target embedding and decode.
template <class S>
Tensor<S> edit_attack(const ToyLdm<S>& model, const Tensor<S>& x, const Tensor<S>& f_target,
                      const EditConfig& cfg) {
    if (!(cfg.t_frac >= 0.0 && cfg.t_frac <= 1.0))
        throw ConfigError("edit_attack: t_frac must be in [0,1]");
    Tensor<S> z = encode(model, x);
    const int t_edit = static_cast<int>(std::lround(cfg.t_frac * model.sched.T));
    if (t_edit >= 1) {
        Rng rng(derive_seed(cfg.seed, "edit-noise"));
        Tensor<S> eps(z.shape);
        for (auto& v : eps.v) v = static_cast<S>(rng.normal());
        z = add_noise(z, t_edit, eps, model.sched);
        z = ddim_denoise(model, std::move(z), t_edit, std::max(1, cfg.denoise_stride), f_target);
    }
    return decode(model, z);
}

}  // namespace dg
