#pragma once

#include "dg/prompt_tuner.hpp"

namespace dg {

struct SurrogateConfig {
    int steps = 20;
    float lr = 1e-3f;
    int draws_per_step = 4;
    uint64_t seed = 0;

    void validate() const {
        if (steps < 0) throw ConfigError("surrogate: steps must be >= 0");
        if (!(lr > 0)) throw ConfigError("surrogate: lr must be > 0");
    }
};

struct SurrogateLog {
    double probe_before = 0, probe_after = 0;
    bool accepted = true;
};

// Stage 3: descend the denoising loss on the adversarial batch, touching only
// the "unet" parameter group. Reverts when the fixed probe would regress.
template <class S>
ToyLdm<S> unet_update(ToyLdm<S> model, const std::vector<Tensor<S>>& x_batch, const Tensor<S>& f,
                      const SurrogateConfig& cfg, const std::vector<Draw<S>>& probe,
                      SurrogateLog* log = nullptr) {
    cfg.validate();
    if (x_batch.empty()) throw ConfigError("unet_update: empty batch");

    const S before = probe_loss(model, x_batch, f, probe);
    std::vector<Tensor<S>> saved;
    std::vector<int> unet_idx;
    for (std::size_t i = 0; i < model.params.entries.size(); ++i)
        if (model.params.entries[i].group == "unet") {
            unet_idx.push_back(static_cast<int>(i));
            saved.push_back(model.params.entries[i].t);
        }

    SgdOptimizer<S> opt(static_cast<S>(cfg.lr));
    std::vector<Cond<S>> conds(x_batch.size(), Cond<S>{&f, nullptr});
    for (int s = 0; s < cfg.steps; ++s) {
        std::vector<std::vector<Draw<S>>> draws;
        for (std::size_t i = 0; i < x_batch.size(); ++i) {
            Rng rng(derive_seed(cfg.seed, "unet-step", static_cast<uint64_t>(s), i));
            draws.push_back(sample_draws(model, cfg.draws_per_step, rng));
        }
        auto bg = ldm_batch_param_grads(model, x_batch, conds, draws, {"unet"});
        opt.step(model.params, bg.grads);
    }

    const S after = cfg.steps == 0 ? before : probe_loss(model, x_batch, f, probe);
    const bool accepted = after <= before;
    if (!accepted)
        for (std::size_t k = 0; k < unet_idx.size(); ++k)
            model.params.entries[unet_idx[k]].t = saved[k];
    if (log) *log = SurrogateLog{static_cast<double>(before), static_cast<double>(after),
                                 accepted};
    return model;
}

}  // namespace dg
