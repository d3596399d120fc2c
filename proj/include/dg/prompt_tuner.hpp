#pragma once

#include "dg/losses.hpp"

namespace dg {

struct PromptTuneConfig {
    int steps = 50;
    float learning_rate = 1e-2f;
    int draws_per_step = 4;
    uint64_t seed = 0;

    void validate() const {
        if (steps < 0) throw ConfigError("prompt tuning: steps must be >= 0");
        if (!(learning_rate > 0)) throw ConfigError("prompt tuning: learning_rate must be > 0");
        if (draws_per_step < 1) throw ConfigError("prompt tuning: draws_per_step must be >= 1");
    }
};

// The empty prompt: every row is the pad token's embedding vector.
template <class S>
Tensor<S> init_empty_embedding(const ToyLdm<S>& model) {
    return embed_tokens(model, {});
}

template <class S>
S probe_loss(const ToyLdm<S>& model, const std::vector<Tensor<S>>& xs, const Tensor<S>& f,
             const std::vector<Draw<S>>& probe) {
    S acc = S(0);
    for (const auto& x : xs) acc += ldm_loss(model, x, f, probe);
    return acc / static_cast<S>(xs.size());
}

struct PromptTuneLog {
    double probe_before = 0, probe_after = 0;
    bool accepted = true;  // false when tuning was discarded for regressing the probe
};

// Stage 1: gradient descent on the embedding with all model weights frozen.
// The returned embedding never evaluates worse than the input on the fixed
// probe set; a regressing run falls back to the input embedding.
template <class S>
Tensor<S> tune_prompt(const ToyLdm<S>& model, const std::vector<Tensor<S>>& x_batch,
                      const Tensor<S>& f, const PromptTuneConfig& cfg,
                      const std::vector<Draw<S>>& probe, PromptTuneLog* log = nullptr) {
    cfg.validate();
    if (x_batch.empty()) throw ConfigError("tune_prompt: empty image batch");
    require_shape(f, model.cfg.embed_shape(), "tune_prompt: f");

    const S before = probe_loss(model, x_batch, f, probe);
    Tensor<S> cur = f;
    for (int s = 0; s < cfg.steps; ++s) {
        std::vector<std::vector<Draw<S>>> draws;
        for (std::size_t i = 0; i < x_batch.size(); ++i) {
            Rng rng(derive_seed(cfg.seed, "pt-step", static_cast<uint64_t>(s), i));
            draws.push_back(sample_draws(model, cfg.draws_per_step, rng));
        }
        auto vg = ldm_batch_grad_f(model, x_batch, cur, draws);
        for (std::size_t j = 0; j < cur.size(); ++j)
            cur.v[j] -= static_cast<S>(cfg.learning_rate) * vg.grad.v[j];
        if (!all_finite(cur.v)) throw NumericError("tune_prompt: embedding diverged at step " +
                                                   std::to_string(s));
    }
    const S after = cfg.steps == 0 ? before : probe_loss(model, x_batch, cur, probe);
    const bool accepted = after <= before;
    if (log) *log = PromptTuneLog{static_cast<double>(before), static_cast<double>(after),
                                  accepted};
    if (!accepted) return f;
    return cfg.steps == 0 ? f : cur;
}

}  // namespace dg
