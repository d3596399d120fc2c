#pragma once

#include "dg/dataset.hpp"
#include "dg/losses.hpp"

namespace dg {

struct PretrainConfig {
    int ae_steps = 600;
    int ldm_steps = 2500;
    int batch = 8;
    float ae_lr = 2e-3f;
    float ldm_lr = 1.5e-3f;
    int draws_per_image = 1;
    uint64_t seed = 0;
};

struct PretrainReport {
    double recon_mse = 0;          // mean over held-out images
    double heldout_initial = 0;    // ldm loss of the untrained model
    double heldout_final = 0;
    double ae_loss_first = 0, ae_loss_last = 0;
    double ldm_loss_first = 0, ldm_loss_last = 0;
};

namespace detail {

struct FlatItem {
    const TensorF* image;
    const std::vector<int>* caption;
};

inline std::vector<FlatItem> flatten_split(const ToyDataset& ds, bool heldout) {
    std::vector<FlatItem> items;
    for (const auto& sub : ds.subjects)
        for (const auto& img : (heldout ? sub.heldout : sub.train))
            items.push_back({&img, &sub.caption});
    return items;
}

inline double heldout_ldm(const ToyLdm<float>& model, const std::vector<FlatItem>& items,
                          const std::vector<Draw<float>>& probe) {
    double acc = 0;
    for (const auto& it : items)
        acc += ldm_loss(model, *it.image, embed_tokens(model, *it.caption), probe);
    return acc / static_cast<double>(items.size());
}

}  // namespace detail

// Stands in for a pretrained latent diffusion checkpoint: phase A trains the
// autoencoder on reconstruction, phase B the UNet and embedder on the
// denoising loss with captions routed through the token table.
inline ToyLdm<float> pretrain_toy(const ToyDataset& ds, const ModelConfig& mc,
                                  const ScheduleConfig& sc, const PretrainConfig& cfg,
                                  PretrainReport* report = nullptr) {
    if (ds.subjects.empty()) throw ConfigError("pretrain: empty dataset");
    if (ds.image_size != mc.image_size)
        throw ConfigError("pretrain: dataset image size differs from model config");
    ToyLdm<float> model = init_model<float>(mc, sc, cfg.seed);

    auto train = detail::flatten_split(ds, false);
    auto heldout = detail::flatten_split(ds, true);
    if (heldout.empty()) heldout = train;
    const auto probe = probe_draws(model, derive_seed(cfg.seed, "pretrain-heldout"));
    PretrainReport rep;
    rep.heldout_initial = detail::heldout_ldm(model, heldout, probe);

    Rng batch_rng(derive_seed(cfg.seed, "pretrain-batches"));
    const int bs = std::min<int>(cfg.batch, static_cast<int>(train.size()));

    AdamOptimizer<float> ae_opt(cfg.ae_lr);
    for (int s = 0; s < cfg.ae_steps; ++s) {
        std::vector<TensorF> xs;
        for (int b = 0; b < bs; ++b)
            xs.push_back(*train[batch_rng.uniform_int(0, static_cast<int>(train.size()) - 1)]
                              .image);
        auto bg = recon_batch_param_grads(model, xs);
        if (s == 0) rep.ae_loss_first = bg.value;
        rep.ae_loss_last = bg.value;
        ae_opt.step(model.params, bg.grads);
    }

    AdamOptimizer<float> ldm_opt(cfg.ldm_lr);
    for (int s = 0; s < cfg.ldm_steps; ++s) {
        std::vector<TensorF> xs;
        std::vector<Cond<float>> conds;
        std::vector<std::vector<Draw<float>>> draws;
        Rng draw_rng(derive_seed(cfg.seed, "pretrain-draws", static_cast<uint64_t>(s)));
        for (int b = 0; b < bs; ++b) {
            const auto& it =
                train[batch_rng.uniform_int(0, static_cast<int>(train.size()) - 1)];
            xs.push_back(*it.image);
            conds.push_back(Cond<float>{nullptr, it.caption});
            draws.push_back(sample_draws(model, cfg.draws_per_image, draw_rng));
        }
        auto bg = ldm_batch_param_grads(model, xs, conds, draws, {"unet", "embedder"});
        if (s == 0) rep.ldm_loss_first = bg.value;
        rep.ldm_loss_last = bg.value;
        ldm_opt.step(model.params, bg.grads);
    }

    rep.heldout_final = detail::heldout_ldm(model, heldout, probe);
    double mse = 0;
    for (const auto& it : heldout) mse += recon_mse(model, *it.image);
    rep.recon_mse = mse / static_cast<double>(heldout.size());
    if (report) *report = rep;
    return model;
}

}  // namespace dg
