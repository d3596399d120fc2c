#pragma once

#include <limits>

#include "dg/attack_sim.hpp"
#include "dg/losses.hpp"

namespace dg {

// 10*log10(1/MSE) over [0,1] images; identical inputs return +infinity.
inline double psnr(const TensorF& a, const TensorF& b) {
    if (a.shape != b.shape)
        throw ShapeError("psnr: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

inline double linf(const TensorF& a, const TensorF& b) {
    if (a.shape != b.shape)
        throw ShapeError("linf: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

inline double image_mse(const TensorF& a, const TensorF& b) {
    if (a.shape != b.shape) throw ShapeError("mse: shape mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// Mean squared entry of the captured attention maps; by definition the
// attention-disturbance loss against an all-zero target.
inline double attention_energy(const ToyLdm<float>& model, const TensorF& x, const TensorF& f,
                               const std::vector<Draw<float>>& draws) {
    auto targets = make_attn_targets<float>(model.cfg, AttnTargetKind::Zero, 0);
    return static_cast<double>(sdl_loss(model, x, f, targets, draws));
}

// --------------------------------------------------------- efficacy trials

struct EfficacyTrialConfig {
    // per-branch seeds are derived from the trial seed; the paired attacker
    // is lighter than the standalone personalization default
    FinetuneConfig finetune{200, 2e-3f, 2, 0};
    int probe_count = 16;
    int sample_count = 4;
    int sample_steps = 20;
    uint64_t seed = 0;
};

struct EfficacyRecord {
    uint64_t seed = 0;
    double heldout_clean = 0, heldout_protected = 0;     // ldm loss after finetune
    double tmpl_mse_clean = 0, tmpl_mse_protected = 0;   // samples vs canonical render
    bool win = false;  // protected-trained loss exceeds clean-trained loss
};

// Paired personalization attempt on clean vs protected images of one subject,
// scored on held-out denoising loss and sample-vs-template distance. The two
// branches use independent derived seeds, so identical inputs give ~50% wins.
inline EfficacyRecord efficacy_trial(const ToyLdm<float>& base,
                                     const std::vector<TensorF>& clean_set,
                                     const std::vector<TensorF>& protected_set,
                                     const std::vector<TensorF>& heldout_set,
                                     int subject_token, const TensorF& subject_template,
                                     const EfficacyTrialConfig& cfg) {
    if (clean_set.empty() || protected_set.empty() || heldout_set.empty())
        throw ConfigError("efficacy_trial: empty image sets");

    auto run_branch = [&](const std::vector<TensorF>& images, uint64_t seed, double* heldout,
                          double* tmpl_mse) {
        FinetuneConfig fc = cfg.finetune;
        fc.seed = seed;
        ToyLdm<float> tuned = finetune_attack(base, images, subject_token, fc);
        const auto probe =
            probe_draws(tuned, derive_seed(cfg.seed, "trial-probe"), cfg.probe_count);
        const TensorF f_tok = embed_tokens(tuned, {subject_token});
        double acc = 0;
        for (const auto& x : heldout_set) acc += ldm_loss(tuned, x, f_tok, probe);
        *heldout = acc / static_cast<double>(heldout_set.size());
        double m = 0;
        for (int k = 0; k < cfg.sample_count; ++k) {
            TensorF sample = ddim_sample(tuned, f_tok, cfg.sample_steps,
                                         derive_seed(seed, "sample", static_cast<uint64_t>(k)));
            m += image_mse(sample, subject_template);
        }
        *tmpl_mse = m / static_cast<double>(cfg.sample_count);
    };

    EfficacyRecord rec;
    rec.seed = cfg.seed;
    run_branch(clean_set, derive_seed(cfg.seed, "clean"), &rec.heldout_clean,
               &rec.tmpl_mse_clean);
    run_branch(protected_set, derive_seed(cfg.seed, "protected"), &rec.heldout_protected,
               &rec.tmpl_mse_protected);
    rec.win = rec.heldout_protected > rec.heldout_clean;
    return rec;
}

}  // namespace dg
