#pragma once

#include <optional>

#include "dg/adversarial.hpp"
#include "dg/surrogate.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dg {

struct ProtectionConfig {
    int epochs = 10;
    PromptTuneConfig pt;       // stage 1 (per-epoch seeds derived internally)
    PerturbationBudget budget; // stage 2
    SurrogateConfig surrogate; // stage 3
    float url_weight = 1.0f;
    // The shared mean-over-elements reduction leaves the attention-map term
    // with gradients 30-90x smaller than the denoising term at this scale;
    // sign-based steps would never see it. The default weight rebalances the
    // two gradient fields; the cost operation itself stays the plain sum.
    float sdl_weight = 250.0f;
    AttnTargetKind target = AttnTargetKind::Zero;
    int attack_draws = 4;
    int probe_count = 16;
    bool use_pt = true;        // ablation: skip stage 1, keep the initial embedding
    bool parallel_images = true;
    uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("protect: epochs must be >= 1");
        pt.validate();
        budget.validate();
        surrogate.validate();
    }
};

// Per-epoch seeds; public so external stage composition can reproduce a run.
struct EpochSeeds {
    uint64_t pt, surrogate;
    uint64_t attack_base;
    uint64_t attack_for(std::size_t image_idx) const {
        return derive_seed(attack_base, "image", image_idx);
    }
};

inline EpochSeeds epoch_seeds(uint64_t master, int epoch) {
    const uint64_t e = derive_seed(master, "epoch", static_cast<uint64_t>(epoch));
    return EpochSeeds{derive_seed(e, "pt"), derive_seed(e, "surrogate"),
                      derive_seed(e, "attack")};
}

struct EpochLog {
    int epoch = 0;
    PromptTuneLog pt;
    SurrogateLog surrogate;
    double cost_first = 0, cost_last = 0;  // means over images
    double max_linf = 0;                   // against the clean originals
};

struct ProtectionResult {
    std::vector<TensorF> images;    // protected x_N
    TensorF embedding;              // tuned f_N
    ToyLdm<float> surrogate;        // final surrogate params
    std::vector<EpochLog> epochs;
    std::vector<std::vector<PgdTraceRow>> traces;  // per image, across epochs
};

inline double max_linf_pair(const TensorF& a, const TensorF& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

// The N-epoch alternating loop: tune_prompt -> attack -> unet_update, with
// the embedding, iterates and surrogate threaded forward between epochs. The
// projection anchor stays the clean original for the whole run.
inline ProtectionResult protect(const std::vector<TensorF>& images, const ToyLdm<float>& base,
                                const ProtectionConfig& cfg,
                                const TensorF* f_init = nullptr) {
    cfg.validate();
    if (images.empty()) throw ConfigError("protect: no images");
    for (const auto& x : images) {
        require_shape(x, base.cfg.image_shape(), "protect: image");
        for (float p : x.v)
            if (!(p >= 0.0f && p <= 1.0f)) throw ConfigError("protect: pixels outside [0,1]");
    }

    ProtectionResult res;
    res.images = images;
    res.embedding = f_init ? *f_init : init_empty_embedding(base);
    res.surrogate = base;
    res.traces.resize(images.size());

    const auto probe = probe_draws(res.surrogate, cfg.seed, cfg.probe_count);
    const auto targets =
        make_attn_targets<float>(base.cfg, cfg.target, derive_seed(cfg.seed, "target"));

    for (int j = 0; j < cfg.epochs; ++j) {
        const EpochSeeds seeds = epoch_seeds(cfg.seed, j);
        EpochLog log;
        log.epoch = j;

        if (cfg.use_pt) {
            PromptTuneConfig pt = cfg.pt;
            pt.seed = seeds.pt;
            res.embedding = tune_prompt(res.surrogate, res.images, res.embedding, pt, probe,
                                        &log.pt);
        }

        std::vector<std::string> errors(images.size());
        double cost_first = 0, cost_last = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static, 1) if (cfg.parallel_images) \
    reduction(+ : cost_first, cost_last)
#endif
        for (std::size_t i = 0; i < images.size(); ++i) {
            try {
                AttackOptions<float> opt;
                opt.weights = CostWeights<float>{cfg.url_weight, cfg.sdl_weight};
                opt.draws_per_iter = cfg.attack_draws;
                opt.seed = seeds.attack_for(i);
                opt.epoch = j;
                opt.trace = &res.traces[i];
                const std::size_t t0 = res.traces[i].size();
                res.images[i] = attack(res.surrogate, res.images[i], images[i], res.embedding,
                                       targets, cfg.budget, opt);
                if (res.traces[i].size() > t0) {
                    cost_first += res.traces[i][t0].cost;
                    cost_last += res.traces[i].back().cost;
                }
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
        for (std::size_t i = 0; i < images.size(); ++i)
            if (!errors[i].empty())
                throw NumericError("epoch " + std::to_string(j) + " stage 2 image " +
                                   std::to_string(i) + ": " + errors[i]);
        log.cost_first = cost_first / static_cast<double>(images.size());
        log.cost_last = cost_last / static_cast<double>(images.size());

        SurrogateConfig sg = cfg.surrogate;
        sg.seed = seeds.surrogate;
        try {
            res.surrogate = unet_update(std::move(res.surrogate), res.images, res.embedding, sg,
                                        probe, &log.surrogate);
        } catch (const std::exception& e) {
            throw NumericError("epoch " + std::to_string(j) + " stage 3: " + e.what());
        }

        for (std::size_t i = 0; i < images.size(); ++i)
            log.max_linf = std::max(log.max_linf, max_linf_pair(res.images[i], images[i]));
        if (log.max_linf > cfg.budget.eta)
            throw NumericError("budget violated at epoch " + std::to_string(j));
        res.epochs.push_back(log);
    }
    return res;
}

}  // namespace dg
