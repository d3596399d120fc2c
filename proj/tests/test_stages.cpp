#include "dg/attack_sim.hpp"
#include "dg/prompt_tuner.hpp"
#include "dg/surrogate.hpp"
#include "doctest.h"

using namespace dg;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.image_size = 16;
    c.enc_ch1 = 4;
    c.enc_ch2 = 6;
    c.unet_ch1 = 8;
    c.unet_ch2 = 12;
    c.embed_dim = 12;
    c.temb_dim = 8;
    c.temb_hidden = 12;
    return c;
}

std::vector<TensorF> rand_batch(const ModelConfig& c, int n, uint64_t seed) {
    std::vector<TensorF> out;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "img", i));
        TensorF x(c.image_shape());
        for (auto& p : x.v) p = static_cast<float>(rng.uniform());
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace

TEST_CASE("init_empty_embedding: every row is the pad embedding") {
    auto model = init_model<float>(tiny_cfg(), ScheduleConfig{}, 1);
    auto f = init_empty_embedding(model);
    CHECK(f.shape == model.cfg.embed_shape());
    const auto& table = model.params.at("embed.table");
    for (int r = 0; r < model.cfg.tok_len; ++r)
        for (int c = 0; c < model.cfg.embed_dim; ++c)
            CHECK(f.v[r * model.cfg.embed_dim + c] == table.v[c]);
    auto f2 = init_empty_embedding(model);
    CHECK(f.v == f2.v);
}

TEST_CASE("tune_prompt: steps=0 returns the input unchanged") {
    auto model = init_model<float>(tiny_cfg(), ScheduleConfig{}, 2);
    auto batch = rand_batch(model.cfg, 2, 3);
    auto f = init_empty_embedding(model);
    PromptTuneConfig cfg;
    cfg.steps = 0;
    auto probe = probe_draws(model, 11);
    PromptTuneLog log;
    auto out = tune_prompt(model, batch, f, cfg, probe, &log);
    CHECK(out.v == f.v);
    CHECK(log.probe_before == log.probe_after);
}

TEST_CASE("tune_prompt: freezes all parameter groups and keeps shape") {
    auto model = init_model<float>(tiny_cfg(), ScheduleConfig{}, 4);
    auto before = model.params.group_checksums();
    auto batch = rand_batch(model.cfg, 2, 5);
    auto f = init_empty_embedding(model);
    PromptTuneConfig cfg;
    cfg.steps = 8;
    cfg.seed = 21;
    auto probe = probe_draws(model, 12);
    PromptTuneLog log;
    auto out = tune_prompt(model, batch, f, cfg, probe, &log);
    CHECK(model.params.group_checksums() == before);
    CHECK(out.shape == f.shape);
    // the monotone-probe contract holds for the returned embedding
    CHECK(probe_loss(model, batch, out, probe) <= log.probe_before);
}

TEST_CASE("tune_prompt: rejects empty batch and bad config") {
    auto model = init_model<float>(tiny_cfg(), ScheduleConfig{}, 6);
    auto probe = probe_draws(model, 13);
    PromptTuneConfig cfg;
    CHECK_THROWS_AS(tune_prompt(model, {}, init_empty_embedding(model), cfg, probe),
                    ConfigError);
    cfg.learning_rate = 0.f;
    CHECK_THROWS_AS(
        tune_prompt(model, rand_batch(model.cfg, 1, 7), init_empty_embedding(model), cfg, probe),
        ConfigError);
}

TEST_CASE("unet_update: steps=0 is the identity; only unet group changes") {
    auto model = init_model<float>(tiny_cfg(), ScheduleConfig{}, 8);
    auto batch = rand_batch(model.cfg, 2, 9);
    auto f = init_empty_embedding(model);
    auto probe = probe_draws(model, 14);
    auto before = model.params.group_checksums();

    SurrogateConfig cfg0;
    cfg0.steps = 0;
    SurrogateLog log;
    auto same = unet_update(model, batch, f, cfg0, probe, &log);
    CHECK(same.params.group_checksums() == before);

    SurrogateConfig cfg;
    cfg.steps = 10;
    cfg.seed = 31;
    auto updated = unet_update(model, batch, f, cfg, probe, &log);
    auto after = updated.params.group_checksums();
    CHECK(after.at("encoder") == before.at("encoder"));
    CHECK(after.at("decoder") == before.at("decoder"));
    CHECK(after.at("embedder") == before.at("embedder"));
    CHECK(log.probe_after <= log.probe_before);
    // probe contract holds on the returned params as well
    CHECK(probe_loss(updated, batch, f, probe) <= log.probe_before);
}

TEST_CASE("finetune_attack: steps=0 unchanged; non-subject rows frozen") {
    auto model = init_model<float>(tiny_cfg(), ScheduleConfig{}, 10);
    auto batch = rand_batch(model.cfg, 2, 11);
    const int token = 17;

    FinetuneConfig cfg0;
    cfg0.steps = 0;
    auto same = finetune_attack(model, batch, token, cfg0);
    CHECK(same.params.group_checksums() == model.params.group_checksums());

    FinetuneConfig cfg;
    cfg.steps = 6;
    cfg.seed = 12;
    auto tuned = finetune_attack(model, batch, token, cfg);
    auto cs = tuned.params.group_checksums();
    CHECK(cs.at("encoder") == model.params.group_checksums().at("encoder"));
    CHECK(cs.at("decoder") == model.params.group_checksums().at("decoder"));
    CHECK(cs.at("unet") != model.params.group_checksums().at("unet"));

    const auto& t0 = model.params.at("embed.table");
    const auto& t1 = tuned.params.at("embed.table");
    const int D = model.cfg.embed_dim;
    bool subject_changed = false;
    for (int r = 0; r < model.cfg.vocab_size; ++r)
        for (int c = 0; c < D; ++c) {
            if (r == token) {
                subject_changed |= t0.v[r * D + c] != t1.v[r * D + c];
            } else {
                CHECK(t0.v[r * D + c] == t1.v[r * D + c]);
            }
        }
    CHECK(subject_changed);

    CHECK_THROWS_AS(finetune_attack(model, {}, token, cfg), ConfigError);
    CHECK_THROWS_AS(finetune_attack(model, batch, 0, cfg), ConfigError);
    CHECK_THROWS_AS(finetune_attack(model, batch, 64, cfg), ConfigError);
}
