#pragma once

#include <array>
#include <string>
#include <vector>

#include "dg/common.hpp"
#include "dg/rng.hpp"

namespace dg {

// Fixed 64-token vocabulary shared by the generator, the embedder and the
// CLI. Ids 17..32 are reserved rare tokens used to bind subjects during
// simulated personalization (never seen in pretraining captions).
inline const std::vector<std::string>& vocab_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        v.push_back("<pad>");
        for (const char* s : {"circle", "square", "triangle", "diamond"}) v.push_back(s);
        for (const char* s :
             {"red", "green", "blue", "yellow", "magenta", "cyan", "orange", "white"})
            v.push_back(s);
        for (const char* s : {"solid", "stripes", "dots", "checker"}) v.push_back(s);
        for (int i = 0; i < 16; ++i) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "sub%02d", i);
            v.push_back(buf);
        }
        while (v.size() < 64) v.push_back("tok" + std::to_string(v.size()));
        return v;
    }();
    return names;
}

constexpr int kShapeTokBase = 1;    // 4 shapes
constexpr int kColorTokBase = 5;    // 8 colors
constexpr int kTextureTokBase = 13; // 4 textures
constexpr int kSubjectTokBase = 17; // 16 rare subject tokens

inline int token_id(const std::string& name) {
    const auto& names = vocab_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw ConfigError("unknown token name: " + name);
}

struct Subject {
    int id = 0;
    int shape = 0, color = 0, texture = 0;
    int subject_token = kSubjectTokBase;
    std::vector<int> caption;  // [shape_tok, color_tok, texture_tok]
    std::vector<TensorF> train, heldout;
    TensorF canonical;  // template render: centered, clean background
};

struct ToyDataset {
    int image_size = 32;
    uint64_t seed = 0;
    std::vector<Subject> subjects;
};

struct DatasetConfig {
    int n_subjects = 6;
    int per_subject = 4;
    int heldout = 2;
    int image_size = 32;
    uint64_t seed = 0;
};

namespace render {

inline const std::array<std::array<float, 3>, 8>& palette() {
    static const std::array<std::array<float, 3>, 8> p{{{0.85f, 0.20f, 0.20f},
                                                        {0.20f, 0.75f, 0.25f},
                                                        {0.20f, 0.35f, 0.85f},
                                                        {0.90f, 0.85f, 0.20f},
                                                        {0.80f, 0.25f, 0.80f},
                                                        {0.25f, 0.80f, 0.80f},
                                                        {0.90f, 0.55f, 0.15f},
                                                        {0.92f, 0.92f, 0.92f}}};
    return p;
}

inline bool inside_shape(int shape, double dx, double dy, double a) {
    switch (shape) {
        case 0: return dx * dx + dy * dy <= a * a;
        case 1: return std::max(std::abs(dx), std::abs(dy)) <= a * 0.9;
        case 2: {  // apex-up triangle
            const double v = (dy + a) / (2.0 * a);
            return v >= 0.0 && v <= 1.0 && std::abs(dx) <= v * a;
        }
        default: return std::abs(dx) + std::abs(dy) <= a;  // diamond
    }
}

inline float texture_factor(int texture, int r, int c) {
    switch (texture) {
        case 0: return 1.0f;
        case 1: return (r / 2) % 2 == 0 ? 1.0f : 0.55f;               // stripes
        case 2: return (r % 4 < 2 && c % 4 < 2) ? 0.55f : 1.0f;       // dots
        default: return ((r / 4 + c / 4) % 2 == 0) ? 1.0f : 0.6f;     // checker
    }
}

struct InstanceParams {
    double cx, cy, a;
    float brightness;
    float bg_base, bg_slope;
    bool pixel_noise;
};

inline TensorF draw_instance(int shape, int color, int texture, int size,
                             const InstanceParams& ip, Rng* noise_rng) {
    TensorF img({3, size, size});
    const auto& col = palette()[color];
    for (int r = 0; r < size; ++r) {
        const float bg =
            ip.bg_base + ip.bg_slope * (static_cast<float>(r) / size - 0.5f);
        for (int c = 0; c < size; ++c) {
            // 2x2 supersampled coverage for soft edges
            int hit = 0;
            for (int sr = 0; sr < 2; ++sr)
                for (int sc = 0; sc < 2; ++sc) {
                    const double py = r + 0.25 + 0.5 * sr - ip.cy;
                    const double px = c + 0.25 + 0.5 * sc - ip.cx;
                    if (inside_shape(shape, px, py, ip.a)) ++hit;
                }
            const float m = hit / 4.0f;
            const float tex = texture_factor(texture, r, c);
            for (int ch = 0; ch < 3; ++ch) {
                float fg = col[ch] * ip.brightness * tex;
                float v = bg * (1.0f - m) + fg * m;
                if (noise_rng)
                    v += static_cast<float>(noise_rng->uniform(-0.01, 0.01));
                img.v[(ch * size + r) * size + c] = std::min(1.0f, std::max(0.0f, v));
            }
        }
    }
    return img;
}

}  // namespace render

inline TensorF render_template(int shape, int color, int texture, int size) {
    render::InstanceParams ip;
    ip.cx = ip.cy = size / 2.0;
    ip.a = size * 0.32;
    ip.brightness = 1.0f;
    ip.bg_base = 0.21f;
    ip.bg_slope = 0.0f;
    ip.pixel_noise = false;
    return render::draw_instance(shape, color, texture, size, ip, nullptr);
}

inline TensorF render_instance(int shape, int color, int texture, int size, Rng& rng) {
    render::InstanceParams ip;
    ip.cx = size / 2.0 + rng.uniform(-size / 10.0, size / 10.0);
    ip.cy = size / 2.0 + rng.uniform(-size / 10.0, size / 10.0);
    ip.a = size * rng.uniform(0.26, 0.36);
    ip.brightness = static_cast<float>(rng.uniform(0.85, 1.0));
    ip.bg_base = static_cast<float>(rng.uniform(0.12, 0.30));
    ip.bg_slope = static_cast<float>(rng.uniform(-0.1, 0.1));
    ip.pixel_noise = true;
    return render::draw_instance(shape, color, texture, size, ip, &rng);
}

inline ToyDataset generate_dataset(const DatasetConfig& cfg) {
    if (cfg.n_subjects < 1 || cfg.n_subjects > 16)
        throw ConfigError("dataset: n_subjects must be in [1,16] (rare-token pool)");
    if (cfg.per_subject < 1 || cfg.heldout < 0) throw ConfigError("dataset: bad split sizes");

    ToyDataset ds;
    ds.image_size = cfg.image_size;
    ds.seed = cfg.seed;

    // distinct identity triples via a seeded shuffle of all combinations
    std::vector<std::array<int, 3>> combos;
    for (int s = 0; s < 4; ++s)
        for (int c = 0; c < 8; ++c)
            for (int t = 0; t < 4; ++t) combos.push_back({s, c, t});
    Rng shuffle_rng(derive_seed(cfg.seed, "identities"));
    for (std::size_t i = combos.size() - 1; i > 0; --i)
        std::swap(combos[i], combos[shuffle_rng.uniform_int(0, static_cast<int>(i))]);

    for (int k = 0; k < cfg.n_subjects; ++k) {
        Subject sub;
        sub.id = k;
        sub.shape = combos[k][0];
        sub.color = combos[k][1];
        sub.texture = combos[k][2];
        sub.subject_token = kSubjectTokBase + k;
        sub.caption = {kShapeTokBase + sub.shape, kColorTokBase + sub.color,
                       kTextureTokBase + sub.texture};
        sub.canonical = render_template(sub.shape, sub.color, sub.texture, cfg.image_size);
        for (int i = 0; i < cfg.per_subject + cfg.heldout; ++i) {
            Rng rng(derive_seed(cfg.seed, "instance", static_cast<uint64_t>(k),
                                static_cast<uint64_t>(i)));
            TensorF img = render_instance(sub.shape, sub.color, sub.texture, cfg.image_size, rng);
            if (i < cfg.per_subject)
                sub.train.push_back(std::move(img));
            else
                sub.heldout.push_back(std::move(img));
        }
        ds.subjects.push_back(std::move(sub));
    }
    return ds;
}

// Disk layout: <dir>/index.json plus per-subject PNG folders (src/dataset.cpp).
void save_dataset(const std::string& dir, const ToyDataset& ds);
ToyDataset load_dataset(const std::string& dir);

}  // namespace dg
