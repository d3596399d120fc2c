#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dg {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64_bytes(const void* data, std::size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// Deterministic seed derivation. Every stochastic site in the pipeline gets its
// seed as derive_seed(parent, tag, indices...), which makes runs reproducible
// and lets stages be re-composed externally with identical randomness.
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
    return splitmix64(base ^ fnv1a64(tag));
}
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a) {
    return splitmix64(derive_seed(base, tag) ^ splitmix64(a + 0x51ed2701u));
}
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a, uint64_t b) {
    return splitmix64(derive_seed(base, tag, a) ^ splitmix64(b + 0x2545f491u));
}

// mt19937_64 with explicit uniform/normal mappings so draws do not depend on
// the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    double uniform() {  // [0,1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    double normal() {  // Box-Muller with cached second value
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dg
