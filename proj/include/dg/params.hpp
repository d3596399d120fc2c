#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dg/common.hpp"
#include "dg/rng.hpp"

namespace dg {

// Named parameter arrays partitioned into groups {encoder, decoder, unet,
// embedder}. Entry order is registration order and is part of the determinism
// contract (checkpoints, checksums and optimizers all iterate in it).
template <class S>
struct ParamStore {
    struct Entry {
        std::string name;
        std::string group;
        Tensor<S> t;
    };

    std::vector<Entry> entries;
    std::unordered_map<std::string, int> index;

    int add(const std::string& name, const std::string& group, Tensor<S> t) {
        if (index.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index[name] = static_cast<int>(entries.size());
        entries.push_back(Entry{name, group, std::move(t)});
        return static_cast<int>(entries.size()) - 1;
    }

    bool has(const std::string& name) const { return index.count(name) != 0; }

    const Tensor<S>& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return entries[it->second].t;
    }

    Tensor<S>& at_mut(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return entries[it->second].t;
    }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.t.size();
        return n;
    }

    std::map<std::string, uint64_t> group_checksums() const {
        std::map<std::string, uint64_t> out;
        for (const auto& e : entries) {
            uint64_t h = out.count(e.group) ? out[e.group] : 0xcbf29ce484222325ull;
            h = fnv1a64_bytes(e.t.v.data(), e.t.v.size() * sizeof(S), h);
            out[e.group] = h;
        }
        return out;
    }

    uint64_t group_checksum(const std::string& group) const {
        auto cs = group_checksums();
        auto it = cs.find(group);
        return it == cs.end() ? 0 : it->second;
    }
};

// Sparse gradients: (entry index, grad tensor), ordered by entry index.
template <class S>
using GradList = std::vector<std::pair<int, Tensor<S>>>;

template <class S>
struct SgdOptimizer {
    S lr;

    explicit SgdOptimizer(S lr_) : lr(lr_) {}

    void step(ParamStore<S>& store, const GradList<S>& grads) {
        for (const auto& [idx, g] : grads) {
            auto& p = store.entries[idx].t;
            for (std::size_t i = 0; i < p.size(); ++i) p.v[i] -= lr * g.v[i];
        }
    }
};

template <class S>
struct AdamOptimizer {
    S lr;
    S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
    int t = 0;
    std::unordered_map<int, std::pair<std::vector<S>, std::vector<S>>> moments;

    explicit AdamOptimizer(S lr_) : lr(lr_) {}

    void step(ParamStore<S>& store, const GradList<S>& grads) {
        ++t;
        const S b1t = S(1) - std::pow(beta1, S(t));
        const S b2t = S(1) - std::pow(beta2, S(t));
        for (const auto& [idx, g] : grads) {
            auto& p = store.entries[idx].t;
            auto& [m, v] = moments[idx];
            if (m.empty()) {
                m.assign(p.size(), S(0));
                v.assign(p.size(), S(0));
            }
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = beta1 * m[i] + (S(1) - beta1) * g.v[i];
                v[i] = beta2 * v[i] + (S(1) - beta2) * g.v[i] * g.v[i];
                p.v[i] -= lr * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + eps);
            }
        }
    }
};

}  // namespace dg
