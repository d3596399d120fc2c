#pragma once

#include <cmath>
#include <vector>

#include "dg/common.hpp"

namespace dg {

// Linear beta schedule with exact running-product alpha_bar tables.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // beta_t, index t-1
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{s<=t} alpha_s

    double beta(int t) const { return betas[check_t(t)]; }
    double alpha(int t) const { return alphas[check_t(t)]; }
    double alpha_bar(int t) const { return alpha_bars[check_t(t)]; }

    int check_t(int t) const {
        if (t < 1 || t > T)
            throw ShapeError("timestep " + std::to_string(t) + " outside [1," + std::to_string(T) +
                             "]");
        return t - 1;
    }
};

inline NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.betas[i] = T == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                               static_cast<double>(T - 1);
        s.alphas[i] = 1.0 - s.betas[i];
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    return s;
}

// z_t = sqrt(alpha_bar_t) z + sqrt(1 - alpha_bar_t) eps
template <class S>
Tensor<S> add_noise(const Tensor<S>& z, int t, const Tensor<S>& eps, const NoiseSchedule& sched) {
    if (z.shape != eps.shape)
        throw ShapeError("add_noise: z " + shape_str(z.shape) + " vs eps " + shape_str(eps.shape));
    const double ab = sched.alpha_bar(t);
    const S a = static_cast<S>(std::sqrt(ab));
    const S b = static_cast<S>(std::sqrt(1.0 - ab));
    Tensor<S> out(z.shape);
    for (std::size_t i = 0; i < z.size(); ++i) out.v[i] = a * z.v[i] + b * eps.v[i];
    return out;
}

}  // namespace dg
