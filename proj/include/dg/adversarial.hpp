#pragma once

#include "dg/losses.hpp"

namespace dg {

struct PerturbationBudget {
    double eta = 0.05;   // L-inf radius in pixel units
    double alpha = 0.005;  // signed step size
    int steps = 50;

    void validate() const {
        if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("budget: eta must be in [0,1]");
        if (!(alpha > 0.0)) throw ConfigError("budget: alpha must be > 0");
        if (steps < 0) throw ConfigError("budget: steps must be >= 0");
    }
};

template <class S>
struct PgdState {
    Tensor<S> x_ref;  // projection anchor: the clean original
    Tensor<S> x_p;    // current iterate
    int p = 0;
    std::vector<double> cost_history;
};

// Projection onto {|x - ref| <= eta} ∩ [0,1], exact under double-precision
// verification: after rounding to S the result is nudged until both
// constraints hold in double arithmetic.
template <class S>
S project_pixel(S cand, S ref, double eta) {
    double c = static_cast<double>(cand);
    const double r = static_cast<double>(ref);
    c = std::min(std::max(c, r - eta), r + eta);
    c = std::min(std::max(c, 0.0), 1.0);
    S f = static_cast<S>(c);
    while (static_cast<double>(f) - r > eta || f > S(1))
        f = std::nextafter(f, S(-1));
    while (r - static_cast<double>(f) > eta || f < S(0))
        f = std::nextafter(f, S(2));
    return f;
}

template <class S>
inline S sign_of(S x) {
    return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0));
}

// x_{p+1} = clamp(clip(x_p - alpha * sign(g), ref +- eta), 0, 1)
template <class S>
PgdState<S> pgd_step(PgdState<S> state, const Tensor<S>& grad, const PerturbationBudget& budget) {
    budget.validate();
    if (grad.shape != state.x_p.shape)
        throw ShapeError("pgd_step: gradient " + shape_str(grad.shape) + " vs iterate " +
                         shape_str(state.x_p.shape));
    const S alpha = static_cast<S>(std::abs(budget.alpha));
    for (std::size_t i = 0; i < state.x_p.size(); ++i) {
        S cand = state.x_p.v[i] - alpha * sign_of(grad.v[i]);
        state.x_p.v[i] = project_pixel(cand, state.x_ref.v[i], budget.eta);
    }
    state.p += 1;
    return state;
}

struct PgdTraceRow {
    int epoch = 0, iter = 0;
    double cost = 0, url = 0, sdl = 0, grad_inf = 0;
};

template <class S>
struct AttackOptions {
    CostWeights<S> weights;
    int draws_per_iter = 4;
    uint64_t seed = 0;
    int epoch = 0;  // trace annotation only
    std::vector<PgdTraceRow>* trace = nullptr;
};

template <class S>
std::string iterate_dump(const PgdState<S>& st) {
    double lo = 1e300, hi = -1e300;
    for (S v : st.x_p.v) {
        lo = std::min(lo, static_cast<double>(v));
        hi = std::max(hi, static_cast<double>(v));
    }
    std::string msg = "p=" + std::to_string(st.p) + " iterate range [" + std::to_string(lo) +
                      "," + std::to_string(hi) + "] cost history:";
    const std::size_t n = st.cost_history.size();
    for (std::size_t i = n > 5 ? n - 5 : 0; i < n; ++i)
        msg += " " + std::to_string(st.cost_history[i]);
    return msg;
}

// Stage 2: budgeted signed-gradient descent on C = URL + SDL with fresh
// (t, eps) draws per iteration.
template <class S>
Tensor<S> attack(const ToyLdm<S>& model, const Tensor<S>& x_start, const Tensor<S>& x_ref,
                 const Tensor<S>& f, const AttnTargets<S>& targets,
                 const PerturbationBudget& budget, const AttackOptions<S>& opt) {
    budget.validate();
    if (x_start.shape != x_ref.shape) throw ShapeError("attack: x_start vs x_ref shape");
    for (std::size_t i = 0; i < x_start.size(); ++i)
        if (std::abs(static_cast<double>(x_start.v[i]) - static_cast<double>(x_ref.v[i])) >
            budget.eta)
            throw ConfigError("attack: warm start violates the perturbation budget");

    PgdState<S> st;
    st.x_ref = x_ref;
    st.x_p = x_start;
    for (int p = 0; p < budget.steps; ++p) {
        Rng rng(derive_seed(opt.seed, "pgd-iter", static_cast<uint64_t>(p)));
        auto draws = sample_draws(model, opt.draws_per_iter, rng);
        CostEval<S> ev;
        try {
            ev = cost_eval(model, st.x_p, f, targets, opt.weights, draws, true);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + "; " + iterate_dump(st));
        }
        if (!all_finite(ev.grad_x.v))
            throw NumericError("attack: non-finite gradient; " + iterate_dump(st));
        st.cost_history.push_back(static_cast<double>(ev.cost));
        if (opt.trace) {
            double ginf = 0;
            for (S g : ev.grad_x.v) ginf = std::max(ginf, std::abs(static_cast<double>(g)));
            opt.trace->push_back(PgdTraceRow{opt.epoch, p, static_cast<double>(ev.cost),
                                             static_cast<double>(ev.url),
                                             static_cast<double>(ev.sdl), ginf});
        }
        st = pgd_step(std::move(st), ev.grad_x, budget);
    }
    return st.x_p;
}

}  // namespace dg
