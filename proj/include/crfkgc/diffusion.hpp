#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crfkgc/registry.hpp"
#include "crfkgc/schedule.hpp"
#include "crfkgc/tape.hpp"

namespace crfkgc {

// Weak relation features: row i = t_i - h_i for each encoded support pair.
template <typename T>
inline Var weak_features(Tape<T>& tape, const std::vector<std::pair<Var, Var>>& pairs) {
    if (pairs.empty()) throw ShapeError("weak_features: empty support");
    std::vector<Var> rows;
    rows.reserve(pairs.size());
    for (auto& [h, t] : pairs) rows.push_back(tape.sub(t, h));
    return tape.stack_rows(rows);
}

template <typename T>
struct ForwardDiffused {
    Var x_t; // alpha_bar(t) x0 + sqrt(1 - alpha_bar(t)^2) eps
    Var eps; // the exact noise used, for the denoising loss
};

// Closed-form VP marginal at time t; all rows share t.
template <typename T>
inline ForwardDiffused<T> forward_diffuse(Tape<T>& tape, Var x0, double t,
                                          const DiffusionSchedule& sched, RngStream& rng) {
    if (!(t > 0.0 && t <= 1.0))
        throw Error("forward_diffuse: t = " + std::to_string(t) + " outside (0, 1]");
    const std::vector<std::size_t> shape = tape.value(x0).shape;
    ForwardDiffused<T> out;
    out.eps = tape.sample_gaussian(shape, rng);
    const T a = static_cast<T>(sched.alpha_bar(t));
    const T s = static_cast<T>(sched.marginal_std(t));
    out.x_t = tape.add(tape.scale(x0, a), tape.scale(out.eps, s));
    return out;
}

// eps-prediction callback: (tape, x_t, t) -> eps_hat of x_t's shape. The
// condition is bound by the caller.
template <typename T>
using EpsFn = std::function<Var(Tape<T>&, Var, double)>;

// Runs the reverse pass from x_T (t = 1) down the schedule's t-grid to t_min.
// The chain stays on the tape, so training losses backpropagate through every
// step. Kinds:
//   sde  — Euler-Maruyama on dx = [-1/2 beta x - beta * score] dt + sqrt(beta) dw
//          integrated backward, noise injected each step;
//   ddpm — ancestral sampling with posterior variance, no noise on the last step;
//   ddim — deterministic update (no injected noise at all).
template <typename T>
inline Var reverse_sample(Tape<T>& tape, const EpsFn<T>& eps_fn, Var x_T,
                          const DiffusionSchedule& sched, RngStream& rng) {
    const auto ts = sched.t_grid();
    Var x = x_T;
    // copied: pushing nodes reallocates the tape, invalidating references into it
    const std::vector<std::size_t> shape = tape.value(x_T).shape;

    for (std::size_t i = sched.steps; i >= 1; --i) {
        const double t_hi = ts[i], t_lo = ts[i - 1];
        Var eps_hat = eps_fn(tape, x, t_hi);

        if (sched.kind == DiffusionKind::Sde) {
            const double dt = t_hi - t_lo;
            const double beta = sched.beta(t_hi);
            const double sig = sched.marginal_std(t_hi);
            // score = -eps_hat / sigma(t); x' = x + dt*(beta/2 x + beta*score) + sqrt(beta dt) xi
            Var drift = tape.add(tape.scale(x, static_cast<T>(0.5 * beta)),
                                 tape.scale(eps_hat, static_cast<T>(-beta / sig)));
            x = tape.add(x, tape.scale(drift, static_cast<T>(dt)));
            Var xi = tape.sample_gaussian(shape, rng);
            x = tape.add(x, tape.scale(xi, static_cast<T>(std::sqrt(beta * dt))));
        } else {
            const double a_hi = sched.alpha_bar(t_hi) * sched.alpha_bar(t_hi);
            const double a_lo = sched.alpha_bar(t_lo) * sched.alpha_bar(t_lo);
            if (sched.kind == DiffusionKind::Ddpm) {
                const double astep = a_hi / a_lo; // per-step alpha
                const double bstep = 1.0 - astep;
                Var mean = tape.scale(
                    tape.add(x, tape.scale(eps_hat,
                                           static_cast<T>(-bstep / std::sqrt(1.0 - a_hi)))),
                    static_cast<T>(1.0 / std::sqrt(astep)));
                x = mean;
                if (i > 1) {
                    const double var = bstep * (1.0 - a_lo) / (1.0 - a_hi);
                    Var xi = tape.sample_gaussian(shape, rng);
                    x = tape.add(x, tape.scale(xi, static_cast<T>(std::sqrt(var))));
                }
            } else { // ddim
                Var x0_hat = tape.scale(
                    tape.add(x, tape.scale(eps_hat, static_cast<T>(-std::sqrt(1.0 - a_hi)))),
                    static_cast<T>(1.0 / std::sqrt(a_hi)));
                x = tape.add(tape.scale(x0_hat, static_cast<T>(std::sqrt(a_lo))),
                             tape.scale(eps_hat, static_cast<T>(std::sqrt(1.0 - a_lo))));
            }
        }

        if (!tape.value(x).all_finite())
            throw NumericError("reverse_sample: non-finite state after step " +
                               std::to_string(sched.steps - i + 1) + " of " +
                               std::to_string(sched.steps) + " (t=" + std::to_string(t_hi) +
                               ", kind=" + to_string(sched.kind) + ")");
    }
    return x;
}

// Learned-query attention pooling of the K denoised rows into one vector:
//   weights = softmax_i( q . key(x_i) ),  z = sum_i weights_i * value(x_i).
template <typename T>
struct AttnPool {
    Param<T>* q = nullptr;       // [d_a]
    Param<T>* key_W = nullptr;   // [d_a x d]
    Param<T>* key_b = nullptr;   // [d_a]
    Param<T>* value_W = nullptr; // [d x d]
    Param<T>* value_b = nullptr; // [d]
};

template <typename T>
inline void register_attn_pool(ParamRegistry<T>& reg, std::size_t d, std::size_t d_a,
                               RngStream& rng) {
    reg.create("icdr.pool.q", {d_a}, Init::XavierUniform, rng);
    reg.create("icdr.pool.key.W", {d_a, d}, Init::XavierUniform, rng);
    reg.create("icdr.pool.key.b", {d_a}, Init::Zeros, rng);
    reg.create("icdr.pool.value.W", {d, d}, Init::XavierUniform, rng);
    reg.create("icdr.pool.value.b", {d}, Init::Zeros, rng);
}

template <typename T>
inline AttnPool<T> bind_attn_pool(ParamRegistry<T>& reg) {
    AttnPool<T> p;
    p.q = &reg.at("icdr.pool.q");
    p.key_W = &reg.at("icdr.pool.key.W");
    p.key_b = &reg.at("icdr.pool.key.b");
    p.value_W = &reg.at("icdr.pool.value.W");
    p.value_b = &reg.at("icdr.pool.value.b");
    return p;
}

template <typename T>
inline Var attention_pool(Tape<T>& tape, const AttnPool<T>& p, Var rows) {
    const auto& r = tape.value(rows);
    if (r.rank() != 2 || r.shape[0] == 0)
        throw ShapeError("attention_pool: expected nonempty [K x d], got " + r.shape_str());
    Var keys = tape.add_rowvec(tape.matmul_nt(rows, tape.param(*p.key_W)),
                               tape.param(*p.key_b)); // [K x d_a]
    Var logits = tape.matvec(keys, tape.param(*p.q)); // [K]
    Var weights = tape.softmax(logits);
    Var values = tape.add_rowvec(tape.matmul_nt(rows, tape.param(*p.value_W)),
                                 tape.param(*p.value_b)); // [K x d]
    return tape.weighted_sum_rows(values, weights);
}

} // namespace crfkgc
