#pragma once

#include <vector>

#include "crfkgc/registry.hpp"
#include "crfkgc/tape.hpp"

namespace crfkgc {

// Neural-process conditioning over labeled weak relation features:
//   s_i = NPEncoder([x_i; y_i])          (two-layer tanh MLP)
//   r   = mean_i s_i
//   mu    = W_mu r + b_mu
//   sigma = 0.1 + 0.9 sigmoid(W_sig r + b_sig)   (every coordinate in (0.1, 1))
//   c   = mu + sigma . eps  (training)  |  c = mu  (deterministic eval)
struct NpConfig {
    std::size_t d = 100;      // weak-feature dimension
    std::size_t latent = 64;  // d_s
    std::size_t cond = 64;    // d_c
};

template <typename T>
struct NpParams {
    NpConfig cfg;
    Param<T>* enc_W1 = nullptr;
    Param<T>* enc_b1 = nullptr;
    Param<T>* enc_W2 = nullptr;
    Param<T>* enc_b2 = nullptr;
    Param<T>* mu_W = nullptr;
    Param<T>* mu_b = nullptr;
    Param<T>* sigma_W = nullptr;
    Param<T>* sigma_b = nullptr;
    Param<T>* ccat_W = nullptr; // w/o-condition variant: c = MLP(mean [x; y])
    Param<T>* ccat_b = nullptr;
};

template <typename T>
inline void register_np(ParamRegistry<T>& reg, const NpConfig& cfg, RngStream& rng) {
    reg.create("np.enc.W1", {cfg.latent, cfg.d + 1}, Init::XavierUniform, rng);
    reg.create("np.enc.b1", {cfg.latent}, Init::Zeros, rng);
    reg.create("np.enc.W2", {cfg.latent, cfg.latent}, Init::XavierUniform, rng);
    reg.create("np.enc.b2", {cfg.latent}, Init::Zeros, rng);
    reg.create("np.mu.W", {cfg.cond, cfg.latent}, Init::XavierUniform, rng);
    reg.create("np.mu.b", {cfg.cond}, Init::Zeros, rng);
    reg.create("np.sigma.W", {cfg.cond, cfg.latent}, Init::XavierUniform, rng);
    reg.create("np.sigma.b", {cfg.cond}, Init::Zeros, rng);
    reg.create("np.ccat.W", {cfg.cond, cfg.d + 1}, Init::XavierUniform, rng);
    reg.create("np.ccat.b", {cfg.cond}, Init::Zeros, rng);
}

template <typename T>
inline NpParams<T> bind_np(ParamRegistry<T>& reg, const NpConfig& cfg) {
    NpParams<T> p;
    p.cfg = cfg;
    p.enc_W1 = &reg.at("np.enc.W1");
    p.enc_b1 = &reg.at("np.enc.b1");
    p.enc_W2 = &reg.at("np.enc.W2");
    p.enc_b2 = &reg.at("np.enc.b2");
    p.mu_W = &reg.at("np.mu.W");
    p.mu_b = &reg.at("np.mu.b");
    p.sigma_W = &reg.at("np.sigma.W");
    p.sigma_b = &reg.at("np.sigma.b");
    p.ccat_W = &reg.at("np.ccat.W");
    p.ccat_b = &reg.at("np.ccat.b");
    return p;
}

template <typename T>
struct NPContext {
    Var r;     // aggregate latent [d_s]
    Var mu;    // [d_c]
    Var sigma; // [d_c], coordinates in (0.1, 1)
    Var c;     // condition [d_c]
};

// Appends the 0/1 label as an extra input column.
template <typename T>
inline Var np_label_rows(Tape<T>& tape, Var features, const std::vector<int>& labels) {
    const auto& f = tape.value(features);
    if (f.rank() != 2 || f.shape[0] != labels.size())
        throw ShapeError("np_condition: " + std::to_string(labels.size()) +
                         " labels for features " + f.shape_str());
    Tensor<T> col({labels.size(), 1});
    for (std::size_t i = 0; i < labels.size(); ++i)
        col(i, 0) = static_cast<T>(labels[i] ? 1 : 0);
    return tape.concat_cols(features, tape.leaf(std::move(col)));
}

// Builds the latent Gaussian and samples the condition. `eps` must be a
// [d_c] tape node (Gaussian draw for training, zeros for deterministic eval);
// passing the draw in keeps the reparameterization explicit and testable.
template <typename T>
inline NPContext<T> np_condition(Tape<T>& tape, const NpParams<T>& p, Var features,
                                 const std::vector<int>& labels, Var eps) {
    Var xy = np_label_rows(tape, features, labels);
    Var h = tape.tanh_(tape.add_rowvec(tape.matmul_nt(xy, tape.param(*p.enc_W1)),
                                       tape.param(*p.enc_b1)));
    Var s = tape.add_rowvec(tape.matmul_nt(h, tape.param(*p.enc_W2)), tape.param(*p.enc_b2));

    NPContext<T> ctx;
    ctx.r = tape.mean_rows(s);
    ctx.mu = tape.add(tape.matvec(tape.param(*p.mu_W), ctx.r), tape.param(*p.mu_b));
    Var sig_pre = tape.add(tape.matvec(tape.param(*p.sigma_W), ctx.r), tape.param(*p.sigma_b));
    ctx.sigma = tape.affine_const(tape.sigmoid(sig_pre), T(0.9), T(0.1));
    ctx.c = tape.add(ctx.mu, tape.mul(ctx.sigma, eps));
    return ctx;
}

// Ablation "w/o condition": a plain MLP of the mean labeled feature replaces
// the neural-process latent; no KL term applies.
template <typename T>
inline Var concat_condition(Tape<T>& tape, const NpParams<T>& p, Var features,
                            const std::vector<int>& labels) {
    Var xy = np_label_rows(tape, features, labels);
    return tape.add(tape.matvec(tape.param(*p.ccat_W), tape.mean_rows(xy)),
                    tape.param(*p.ccat_b));
}

// KL( N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2) ) for diagonal Gaussians:
//   sum_k [ log(sigma_p / sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2 ]
template <typename T>
inline Var kl_diag_gaussian(Tape<T>& tape, Var mu_q, Var sigma_q, Var mu_p, Var sigma_p) {
    Var log_ratio = tape.sub(tape.log_(sigma_p), tape.log_(sigma_q));
    Var var_q = tape.mul(sigma_q, sigma_q);
    Var diff = tape.sub(mu_q, mu_p);
    Var num = tape.add(var_q, tape.mul(diff, diff));
    Var den = tape.scale(tape.mul(sigma_p, sigma_p), T(2));
    Var per_dim = tape.affine_const(tape.add(log_ratio, tape.div(num, den)), T(1), T(-0.5));
    return tape.sum(per_dim);
}

} // namespace crfkgc
