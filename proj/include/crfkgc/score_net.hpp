#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "crfkgc/registry.hpp"
#include "crfkgc/tape.hpp"

namespace crfkgc {

// Epsilon-prediction network for 1-D relation vectors: sinusoidal time
// features through a linear+tanh embedding, an input projection of
// [x_row; time-emb], then residual tanh blocks with the condition embedding
// added to each block's pre-activation, and a linear output head back to d.
struct ScoreNetConfig {
    std::size_t d = 100;     // sample dimension (matches embedding dim)
    std::size_t cond = 64;   // condition dimension d_c
    std::size_t hidden = 0;  // 0 -> 4 * d
    std::size_t blocks = 4;
    std::size_t time_freqs = 8; // sinusoidal pairs -> 2 * time_freqs raw features
    std::size_t time_dim = 16;

    std::size_t hidden_dim() const { return hidden ? hidden : 4 * d; }
};

template <typename T>
struct ScoreNet {
    ScoreNetConfig cfg;
    Param<T>* time_W = nullptr;
    Param<T>* time_b = nullptr;
    Param<T>* cond_W = nullptr;
    Param<T>* cond_b = nullptr;
    Param<T>* in_W = nullptr;
    Param<T>* in_b = nullptr;
    std::vector<Param<T>*> blk_W1, blk_b1, blk_W2, blk_b2;
    Param<T>* out_W = nullptr;
    Param<T>* out_b = nullptr;
};

template <typename T>
inline void register_score_net(ParamRegistry<T>& reg, const ScoreNetConfig& cfg,
                               RngStream& rng) {
    const std::size_t h = cfg.hidden_dim();
    reg.create("icdr.time.W", {cfg.time_dim, 2 * cfg.time_freqs}, Init::XavierUniform, rng);
    reg.create("icdr.time.b", {cfg.time_dim}, Init::Zeros, rng);
    reg.create("icdr.cond.W", {h, cfg.cond}, Init::XavierUniform, rng);
    reg.create("icdr.cond.b", {h}, Init::Zeros, rng);
    reg.create("icdr.in.W", {h, cfg.d + cfg.time_dim}, Init::XavierUniform, rng);
    reg.create("icdr.in.b", {h}, Init::Zeros, rng);
    for (std::size_t k = 0; k < cfg.blocks; ++k) {
        const std::string base = "icdr.blk" + std::to_string(k);
        reg.create(base + ".W1", {h, h}, Init::XavierUniform, rng);
        reg.create(base + ".b1", {h}, Init::Zeros, rng);
        reg.create(base + ".W2", {h, h}, Init::XavierUniform, rng);
        reg.create(base + ".b2", {h}, Init::Zeros, rng);
    }
    reg.create("icdr.out.W", {cfg.d, h}, Init::XavierUniform, rng);
    reg.create("icdr.out.b", {cfg.d}, Init::Zeros, rng);
}

template <typename T>
inline ScoreNet<T> bind_score_net(ParamRegistry<T>& reg, const ScoreNetConfig& cfg) {
    ScoreNet<T> net;
    net.cfg = cfg;
    net.time_W = &reg.at("icdr.time.W");
    net.time_b = &reg.at("icdr.time.b");
    net.cond_W = &reg.at("icdr.cond.W");
    net.cond_b = &reg.at("icdr.cond.b");
    net.in_W = &reg.at("icdr.in.W");
    net.in_b = &reg.at("icdr.in.b");
    for (std::size_t k = 0; k < cfg.blocks; ++k) {
        const std::string base = "icdr.blk" + std::to_string(k);
        net.blk_W1.push_back(&reg.at(base + ".W1"));
        net.blk_b1.push_back(&reg.at(base + ".b1"));
        net.blk_W2.push_back(&reg.at(base + ".W2"));
        net.blk_b2.push_back(&reg.at(base + ".b2"));
    }
    net.out_W = &reg.at("icdr.out.W");
    net.out_b = &reg.at("icdr.out.b");
    return net;
}

// Raw sinusoidal features [sin(t w_0), cos(t w_0), ...] with w_k = 2^k * pi.
template <typename T>
inline Tensor<T> sinusoidal_features(double t, std::size_t freqs) {
    Tensor<T> f({2 * freqs});
    double w = 3.14159265358979323846;
    for (std::size_t k = 0; k < freqs; ++k) {
        f.data[2 * k] = static_cast<T>(std::sin(t * w));
        f.data[2 * k + 1] = static_cast<T>(std::cos(t * w));
        w *= 2.0;
    }
    return f;
}

// eps_hat(x_t, t, c) for x_t [K x d] with shared t and condition; output [K x d].
template <typename T>
inline Var score_net_eps(Tape<T>& tape, const ScoreNet<T>& net, Var x_t, double t, Var c) {
    const auto& xt = tape.value(x_t);
    if (xt.rank() != 2 || xt.shape[1] != net.cfg.d)
        throw ShapeError("score_net: expected [K x " + std::to_string(net.cfg.d) + "], got " +
                         xt.shape_str());
    const std::size_t K = xt.shape[0];

    Var t_emb = tape.tanh_(
        tape.add(tape.matvec(tape.param(*net.time_W),
                             tape.leaf(sinusoidal_features<T>(t, net.cfg.time_freqs))),
                 tape.param(*net.time_b)));
    Var c_emb = tape.add(tape.matvec(tape.param(*net.cond_W), c), tape.param(*net.cond_b));

    std::vector<Var> t_rows(K, t_emb);
    Var in = tape.concat_cols(x_t, tape.stack_rows(t_rows));
    Var h = tape.tanh_(tape.add_rowvec(tape.matmul_nt(in, tape.param(*net.in_W)),
                                       tape.param(*net.in_b)));
    for (std::size_t k = 0; k < net.cfg.blocks; ++k) {
        Var pre = tape.add_rowvec(tape.matmul_nt(h, tape.param(*net.blk_W1[k])),
                                  tape.param(*net.blk_b1[k]));
        pre = tape.add_rowvec(pre, c_emb);
        Var inner = tape.tanh_(pre);
        Var upd = tape.add_rowvec(tape.matmul_nt(inner, tape.param(*net.blk_W2[k])),
                                  tape.param(*net.blk_b2[k]));
        h = tape.add(h, upd);
    }
    return tape.add_rowvec(tape.matmul_nt(h, tape.param(*net.out_W)),
                           tape.param(*net.out_b));
}

} // namespace crfkgc
