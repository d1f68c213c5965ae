#pragma once

#include <vector>

#include "crfkgc/registry.hpp"
#include "crfkgc/tape.hpp"

namespace crfkgc {

// Manifold decoder: the conjugate relation r_conj = r_s + FC(z) translates the
// head; a triple is plausible when its squared translation distance sits on
// the sphere of dynamic radius D_z = MLP(c):
//   raw_score = -| ||h + r_conj - t||^2 - D_z^2 |
// Higher raw_score means more plausible (0 is the attainable maximum).
struct DecoderConfig {
    std::size_t d = 100;
    std::size_t cond = 64;       // d_c, input to the threshold MLP
    std::size_t thresh_hidden = 0; // 0 -> cond
    double margin = 1.0;
    std::size_t thresh_hidden_dim() const { return thresh_hidden ? thresh_hidden : cond; }
};

template <typename T>
struct DecoderParams {
    DecoderConfig cfg;
    Param<T>* fc_W = nullptr;      // [d x d]
    Param<T>* fc_b = nullptr;      // [d]
    Param<T>* thresh_W1 = nullptr; // [m x d_c]
    Param<T>* thresh_b1 = nullptr; // [m]
    Param<T>* thresh_W2 = nullptr; // [1 x m]
    Param<T>* thresh_b2 = nullptr; // [1]
};

template <typename T>
inline void register_decoder(ParamRegistry<T>& reg, const DecoderConfig& cfg, RngStream& rng) {
    const std::size_t m = cfg.thresh_hidden_dim();
    reg.create("dec.fc.W", {cfg.d, cfg.d}, Init::XavierUniform, rng);
    reg.create("dec.fc.b", {cfg.d}, Init::Zeros, rng);
    reg.create("dec.thresh.W1", {m, cfg.cond}, Init::XavierUniform, rng);
    reg.create("dec.thresh.b1", {m}, Init::Zeros, rng);
    reg.create("dec.thresh.W2", {1, m}, Init::XavierUniform, rng);
    reg.create("dec.thresh.b2", {1}, Init::Zeros, rng);
}

template <typename T>
inline DecoderParams<T> bind_decoder(ParamRegistry<T>& reg, const DecoderConfig& cfg) {
    DecoderParams<T> p;
    p.cfg = cfg;
    p.fc_W = &reg.at("dec.fc.W");
    p.fc_b = &reg.at("dec.fc.b");
    p.thresh_W1 = &reg.at("dec.thresh.W1");
    p.thresh_b1 = &reg.at("dec.thresh.b1");
    p.thresh_W2 = &reg.at("dec.thresh.W2");
    p.thresh_b2 = &reg.at("dec.thresh.b2");
    return p;
}

template <typename T>
inline Var conjugate_relation(Tape<T>& tape, const DecoderParams<T>& p, Var r_s, Var z) {
    return tape.add(r_s, tape.add(tape.matvec(tape.param(*p.fc_W), z), tape.param(*p.fc_b)));
}

// Dynamic boundary radius D_z (scalar node) from the condition.
template <typename T>
inline Var dynamic_threshold(Tape<T>& tape, const DecoderParams<T>& p, Var c) {
    Var h = tape.tanh_(tape.add(tape.matvec(tape.param(*p.thresh_W1), c),
                                tape.param(*p.thresh_b1)));
    Var out = tape.add(tape.matvec(tape.param(*p.thresh_W2), h), tape.param(*p.thresh_b2));
    return tape.sum(out); // [1] -> scalar
}

// raw_score for one candidate triple; `d_z` is the precomputed threshold node
// so candidate loops don't rebuild the MLP.
template <typename T>
inline Var score_triple(Tape<T>& tape, Var h, Var r_conj, Var t, Var d_z,
                        bool manifold = true) {
    Var trans = tape.sub(tape.add(h, r_conj), t);
    if (!manifold) return tape.neg(tape.l2_norm(trans)); // TransE fallback (w/o MaConE)
    Var deviation = tape.sub(tape.sq_norm(trans), tape.mul(d_z, d_z));
    return tape.neg(tape.abs_(deviation));
}

// Ranking hinge: sum over matched (positive, negatives) of
// max(margin + score(neg) - score(pos), 0).
template <typename T>
inline Var margin_loss(Tape<T>& tape, const std::vector<Var>& pos,
                       const std::vector<std::vector<Var>>& neg, T margin) {
    if (pos.empty() || pos.size() != neg.size())
        throw ShapeError("margin_loss: " + std::to_string(pos.size()) + " positives vs " +
                         std::to_string(neg.size()) + " negative lists");
    Var total = tape.scalar(T(0));
    bool any = false;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        for (Var n : neg[i]) {
            Var slack = tape.affine_const(tape.sub(n, pos[i]), T(1), margin);
            total = tape.add(total, tape.relu(slack));
            any = true;
        }
    }
    if (!any) throw ShapeError("margin_loss: no (positive, negative) pairs");
    return total;
}

template <typename T>
inline Var total_loss(Tape<T>& tape, Var l_tri, Var l_rel) {
    return tape.add(l_tri, l_rel);
}

} // namespace crfkgc
