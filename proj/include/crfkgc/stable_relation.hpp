#pragma once

#include <vector>

#include "crfkgc/registry.hpp"
#include "crfkgc/tape.hpp"

namespace crfkgc {

// Stable relation representation: the K support pairs, each as [h_i; t_i],
// run through a BiLSTM; per-position forward/backward hidden states are
// concatenated and projected back to d, then pooled with scalar attention
// weights softmax_i( tanh(w_s . r_i + b_s) ).
struct SrConfig {
    std::size_t d = 100;      // embedding dim; sequence inputs are 2d
    std::size_t hidden = 0;   // LSTM hidden size H; 0 -> d
    std::size_t hidden_dim() const { return hidden ? hidden : d; }
};

template <typename T>
struct SrParams {
    SrConfig cfg;
    // Packed LSTM weights, gate order (i, f, g, o): W [4H x 2d], U [4H x H], b [4H].
    Param<T>* fw_W = nullptr;
    Param<T>* fw_U = nullptr;
    Param<T>* fw_b = nullptr;
    Param<T>* bw_W = nullptr;
    Param<T>* bw_U = nullptr;
    Param<T>* bw_b = nullptr;
    Param<T>* proj_W = nullptr; // [d x 2H]
    Param<T>* proj_b = nullptr; // [d]
    Param<T>* attn_w = nullptr; // [d]
    Param<T>* attn_b = nullptr; // [1]
};

template <typename T>
inline void register_sr(ParamRegistry<T>& reg, const SrConfig& cfg, RngStream& rng) {
    const std::size_t H = cfg.hidden_dim();
    for (const char* dir : {"fw", "bw"}) {
        const std::string base = std::string("sr.") + dir;
        reg.create(base + ".W", {4 * H, 2 * cfg.d}, Init::XavierUniform, rng);
        reg.create(base + ".U", {4 * H, H}, Init::XavierUniform, rng);
        reg.create(base + ".b", {4 * H}, Init::Zeros, rng);
    }
    reg.create("sr.proj.W", {cfg.d, 2 * H}, Init::XavierUniform, rng);
    reg.create("sr.proj.b", {cfg.d}, Init::Zeros, rng);
    reg.create("sr.attn.w", {cfg.d}, Init::XavierUniform, rng);
    reg.create("sr.attn.b", {1}, Init::Zeros, rng);
}

template <typename T>
inline SrParams<T> bind_sr(ParamRegistry<T>& reg, const SrConfig& cfg) {
    SrParams<T> p;
    p.cfg = cfg;
    p.fw_W = &reg.at("sr.fw.W");
    p.fw_U = &reg.at("sr.fw.U");
    p.fw_b = &reg.at("sr.fw.b");
    p.bw_W = &reg.at("sr.bw.W");
    p.bw_U = &reg.at("sr.bw.U");
    p.bw_b = &reg.at("sr.bw.b");
    p.proj_W = &reg.at("sr.proj.W");
    p.proj_b = &reg.at("sr.proj.b");
    p.attn_w = &reg.at("sr.attn.w");
    p.attn_b = &reg.at("sr.attn.b");
    return p;
}

namespace detail {

// One LSTM direction over the sequence; returns hidden state per position.
template <typename T>
inline std::vector<Var> lstm_pass(Tape<T>& tape, Var W, Var U, Var b,
                                  const std::vector<Var>& seq, std::size_t H, bool forward) {
    std::vector<Var> states(seq.size());
    Var h = tape.zeros({H});
    Var c = tape.zeros({H});
    for (std::size_t step = 0; step < seq.size(); ++step) {
        const std::size_t pos = forward ? step : seq.size() - 1 - step;
        Var gates = tape.add(tape.add(tape.matvec(W, seq[pos]), tape.matvec(U, h)), b);
        Var ig = tape.sigmoid(tape.slice(gates, 0, H));
        Var fg = tape.sigmoid(tape.slice(gates, H, H));
        Var gg = tape.tanh_(tape.slice(gates, 2 * H, H));
        Var og = tape.sigmoid(tape.slice(gates, 3 * H, H));
        c = tape.add(tape.mul(fg, c), tape.mul(ig, gg));
        h = tape.mul(og, tape.tanh_(c));
        states[pos] = h;
    }
    return states;
}

} // namespace detail

// r_s from encoded support pairs (h_i, t_i). Order-sensitive by construction;
// the episode sampler fixes support order, keeping results reproducible.
template <typename T>
inline Var stable_relation(Tape<T>& tape, const SrParams<T>& p,
                           const std::vector<std::pair<Var, Var>>& support) {
    if (support.empty()) throw ShapeError("stable_relation: empty support");
    const std::size_t H = p.cfg.hidden_dim();

    std::vector<Var> seq;
    seq.reserve(support.size());
    for (auto& [h, t] : support) seq.push_back(tape.concat(h, t));

    auto fw = detail::lstm_pass(tape, tape.param(*p.fw_W), tape.param(*p.fw_U),
                                tape.param(*p.fw_b), seq, H, true);
    auto bw = detail::lstm_pass(tape, tape.param(*p.bw_W), tape.param(*p.bw_U),
                                tape.param(*p.bw_b), seq, H, false);

    std::vector<Var> rs;
    std::vector<Var> logits;
    Var w_s = tape.param(*p.attn_w);
    Var b_s = tape.param(*p.attn_b);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        Var r_i = tape.add(tape.matvec(tape.param(*p.proj_W), tape.concat(fw[i], bw[i])),
                           tape.param(*p.proj_b));
        rs.push_back(r_i);
        Var logit = tape.tanh_(tape.add(tape.dot(w_s, r_i), tape.sum(b_s)));
        logits.push_back(logit);
    }
    Var weights = tape.softmax(tape.stack_scalars(logits));
    return tape.weighted_sum_rows(tape.stack_rows(rs), weights);
}

} // namespace crfkgc
