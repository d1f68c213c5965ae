#pragma once

#include <vector>

#include "crfkgc/kg.hpp"
#include "crfkgc/registry.hpp"
#include "crfkgc/tape.hpp"

namespace crfkgc {

// Gated attention neighborhood encoder:
//   m_i = W_r [e_i; r_i] + b_r
//   alpha = softmax_i( LeakyReLU( W^T [h; m_i] ) )
//   h_agg = sum_i alpha_i m_i
//   g = sigmoid(W_g h_agg + b_g),  h' = g . h_agg + (1 - g) . h
template <typename T>
struct EncoderParams {
    Param<T>* W_r = nullptr; // [d x 2d]
    Param<T>* b_r = nullptr; // [d]
    Param<T>* W = nullptr;   // [2d] attention vector over [h; m_i]
    Param<T>* W_g = nullptr; // [d x d]
    Param<T>* b_g = nullptr; // [d]
    T leaky_slope = T(0.2);
};

template <typename T>
inline void register_encoder(ParamRegistry<T>& reg, std::size_t d, RngStream& rng) {
    reg.create("encoder.W_r", {d, 2 * d}, Init::XavierUniform, rng);
    reg.create("encoder.b_r", {d}, Init::Zeros, rng);
    reg.create("encoder.W", {2 * d}, Init::XavierUniform, rng);
    reg.create("encoder.W_g", {d, d}, Init::XavierUniform, rng);
    reg.create("encoder.b_g", {d}, Init::Zeros, rng);
}

template <typename T>
inline EncoderParams<T> bind_encoder(ParamRegistry<T>& reg, T leaky_slope = T(0.2)) {
    EncoderParams<T> p;
    p.W_r = &reg.at("encoder.W_r");
    p.b_r = &reg.at("encoder.b_r");
    p.W = &reg.at("encoder.W");
    p.W_g = &reg.at("encoder.W_g");
    p.b_g = &reg.at("encoder.b_g");
    p.leaky_slope = leaky_slope;
    return p;
}

template <typename T>
inline Var neighbor_message(Tape<T>& tape, const EncoderParams<T>& p, Var e_i, Var r_i) {
    return tape.add(tape.matvec(tape.param(*p.W_r), tape.concat(e_i, r_i)),
                    tape.param(*p.b_r));
}

template <typename T>
struct AttendResult {
    Var alphas; // simplex over messages; invalid when messages empty
    Var h_agg;  // [d]; zero vector when messages empty
};

template <typename T>
inline AttendResult<T> attend_aggregate(Tape<T>& tape, const EncoderParams<T>& p, Var h,
                                        const std::vector<Var>& messages) {
    AttendResult<T> out;
    if (messages.empty()) {
        out.h_agg = tape.zeros({tape.value(h).numel()});
        return out;
    }
    Var w = tape.param(*p.W);
    std::vector<Var> logits;
    logits.reserve(messages.size());
    for (Var m : messages)
        logits.push_back(tape.leaky_relu(tape.dot(w, tape.concat(h, m)), p.leaky_slope));
    out.alphas = tape.softmax(tape.stack_scalars(logits));
    out.h_agg = tape.weighted_sum_rows(tape.stack_rows(messages), out.alphas);
    return out;
}

template <typename T>
inline Var gated_fuse(Tape<T>& tape, const EncoderParams<T>& p, Var h, Var h_agg,
                      bool bypass_gate = false) {
    if (bypass_gate) return h_agg;
    Var g = tape.sigmoid(
        tape.add(tape.matvec(tape.param(*p.W_g), h_agg), tape.param(*p.b_g)));
    Var keep = tape.affine_const(g, T(-1), T(1)); // 1 - g
    return tape.add(tape.mul(g, h_agg), tape.mul(keep, h));
}

struct EncodeOptions {
    std::size_t max_neighbors = 50;
    std::size_t layers = 1;
    int exclude_relation = -1; // leakage guard: drop neighbors with this relation
    bool bypass_gate = false;  // ablation: h' = h_agg
};

// Full message/attention/gate composition for one entity. Neighbor embeddings stay raw; the
// target-side representation h evolves across stacked layers.
template <typename T>
inline Var encode_entity(Tape<T>& tape, const EncoderParams<T>& p, const KnowledgeGraph& g,
                         Param<T>& entity_emb, Param<T>& relation_emb, int entity,
                         const EncodeOptions& opts = {}) {
    Var h = tape.param_row(entity_emb, static_cast<std::size_t>(entity));
    std::vector<std::pair<int, int>> nbrs;
    for (auto& [r, t] : neighbors(g, entity, opts.max_neighbors))
        if (r != opts.exclude_relation) nbrs.emplace_back(r, t);

    std::vector<Var> messages;
    messages.reserve(nbrs.size());
    for (auto& [r, t] : nbrs) {
        Var e_i = tape.param_row(entity_emb, static_cast<std::size_t>(t));
        Var r_i = tape.param_row(relation_emb, static_cast<std::size_t>(r));
        messages.push_back(neighbor_message(tape, p, e_i, r_i));
    }

    for (std::size_t layer = 0; layer < std::max<std::size_t>(1, opts.layers); ++layer) {
        auto att = attend_aggregate(tape, p, h, messages);
        h = gated_fuse(tape, p, h, att.h_agg, opts.bypass_gate);
    }
    return h;
}

} // namespace crfkgc
