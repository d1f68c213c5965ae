#pragma once

#include <map>
#include <string>
#include <vector>

#include "crfkgc/config.hpp"
#include "crfkgc/decoder.hpp"
#include "crfkgc/diffusion.hpp"
#include "crfkgc/encoder.hpp"
#include "crfkgc/episode.hpp"
#include "crfkgc/kg.hpp"
#include "crfkgc/neural_process.hpp"
#include "crfkgc/schedule.hpp"
#include "crfkgc/score_net.hpp"
#include "crfkgc/stable_relation.hpp"

namespace crfkgc {

// Ablation variants; Full runs every component.
enum class Variant { Full, Gate, Condition, Icdr, Sr, Macone };

inline Variant parse_variant(const std::string& name) {
    if (name == "gate") return Variant::Gate;
    if (name == "condition") return Variant::Condition;
    if (name == "icdr") return Variant::Icdr;
    if (name == "sr") return Variant::Sr;
    if (name == "macone") return Variant::Macone;
    throw Error("unknown ablation variant '" + name +
                "' (valid: gate, condition, icdr, sr, macone)");
}

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::Gate: return "gate";
        case Variant::Condition: return "condition";
        case Variant::Icdr: return "icdr";
        case Variant::Sr: return "sr";
        case Variant::Macone: return "macone";
    }
    return "?";
}

struct ModelConfig {
    std::size_t dim = 100;       // d
    std::size_t cond = 64;       // d_c
    std::size_t latent = 64;     // d_s
    std::size_t sr_hidden = 0;   // 0 -> dim
    std::size_t icdr_hidden = 0; // 0 -> 4 * dim
    std::size_t icdr_blocks = 4;
    std::size_t pool_dim = 0; // 0 -> dim
    std::size_t thresh_hidden = 0;
    std::size_t encoder_layers = 1;
    std::size_t max_neighbors = 50;
    double leaky_slope = 0.2;
    double margin = 1.0;
    DiffusionSchedule sched;

    bool no_gate = false;
    bool no_condition = false;
    bool no_icdr = false;
    bool no_sr = false;
    bool no_macone = false;

    std::size_t pool_dim_v() const { return pool_dim ? pool_dim : dim; }

    static ModelConfig from_config(const Config& c) {
        ModelConfig m;
        m.dim = static_cast<std::size_t>(c.get_int("model.dim"));
        m.cond = static_cast<std::size_t>(c.get_int("model.cond_dim"));
        m.latent = static_cast<std::size_t>(c.get_int("np.latent_dim"));
        m.sr_hidden = static_cast<std::size_t>(c.get_int("sr.hidden_dim"));
        m.icdr_hidden = static_cast<std::size_t>(c.get_int("icdr.hidden"));
        m.icdr_blocks = static_cast<std::size_t>(c.get_int("icdr.blocks"));
        m.pool_dim = static_cast<std::size_t>(c.get_int("icdr.pool_dim"));
        m.thresh_hidden = static_cast<std::size_t>(c.get_int("dec.thresh_hidden"));
        m.encoder_layers = static_cast<std::size_t>(c.get_int("encoder_layers"));
        m.max_neighbors = static_cast<std::size_t>(c.get_int("encoder.max_neighbors"));
        m.leaky_slope = c.get_double("encoder.leaky_slope");
        m.margin = c.get_double("dec.margin");
        m.sched.kind = parse_diffusion_kind(c.get_string("diffusion.kind"));
        m.sched.steps = static_cast<std::size_t>(c.get_int("diffusion.steps"));
        m.sched.beta_min = c.get_double("diffusion.beta_min");
        m.sched.beta_max = c.get_double("diffusion.beta_max");
        m.sched.validate();
        m.no_gate = c.get_bool("ablate.gate");
        m.no_condition = c.get_bool("ablate.condition");
        m.no_icdr = c.get_bool("ablate.icdr");
        m.no_sr = c.get_bool("ablate.sr");
        m.no_macone = c.get_bool("ablate.macone");
        return m;
    }

    void apply_variant(Variant v) {
        no_gate |= v == Variant::Gate;
        no_condition |= v == Variant::Condition;
        no_icdr |= v == Variant::Icdr;
        no_sr |= v == Variant::Sr;
        no_macone |= v == Variant::Macone;
    }
};

template <typename T>
struct Model {
    ModelConfig cfg;
    EncoderParams<T> enc;
    NpParams<T> np;
    ScoreNet<T> score;
    AttnPool<T> pool;
    SrParams<T> sr;
    DecoderParams<T> dec;
    Param<T>* ent = nullptr;
    Param<T>* rel = nullptr;
};

// The registry always carries the full parameter set; ablations leave their
// dead parameters registered but untouched (zero gradients, so Adam holds
// them fixed).
template <typename T>
inline void register_model(ParamRegistry<T>& reg, const ModelConfig& cfg,
                           std::size_t num_entities, std::size_t num_relations,
                           RngStream& rng) {
    reg.create("embed.entity", {num_entities, cfg.dim}, Init::Gaussian, rng, 0.1);
    reg.create("embed.relation", {num_relations, cfg.dim}, Init::Gaussian, rng, 0.1);
    register_encoder(reg, cfg.dim, rng);
    register_np(reg, NpConfig{cfg.dim, cfg.latent, cfg.cond}, rng);
    ScoreNetConfig sn;
    sn.d = cfg.dim;
    sn.cond = cfg.cond;
    sn.hidden = cfg.icdr_hidden;
    sn.blocks = cfg.icdr_blocks;
    register_score_net(reg, sn, rng);
    register_attn_pool(reg, cfg.dim, cfg.pool_dim_v(), rng);
    register_sr(reg, SrConfig{cfg.dim, cfg.sr_hidden}, rng);
    DecoderConfig dc;
    dc.d = cfg.dim;
    dc.cond = cfg.cond;
    dc.thresh_hidden = cfg.thresh_hidden;
    dc.margin = cfg.margin;
    register_decoder(reg, dc, rng);
}

template <typename T>
inline Model<T> bind_model(ParamRegistry<T>& reg, const ModelConfig& cfg) {
    Model<T> m;
    m.cfg = cfg;
    m.enc = bind_encoder(reg, static_cast<T>(cfg.leaky_slope));
    m.np = bind_np(reg, NpConfig{cfg.dim, cfg.latent, cfg.cond});
    ScoreNetConfig sn;
    sn.d = cfg.dim;
    sn.cond = cfg.cond;
    sn.hidden = cfg.icdr_hidden;
    sn.blocks = cfg.icdr_blocks;
    m.score = bind_score_net(reg, sn);
    m.pool = bind_attn_pool(reg);
    m.sr = bind_sr(reg, SrConfig{cfg.dim, cfg.sr_hidden});
    DecoderConfig dc;
    dc.d = cfg.dim;
    dc.cond = cfg.cond;
    dc.thresh_hidden = cfg.thresh_hidden;
    dc.margin = cfg.margin;
    m.dec = bind_decoder(reg, dc);
    m.ent = &reg.at("embed.entity");
    m.rel = &reg.at("embed.relation");
    return m;
}

template <typename T>
inline Model<T> build_model(ParamRegistry<T>& reg, const ModelConfig& cfg,
                            std::size_t num_entities, std::size_t num_relations,
                            RngStream& rng) {
    register_model(reg, cfg, num_entities, num_relations, rng);
    return bind_model(reg, cfg);
}

// Encodes one entity under the episode's leakage guard, memoized per tape so
// repeated mentions (shared heads, candidate tails) build one subgraph.
template <typename T>
class EntityEncoder {
public:
    EntityEncoder(Tape<T>& tape, const Model<T>& m, const KnowledgeGraph& g, int relation)
        : tape_(tape), m_(m), g_(g) {
        opts_.max_neighbors = m.cfg.max_neighbors;
        opts_.layers = m.cfg.encoder_layers;
        opts_.exclude_relation = relation;
        opts_.bypass_gate = m.cfg.no_gate;
    }

    Var operator()(int entity) {
        auto it = cache_.find(entity);
        if (it != cache_.end()) return it->second;
        Var v = encode_entity(tape_, m_.enc, g_, *m_.ent, *m_.rel, entity, opts_);
        cache_.emplace(entity, v);
        return v;
    }

private:
    Tape<T>& tape_;
    const Model<T>& m_;
    const KnowledgeGraph& g_;
    EncodeOptions opts_;
    std::map<int, Var> cache_;
};

namespace detail {

// Weak feature rows t - h for a list of id pairs, through the memoized encoder.
template <typename T>
inline Var weak_rows(Tape<T>& tape, EntityEncoder<T>& enc,
                     const std::vector<std::pair<int, int>>& pairs) {
    std::vector<Var> rows;
    rows.reserve(pairs.size());
    for (const auto& [h, t] : pairs) rows.push_back(tape.sub(enc(t), enc(h)));
    return tape.stack_rows(rows);
}

} // namespace detail

// Condition + regularizer for one episode. Training draws the posterior
// sample; evaluation takes the prior mean (eps = 0, no queries).
template <typename T>
struct ConditionResult {
    Var c;
    Var kl; // invalid when the variant has no KL term
};

template <typename T>
inline ConditionResult<T> condition_train(Tape<T>& tape, const Model<T>& m,
                                          EntityEncoder<T>& enc, const Episode& ep,
                                          RngStream& rng) {
    ConditionResult<T> out;
    if (m.cfg.no_condition) {
        // labeled support rows: K positives then the K corrupted-tail copies
        std::vector<std::pair<int, int>> rows = ep.support;
        for (std::size_t i = 0; i < ep.support.size(); ++i)
            rows.emplace_back(ep.support[i].first, ep.support_neg[i]);
        out.c = concat_condition(tape, m.np, detail::weak_rows(tape, enc, rows), ep.np_labels);
        return out;
    }

    Var sup_rows = detail::weak_rows(tape, enc, ep.support);
    std::vector<int> ones(ep.support.size(), 1);
    auto prior = np_condition(tape, m.np, sup_rows, ones, tape.zeros({m.cfg.cond}));

    // posterior context: support and queries with their true labels
    std::vector<std::pair<int, int>> rows = ep.support;
    std::vector<int> labels(ep.support.size(), 1);
    for (const auto& [h, t] : ep.query_pos) {
        rows.emplace_back(h, t);
        labels.push_back(1);
    }
    for (std::size_t i = 0; i < ep.query_pos.size(); ++i)
        for (int t_neg : ep.query_neg[i]) {
            rows.emplace_back(ep.query_pos[i].first, t_neg);
            labels.push_back(0);
        }
    Var eps = tape.sample_gaussian({m.cfg.cond}, rng);
    auto post = np_condition(tape, m.np, detail::weak_rows(tape, enc, rows), labels, eps);

    out.c = post.c;
    out.kl = kl_diag_gaussian(tape, post.mu, post.sigma, prior.mu, prior.sigma);
    return out;
}

template <typename T>
inline Var condition_eval(Tape<T>& tape, const Model<T>& m, EntityEncoder<T>& enc,
                          const std::vector<std::pair<int, int>>& support) {
    Var sup_rows = detail::weak_rows(tape, enc, support);
    std::vector<int> ones(support.size(), 1);
    if (m.cfg.no_condition) return concat_condition(tape, m.np, sup_rows, ones);
    return np_condition(tape, m.np, sup_rows, ones, tape.zeros({m.cfg.cond})).mu;
}

// Denoised relation offset z: x_T ~ N(0, I) run backward through the
// conditional score net, then pooled. The chain stays on the tape.
template <typename T>
inline Var denoised_offset(Tape<T>& tape, const Model<T>& m, const DiffusionSchedule& sched,
                           Var c, std::size_t K, RngStream& rng) {
    Var x_T = tape.sample_gaussian({K, m.cfg.dim}, rng);
    EpsFn<T> eps_fn = [&m, c](Tape<T>& tp, Var x, double t) {
        return score_net_eps(tp, m.score, x, t, c);
    };
    Var x0_hat = reverse_sample(tape, eps_fn, x_T, sched, rng);
    return attention_pool(tape, m.pool, x0_hat);
}

template <typename T>
struct EpisodeStats {
    Var loss;
    Var l_tri;
    Var l_rel;
};

// Full training objective for one episode: ranking hinge plus the relation
// regularizer (denoising MSE + KL). Ablations swap the marked branches.
template <typename T>
inline EpisodeStats<T> episode_loss(Tape<T>& tape, const Model<T>& m, const KnowledgeGraph& g,
                                    const Episode& ep, RngStream& rng) {
    EntityEncoder<T> enc(tape, m, g, ep.relation);

    std::vector<std::pair<Var, Var>> sup_enc;
    sup_enc.reserve(ep.support.size());
    for (const auto& [h, t] : ep.support) sup_enc.emplace_back(enc(h), enc(t));
    Var x0 = weak_features(tape, sup_enc);

    auto cond = condition_train(tape, m, enc, ep, rng);

    Var l_rel = tape.scalar(T(0));
    Var z;
    if (m.cfg.no_icdr) {
        z = tape.zeros({m.cfg.dim});
    } else {
        const double t_noise =
            m.cfg.sched.t_min + (1.0 - m.cfg.sched.t_min) * rng.uniform();
        auto fd = forward_diffuse(tape, x0, t_noise, m.cfg.sched, rng);
        Var eps_hat = score_net_eps(tape, m.score, fd.x_t, t_noise, cond.c);
        l_rel = tape.sq_norm(tape.sub(fd.eps, eps_hat));
        z = denoised_offset(tape, m, m.cfg.sched, cond.c, ep.support.size(), rng);
    }
    if (cond.kl.valid()) l_rel = tape.add(l_rel, cond.kl);

    Var r_s = m.cfg.no_sr ? tape.mean_rows(x0) : stable_relation(tape, m.sr, sup_enc);
    Var r_conj = conjugate_relation(tape, m.dec, r_s, z);
    Var d_z = m.cfg.no_macone ? tape.scalar(T(0)) : dynamic_threshold(tape, m.dec, cond.c);

    std::vector<Var> pos;
    std::vector<std::vector<Var>> neg;
    for (std::size_t i = 0; i < ep.query_pos.size(); ++i) {
        const auto& [h, t] = ep.query_pos[i];
        Var h_enc = enc(h);
        pos.push_back(score_triple(tape, h_enc, r_conj, enc(t), d_z, !m.cfg.no_macone));
        std::vector<Var> row;
        for (int t_neg : ep.query_neg[i])
            row.push_back(score_triple(tape, h_enc, r_conj, enc(t_neg), d_z, !m.cfg.no_macone));
        neg.push_back(std::move(row));
    }

    EpisodeStats<T> out;
    out.l_tri = margin_loss(tape, pos, neg, static_cast<T>(m.cfg.margin));
    out.l_rel = l_rel;
    out.loss = total_loss(tape, out.l_tri, out.l_rel);
    return out;
}

// Deterministic per-relation inference state: condition from the prior mean,
// x_T from a relation-derived stream, and the configured reverse sampler.
template <typename T>
struct RelationContext {
    Var r_conj;
    Var d_z;
};

template <typename T>
inline RelationContext<T> relation_context(Tape<T>& tape, const Model<T>& m,
                                           EntityEncoder<T>& enc,
                                           const std::vector<std::pair<int, int>>& support,
                                           int relation, std::uint64_t eval_seed) {
    std::vector<std::pair<Var, Var>> sup_enc;
    sup_enc.reserve(support.size());
    for (const auto& [h, t] : support) sup_enc.emplace_back(enc(h), enc(t));
    Var x0 = weak_features(tape, sup_enc);

    Var c = condition_eval(tape, m, enc, support);

    Var z;
    if (m.cfg.no_icdr) {
        z = tape.zeros({m.cfg.dim});
    } else {
        // inference denoises deterministically: seeded x_T, ddim walk
        DiffusionSchedule sched = m.cfg.sched;
        sched.kind = DiffusionKind::Ddim;
        RngStream rng(mix_seed(mix_seed(eval_seed, 0x6576616cull),
                               static_cast<std::uint64_t>(relation)));
        z = denoised_offset(tape, m, sched, c, support.size(), rng);
    }

    RelationContext<T> out;
    Var r_s = m.cfg.no_sr ? tape.mean_rows(x0) : stable_relation(tape, m.sr, sup_enc);
    out.r_conj = conjugate_relation(tape, m.dec, r_s, z);
    out.d_z = m.cfg.no_macone ? tape.scalar(T(0)) : dynamic_threshold(tape, m.dec, c);
    return out;
}

} // namespace crfkgc
