#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crfkgc/config.hpp"
#include "crfkgc/metrics.hpp"
#include "crfkgc/model.hpp"

namespace crfkgc {

struct DataSet {
    KnowledgeGraph g;
    TaskTable train;
    TaskTable valid;
    TaskTable test;
};

// Layout: <dir>/graph.txt plus tasks_{train,valid,test}.json. Valid/test task
// triples join the known-truth set for filtered ranking but are never indexed
// as neighbors; the per-episode leakage guard handles relations whose triples
// also appear in graph.txt.
inline DataSet load_dataset(const std::string& dir, std::size_t max_neighbors) {
    IngestionConfig ic;
    ic.max_neighbors = max_neighbors;
    DataSet d;
    auto [g, train] = load_graph(dir + "/graph.txt", dir + "/tasks_train.json", ic);
    d.g = std::move(g);
    d.train = std::move(train);
    d.valid = load_task_table(d.g, dir + "/tasks_valid.json");
    d.test = load_task_table(d.g, dir + "/tasks_test.json");
    return d;
}

// Filtered-rank evaluation over one task table. Support for each relation is
// its first K designated pairs; every later pair is a query. `candidates`
// empty means every entity. `eval_seed` fixes the denoising draw per relation.
template <typename T>
inline EvalReport evaluate_split(const Model<T>& m, const KnowledgeGraph& g,
                                 const TaskTable& tasks, std::size_t K,
                                 std::uint64_t eval_seed,
                                 const std::vector<int>& candidates = {}) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<int> cands = candidates;
    if (cands.empty()) {
        cands.resize(g.num_entities());
        std::iota(cands.begin(), cands.end(), 0);
    }
    std::map<int, std::size_t> cand_pos;
    for (std::size_t i = 0; i < cands.size(); ++i) cand_pos[cands[i]] = i;

    MetricsAccumulator acc;
    for (int rel : tasks.task_relations) {
        const auto& pairs = tasks.pairs.at(rel);
        if (pairs.size() < K + 1) continue; // too small for a support/query split

        const std::vector<std::pair<int, int>> support(pairs.begin(), pairs.begin() + K);
        Tape<T> tape;
        EntityEncoder<T> enc(tape, m, g, rel);
        auto ctx = relation_context(tape, m, enc, support, rel, eval_seed);
        std::vector<Var> cand_enc;
        cand_enc.reserve(cands.size());
        for (int c : cands) cand_enc.push_back(enc(c));

        for (std::size_t qi = K; qi < pairs.size(); ++qi) {
            const auto& [h, gold] = pairs[qi];
            auto git = cand_pos.find(gold);
            if (git == cand_pos.end())
                throw Error("evaluate: gold tail '" + g.entities[gold] +
                            "' missing from candidate set for query (" + g.entities[h] + ", " +
                            g.relations[rel] + ")");
            Var h_enc = enc(h);
            std::vector<double> scores(cands.size());
            std::vector<char> filtered(cands.size(), 0);
            for (std::size_t i = 0; i < cands.size(); ++i) {
                scores[i] = static_cast<double>(tape.scalar_value(score_triple(
                    tape, h_enc, ctx.r_conj, cand_enc[i], ctx.d_z, !m.cfg.no_macone)));
                filtered[i] = cands[i] != gold && g.has_triple(h, rel, cands[i]);
            }
            acc.add(g.relations[rel], filtered_rank(scores, git->second, filtered));
        }
    }
    if (acc.count() == 0)
        throw Error("evaluate: no task relation has at least K+1 = " + std::to_string(K + 1) +
                    " pairs");
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
    return acc.finalize(el.count());
}

struct EpisodeRecord {
    std::size_t episode = 0; // 1-based, after the step
    double l_tri = 0.0;
    double l_rel = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double wall_s = 0.0;

    std::string line() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "episode=%zu l_tri=%.17g l_rel=%.17g loss=%.17g grad_norm=%.17g "
                      "wall_s=%.6f",
                      episode, l_tri, l_rel, loss, grad_norm, wall_s);
        return buf;
    }
};

class Trainer {
public:
    explicit Trainer(const Config& cfg) : cfg_(cfg) {
        cfg_.validate();
        K_ = static_cast<std::size_t>(cfg_.get_int("train.k"));
        n_query_ = static_cast<std::size_t>(cfg_.get_int("train.n_query"));
        n_neg_ = static_cast<std::size_t>(cfg_.get_int("train.n_neg"));
        lr_ = cfg_.get_double("train.lr");
        lr_final_ = cfg_.get_double("train.lr_final");
        clip_norm_ = cfg_.get_double("train.clip_norm");
        beta1_ = cfg_.get_double("train.beta1");
        beta2_ = cfg_.get_double("train.beta2");
        episodes_max_ = static_cast<std::size_t>(cfg_.get_int("train.episodes_max"));
        eval_every_ = static_cast<std::size_t>(cfg_.get_int("train.eval_every"));
        seed_ = static_cast<std::uint64_t>(cfg_.get_int("train.seed"));

        mc_ = ModelConfig::from_config(cfg_);
        data_ = load_dataset(cfg_.get_string("data.dir"), mc_.max_neighbors);
        RngStream init_rng(mix_seed(seed_, 0x696e6974ull));
        model_ = build_model(reg_, mc_, data_.g.num_entities(), data_.g.num_relations(),
                             init_rng);
    }

    // Rebuilds a trainer from a checkpoint; dataset and dimensions come from
    // the embedded config.
    static Trainer from_checkpoint(const std::string& path) {
        ParamRegistry<double> loaded;
        const std::string extra = loaded.load(path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(extra);
        } catch (const nlohmann::json::exception& e) {
            throw IngestError("checkpoint trailer is not valid JSON: " + std::string(e.what()));
        }
        Config cfg;
        for (const auto& [k, v] : j.at("config").get<std::map<std::string, std::string>>())
            cfg.set(k, v);
        Trainer tr(cfg);
        tr.reg_ = std::move(loaded);
        tr.model_ = bind_model(tr.reg_, tr.mc_); // rebind into the restored registry
        tr.episode_ = j.at("episode").get<std::size_t>();
        tr.best_mrr_ = j.at("best_mrr").get<double>();
        return tr;
    }

    void save(const std::string& path) const {
        nlohmann::json j;
        j["config"] = cfg_.overrides();
        j["episode"] = episode_;
        j["best_mrr"] = best_mrr_;
        reg_.save(path, j.dump());
    }

    // One training episode: sample, forward, backprop, Adam. Deterministic
    // given (seed, episode index); the two derived streams keep sampling and
    // noise independent of each other.
    EpisodeRecord step() {
        const auto t0 = std::chrono::steady_clock::now();
        const std::size_t e = episode_;
        RngStream rng_ep(mix_seed(seed_, 2 * e));
        RngStream rng_noise(mix_seed(seed_, 2 * e + 1));
        Episode ep = sample_episode(data_.train, data_.g, K_, n_query_, n_neg_, rng_ep);

        Tape<double> tape;
        tape.set_check_finite(true);
        EpisodeRecord rec;
        try {
            auto stats = episode_loss(tape, model_, data_.g, ep, rng_noise);
            rec.l_tri = tape.scalar_value(stats.l_tri);
            rec.l_rel = tape.scalar_value(stats.l_rel);
            rec.loss = tape.scalar_value(stats.loss);
            if (!std::isfinite(rec.loss)) throw NumericError("non-finite loss");
            reg_.zero_grads();
            tape.backward(stats.loss);
        } catch (const NumericError& err) {
            throw NumericError("episode " + std::to_string(e + 1) + " aborted: " + err.what() +
                               "\n" + dump_episode(ep));
        }
        rec.grad_norm = reg_.grad_norm();
        // a single spike through the deep reverse-sampler chain would poison
        // Adam's second moments for ~1/(1-beta2) episodes, so clip globally
        if (clip_norm_ > 0 && rec.grad_norm > clip_norm_)
            reg_.scale_grads(clip_norm_ / rec.grad_norm);
        double lr = lr_;
        if (lr_final_ > 0 && episodes_max_ > 1) // linear decay, episode-indexed (resume-safe)
            lr = lr_ + (lr_final_ - lr_) * static_cast<double>(e) /
                           static_cast<double>(episodes_max_ - 1);
        reg_.adam_step(lr, beta1_, beta2_, 1e-8);
        ++episode_;
        rec.episode = episode_;
        const std::chrono::duration<double> el = std::chrono::steady_clock::now() - t0;
        rec.wall_s = el.count();
        return rec;
    }

    // Full loop: one metrics line per episode, validation at eval_every with
    // best-MRR checkpoint retention. `echo` mirrors validation summaries.
    void train(std::ostream* echo = nullptr) {
        const std::string log_path = cfg_.get_string("train.metrics_log");
        std::ofstream log(log_path, episode_ == 0 ? std::ios::trunc : std::ios::app);
        if (!log) throw Error("cannot open metrics log: " + log_path);
        const std::string ckpt = cfg_.get_string("train.checkpoint");

        while (episode_ < episodes_max_) {
            EpisodeRecord rec = step();
            log << rec.line() << '\n';
            if (episode_ % eval_every_ == 0 || episode_ == episodes_max_) {
                EvalReport rep = evaluate_split(model_, data_.g, data_.valid, K_, seed_);
                if (echo)
                    (*echo) << "episode " << episode_ << " validation: " << rep.text();
                if (rep.mrr > best_mrr_) {
                    best_mrr_ = rep.mrr;
                    save(ckpt);
                }
            }
        }
        log.flush();
        if (!log) throw Error("metrics log write failed: " + log_path);
    }

    EvalReport evaluate(const std::string& split, const std::vector<int>& candidates = {}) const {
        const TaskTable* t = nullptr;
        if (split == "train") t = &data_.train;
        else if (split == "valid") t = &data_.valid;
        else if (split == "test") t = &data_.test;
        else throw Error("unknown split '" + split + "' (valid: train, valid, test)");
        return evaluate_split(model_, data_.g, *t, K_, seed_, candidates);
    }

    const Config& config() const { return cfg_; }
    const DataSet& data() const { return data_; }
    const Model<double>& model() const { return model_; }
    ParamRegistry<double>& registry() { return reg_; }
    std::size_t episode() const { return episode_; }
    std::size_t episodes_max() const { return episodes_max_; }
    double best_mrr() const { return best_mrr_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t k_support() const { return K_; }

private:
    std::string dump_episode(const Episode& ep) const {
        std::ostringstream os;
        os << "relation " << data_.g.relations[ep.relation] << "; support:";
        for (const auto& [h, t] : ep.support)
            os << " (" << data_.g.entities[h] << ", " << data_.g.entities[t] << ")";
        os << "; " << ep.query_pos.size() << " queries";
        return os.str();
    }

    Config cfg_;
    std::size_t K_ = 5, n_query_ = 10, n_neg_ = 1;
    double lr_ = 1e-3, lr_final_ = -1.0, clip_norm_ = 5.0, beta1_ = 0.9, beta2_ = 0.999;
    std::size_t episodes_max_ = 2000, eval_every_ = 500;
    std::uint64_t seed_ = 42;
    ModelConfig mc_;
    DataSet data_;
    ParamRegistry<double> reg_;
    Model<double> model_;
    std::size_t episode_ = 0;
    double best_mrr_ = -1.0;
};

// Trains with the variant flag set, then reports on the test split using the
// best-validation parameters.
inline EvalReport run_ablation(Config cfg, Variant variant, std::ostream* echo = nullptr) {
    if (variant != Variant::Full) {
        cfg.set("ablate." + to_string(variant), "1");
        // keep variant artifacts apart from the full model's
        const std::string tag = ".wo-" + to_string(variant);
        cfg.set("train.checkpoint", cfg.get_string("train.checkpoint") + tag);
        cfg.set("train.metrics_log", cfg.get_string("train.metrics_log") + tag);
    }
    Trainer tr(cfg);
    tr.train(echo);
    Trainer best = Trainer::from_checkpoint(cfg.get_string("train.checkpoint"));
    return best.evaluate("test");
}

struct SweepRow {
    std::string kind;
    std::size_t steps = 0;
    double mrr = 0, hits1 = 0, hits5 = 0, hits10 = 0;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "kind,steps,mrr,hits1,hits5,hits10\n";
    os.setf(std::ios::fixed);
    os.precision(6);
    for (const auto& r : rows)
        os << r.kind << ',' << r.steps << ',' << r.mrr << ',' << r.hits1 << ',' << r.hits5
           << ',' << r.hits10 << '\n';
    return os.str();
}

// Trains one model per (kind, steps) cell and evaluates each on the test
// split. Cell artifacts get suffixed paths so cells never clobber each other.
inline std::vector<SweepRow> sweep_diffusion(const Config& base,
                                             const std::vector<std::string>& kinds,
                                             const std::vector<std::size_t>& steps_list,
                                             std::ostream* echo = nullptr) {
    if (kinds.empty() || steps_list.empty())
        throw Error("sweep-diffusion: need at least one kind and one step count");
    for (std::size_t s : steps_list)
        if (s < 1) throw Error("sweep-diffusion: steps must be >= 1");

    std::vector<SweepRow> rows;
    for (const std::string& kind : kinds) {
        parse_diffusion_kind(kind); // validates the name
        for (std::size_t steps : steps_list) {
            Config cell = base;
            cell.set("diffusion.kind", kind);
            cell.set("diffusion.steps", std::to_string(steps));
            const std::string tag = "." + kind + "-" + std::to_string(steps);
            cell.set("train.checkpoint", base.get_string("train.checkpoint") + tag);
            cell.set("train.metrics_log", base.get_string("train.metrics_log") + tag);
            if (base.get_int("sweep.episodes") > 0)
                cell.set("train.episodes_max", base.get_string("sweep.episodes"));
            if (echo) (*echo) << "sweep cell kind=" << kind << " steps=" << steps << "\n";
            Trainer tr(cell);
            tr.train(echo);
            Trainer best = Trainer::from_checkpoint(cell.get_string("train.checkpoint"));
            EvalReport rep = best.evaluate("test");
            rows.push_back({kind, steps, rep.mrr, rep.hits1, rep.hits5, rep.hits10});
        }
    }
    return rows;
}

} // namespace crfkgc
