#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "crfkgc/error.hpp"
#include "crfkgc/kg.hpp"
#include "crfkgc/rng.hpp"

namespace crfkgc {

struct Episode {
    int relation = -1;
    std::vector<std::pair<int, int>> support;   // K positive (h, t)
    std::vector<std::pair<int, int>> query_pos; // up to n_query positive (h, t)
    std::vector<std::vector<int>> query_neg;    // per positive query, n_neg corrupted tails
    std::vector<int> support_neg;               // one corrupted tail per support pair
    std::vector<int> np_labels;                 // 1 per support positive, then 0 per negative
};

// Draws a tail such that (h, r, t') is absent from the triple set. Uniform
// over entities with bounded retries; a graph where some (h, r) pair is
// connected to nearly everything will surface as an error rather than a hang.
inline int sample_negative_tail(const KnowledgeGraph& g, int h, int r, RngStream& rng,
                                int max_retries = 1000) {
    const std::size_t n = g.num_entities();
    if (n == 0) throw Error("negative sampling over empty entity set");
    for (int it = 0; it < max_retries; ++it) {
        const int t = static_cast<int>(rng.index(n));
        if (!g.has_triple(h, r, t)) return t;
    }
    throw Error("no valid negative tail after " + std::to_string(max_retries) +
                " draws for head=" + std::to_string(h) + " relation=" + std::to_string(r));
}

// Builds one K-shot episode for `relation`. Returns nullopt if the relation has
// fewer than K+1 triples (skip-and-resample signal for the caller). Support and
// query positives are drawn without replacement, so they are disjoint by
// construction.
inline std::optional<Episode> try_sample_episode(const TaskTable& tasks,
                                                 const KnowledgeGraph& g, int relation,
                                                 std::size_t K, std::size_t n_query,
                                                 std::size_t n_neg, RngStream& rng) {
    auto it = tasks.pairs.find(relation);
    if (it == tasks.pairs.end())
        throw Error("sample_episode: relation id " + std::to_string(relation) +
                    " is not a task relation");
    const auto& all = it->second;
    if (all.size() < K + 1) return std::nullopt;

    // Partial Fisher-Yates over index space: first K are support, the rest of
    // the shuffled prefix are queries.
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t want = std::min(all.size(), K + n_query);
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }

    Episode ep;
    ep.relation = relation;
    for (std::size_t i = 0; i < K; ++i) ep.support.push_back(all[idx[i]]);
    for (std::size_t i = K; i < want; ++i) ep.query_pos.push_back(all[idx[i]]);

    for (const auto& [h, t] : ep.query_pos) {
        std::vector<int> negs;
        for (std::size_t k = 0; k < n_neg; ++k)
            negs.push_back(sample_negative_tail(g, h, relation, rng));
        ep.query_neg.push_back(std::move(negs));
    }
    for (const auto& [h, t] : ep.support)
        ep.support_neg.push_back(sample_negative_tail(g, h, relation, rng));

    ep.np_labels.assign(K, 1);
    ep.np_labels.insert(ep.np_labels.end(), K, 0);
    return ep;
}

// Samples a task relation uniformly, skipping relations too small for an
// episode. Throws if no task relation has >= K+1 triples.
inline Episode sample_episode(const TaskTable& tasks, const KnowledgeGraph& g, std::size_t K,
                              std::size_t n_query, std::size_t n_neg, RngStream& rng) {
    if (tasks.task_relations.empty()) throw Error("sample_episode: no task relations");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int rel = tasks.task_relations[rng.index(tasks.task_relations.size())];
        auto ep = try_sample_episode(tasks, g, rel, K, n_query, n_neg, rng);
        if (ep) return std::move(*ep);
    }
    throw Error("sample_episode: no task relation has at least K+1 = " + std::to_string(K + 1) +
                " triples");
}

} // namespace crfkgc
