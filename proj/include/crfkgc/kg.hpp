#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "crfkgc/error.hpp"

namespace crfkgc {

using Triple = std::tuple<int, int, int>; // (head, relation, tail) ids

struct IngestionConfig {
    std::size_t max_neighbors = 50;
    bool add_inverse = false;        // also index (t, r, h) for every (h, r, t)
    bool index_task_triples = false; // few-shot triples contribute to neighbor index
};

struct KnowledgeGraph {
    std::vector<std::string> entities;  // id -> name, first-appearance order
    std::vector<std::string> relations; // id -> name
    std::set<Triple> triples;           // background + task triples, deduplicated
    // Outgoing (relation, tail) pairs per head, truncated to max_neighbors by
    // keeping the first entries in insertion order.
    std::vector<std::vector<std::pair<int, int>>> neighbor_index;

    std::unordered_map<std::string, int> entity_id;
    std::unordered_map<std::string, int> relation_id;

    std::size_t num_entities() const { return entities.size(); }
    std::size_t num_relations() const { return relations.size(); }

    bool has_triple(int h, int r, int t) const {
        return triples.count({h, r, t}) > 0;
    }

    const std::vector<std::pair<int, int>>& neighbors(int entity) const {
        if (entity < 0 || static_cast<std::size_t>(entity) >= neighbor_index.size())
            throw Error("neighbors: entity id " + std::to_string(entity) + " out of range [0," +
                        std::to_string(neighbor_index.size()) + ")");
        return neighbor_index[entity];
    }
};

// Few-shot tasks: relation id -> its (h, t) pairs, in file order.
struct TaskTable {
    std::vector<int> task_relations;
    std::map<int, std::vector<std::pair<int, int>>> pairs;
};

namespace detail {

inline int intern(std::vector<std::string>& names,
                  std::unordered_map<std::string, int>& ids, const std::string& s) {
    auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(names.size());
    names.push_back(s);
    ids.emplace(s, id);
    return id;
}

inline void index_neighbor(KnowledgeGraph& g, std::size_t max_neighbors, int h, int r, int t) {
    auto& lst = g.neighbor_index[static_cast<std::size_t>(h)];
    if (lst.size() < max_neighbors) lst.emplace_back(r, t);
}

} // namespace detail

// Reads one relation -> triples map against an already-populated graph.
// Relations may be new (interned); entities must exist. Task triples join the
// global triple set — they count as known-true for negative sampling and
// filtered ranking — but the neighbor index is left alone. Newly unseen
// triples are appended to *new_triples when the caller wants to index them.
inline TaskTable load_task_table(KnowledgeGraph& g, const std::string& task_file,
                                 std::vector<Triple>* new_triples = nullptr) {
    std::ifstream kf(task_file);
    if (!kf) throw IngestError("cannot open task file: " + task_file);
    nlohmann::json doc;
    try {
        kf >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("task file " + task_file + ": " + e.what());
    }
    if (!doc.is_object())
        throw IngestError("task file " + task_file + ": expected a relation -> triples map");

    TaskTable tasks;
    for (auto& [rel_name, arr] : doc.items()) {
        if (!arr.is_array())
            throw IngestError("task file " + task_file + ": relation '" + rel_name +
                              "' must map to an array of [h, r, t]");
        const int r = detail::intern(g.relations, g.relation_id, rel_name);
        tasks.task_relations.push_back(r);
        auto& lst = tasks.pairs[r];
        for (auto& trip : arr) {
            if (!trip.is_array() || trip.size() != 3)
                throw IngestError("task file " + task_file + ": relation '" + rel_name +
                                  "' has a malformed triple entry");
            const std::string hs = trip[0].get<std::string>();
            const std::string ts = trip[2].get<std::string>();
            // Task entities must already exist in the background graph;
            // few-shot queries over entities with no graph presence cannot be
            // embedded.
            auto hit = g.entity_id.find(hs);
            if (hit == g.entity_id.end())
                throw IngestError("task file " + task_file + ": relation '" + rel_name +
                                  "' references unknown entity '" + hs + "'");
            auto tit = g.entity_id.find(ts);
            if (tit == g.entity_id.end())
                throw IngestError("task file " + task_file + ": relation '" + rel_name +
                                  "' references unknown entity '" + ts + "'");
            const int h = hit->second, t = tit->second;
            lst.emplace_back(h, t);
            if (g.triples.insert({h, r, t}).second && new_triples)
                new_triples->push_back({h, r, t});
        }
    }
    return tasks;
}

// Reads background triples plus a few-shot task map. Vocabularies are assigned
// in first-appearance order (triple file first, then task file). Task triples
// join the global triple set (they must count as known-true for negative
// sampling and filtered ranking) but stay out of the neighbor index unless
// config.index_task_triples is set.
inline std::pair<KnowledgeGraph, TaskTable> load_graph(const std::string& triple_file,
                                                       const std::string& task_file,
                                                       const IngestionConfig& config = {}) {
    KnowledgeGraph g;

    std::ifstream tf(triple_file);
    if (!tf) throw IngestError("cannot open triple file: " + triple_file);
    std::string line;
    std::size_t line_no = 0;
    std::vector<Triple> background;
    while (std::getline(tf, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
            throw IngestError(triple_file + ":" + std::to_string(line_no) +
                              ": expected head<TAB>relation<TAB>tail, got " +
                              std::to_string(fields.size()) + " fields");
        const int h = detail::intern(g.entities, g.entity_id, fields[0]);
        const int r = detail::intern(g.relations, g.relation_id, fields[1]);
        const int t = detail::intern(g.entities, g.entity_id, fields[2]);
        if (g.triples.insert({h, r, t}).second) background.push_back({h, r, t});
    }
    if (line_no == 0) throw IngestError("empty triple file: " + triple_file);

    std::vector<Triple> task_triples;
    TaskTable tasks = load_task_table(g, task_file, &task_triples);

    g.neighbor_index.assign(g.num_entities(), {});
    auto index_all = [&](const std::vector<Triple>& ts) {
        for (const auto& [h, r, t] : ts) {
            detail::index_neighbor(g, config.max_neighbors, h, r, t);
            if (config.add_inverse) detail::index_neighbor(g, config.max_neighbors, t, r, h);
        }
    };
    index_all(background);
    if (config.index_task_triples) index_all(task_triples);

    return {std::move(g), std::move(tasks)};
}

// Truncated neighbor view. neighbor_index is already capped at the ingest-time
// max_neighbors; this applies a possibly tighter cap for encoding.
inline std::vector<std::pair<int, int>> neighbors(const KnowledgeGraph& g, int entity,
                                                  std::size_t max_neighbors) {
    const auto& all = g.neighbors(entity);
    if (all.size() <= max_neighbors) return all;
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_neighbors)};
}

} // namespace crfkgc
