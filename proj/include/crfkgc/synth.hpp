#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "crfkgc/error.hpp"
#include "crfkgc/rng.hpp"

namespace crfkgc {

// Synthetic benchmark with a planted translational pattern. Entities are cells
// of an open W x H grid; relation k moves by a fixed lattice offset, so an
// embedding e(x,y) = x*u + y*v with r_k = dx*u + dy*v solves every clean
// triple exactly. A small fraction of noise triples (random tails) is mixed in
// so support sets contain outliers that attention pooling must down-weight.
struct SynthConfig {
    std::size_t entities = 50;
    std::size_t relations = 8;
    double noise = 0.05; // per planted triple, probability of one corrupted copy
    std::uint64_t seed = 0;
    std::size_t valid_relations = 1; // last relations reserved for eval splits
    std::size_t test_relations = 1;
};

struct SynthTriple {
    std::string h, r, t;
    bool operator<(const SynthTriple& o) const {
        return std::tie(h, r, t) < std::tie(o.h, o.r, o.t);
    }
    bool operator==(const SynthTriple& o) const { return h == o.h && r == o.r && t == o.t; }
};

struct SynthData {
    std::size_t width = 0, height = 0;
    std::vector<SynthTriple> graph; // every triple, file order
    // relation name -> (h, t) name pairs per split, file order
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> train, valid, test;
};

namespace detail {

// Lattice offsets in rings of growing Chebyshev radius: the 8 unit moves
// first, then radius-2 moves, and so on. Deterministic order.
inline std::vector<std::pair<int, int>> lattice_offsets(std::size_t count) {
    std::vector<std::pair<int, int>> out;
    for (int rad = 1; out.size() < count; ++rad) {
        for (int dy = -rad; dy <= rad; ++dy)
            for (int dx = -rad; dx <= rad; ++dx) {
                if (std::max(std::abs(dx), std::abs(dy)) != rad) continue;
                out.emplace_back(dx, dy);
                if (out.size() == count) return out;
            }
    }
    return out;
}

} // namespace detail

inline SynthData generate_synth(const SynthConfig& cfg) {
    if (cfg.entities < 4) throw Error("gen-synth: need at least 4 entities");
    if (cfg.relations == 0) throw Error("gen-synth: need at least 1 relation");
    if (cfg.valid_relations + cfg.test_relations >= cfg.relations)
        throw Error("gen-synth: not enough relations for train/valid/test split");

    SynthData data;
    data.width = static_cast<std::size_t>(std::ceil(std::sqrt(2.0 * cfg.entities)));
    data.height = (cfg.entities + data.width - 1) / data.width;

    auto cell_id = [&](int x, int y) { return y * static_cast<int>(data.width) + x; };
    auto in_grid = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < static_cast<int>(data.width) &&
               y < static_cast<int>(data.height) &&
               cell_id(x, y) < static_cast<int>(cfg.entities);
    };
    auto ent = [](int id) { return "e" + std::to_string(id); };

    const auto offsets = detail::lattice_offsets(cfg.relations);
    RngStream rng(mix_seed(cfg.seed, 0x53594e5448ull)); // "SYNTH"

    std::set<SynthTriple> seen;
    auto add = [&](const SynthTriple& tr,
                   std::vector<std::pair<std::string, std::string>>& split_pairs) {
        if (seen.insert(tr).second) data.graph.push_back(tr);
        split_pairs.emplace_back(tr.h, tr.t);
    };

    for (std::size_t k = 0; k < cfg.relations; ++k) {
        const std::string rel = "r" + std::to_string(k);
        auto& split = k + cfg.valid_relations + cfg.test_relations < cfg.relations
                          ? data.train[rel]
                          : (k + cfg.test_relations < cfg.relations ? data.valid[rel]
                                                                    : data.test[rel]);
        const auto [dx, dy] = offsets[k];
        for (int y = 0; y < static_cast<int>(data.height); ++y) {
            for (int x = 0; x < static_cast<int>(data.width); ++x) {
                if (!in_grid(x, y) || !in_grid(x + dx, y + dy)) continue;
                const int h = cell_id(x, y), t = cell_id(x + dx, y + dy);
                add({ent(h), rel, ent(t)}, split);
                if (rng.uniform() < cfg.noise) {
                    // one corrupted copy: same head, random wrong tail
                    for (int tries = 0; tries < 100; ++tries) {
                        const int bad = static_cast<int>(rng.index(cfg.entities));
                        if (bad == t || bad == h) continue;
                        SynthTriple noisy{ent(h), rel, ent(bad)};
                        if (seen.count(noisy)) continue;
                        add(noisy, split);
                        break;
                    }
                }
            }
        }
    }
    return data;
}

namespace detail {

inline void write_task_json(
    const std::filesystem::path& path,
    const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& tasks) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [rel, pairs] : tasks) {
        auto arr = nlohmann::json::array();
        for (const auto& [h, t] : pairs) arr.push_back({h, rel, t});
        doc[rel] = std::move(arr);
    }
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << doc.dump(1) << "\n";
}

} // namespace detail

// Writes graph.txt plus tasks_{train,valid,test}.json under out_dir.
inline void write_synth(const SynthData& data, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "graph.txt");
        if (!f) throw Error("cannot write graph.txt under " + out_dir);
        for (const auto& tr : data.graph) f << tr.h << '\t' << tr.r << '\t' << tr.t << '\n';
    }
    detail::write_task_json(fs::path(out_dir) / "tasks_train.json", data.train);
    detail::write_task_json(fs::path(out_dir) / "tasks_valid.json", data.valid);
    detail::write_task_json(fs::path(out_dir) / "tasks_test.json", data.test);
}

} // namespace crfkgc
