#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crfkgc/synth.hpp"
#include "crfkgc/trainer.hpp"

namespace {

using namespace crfkgc;

Config load_config(const std::string& path) {
    Config cfg = path.empty() ? Config::defaults() : Config::parse_file(path);
    cfg.validate();
    return cfg;
}

void write_report(const EvalReport& rep, const std::string& path) {
    std::cout << rep.text();
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw Error("cannot write report file: " + path);
    f << rep.text();
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

std::vector<int> load_candidates(const KnowledgeGraph& g, const std::string& path) {
    std::vector<int> out;
    if (path.empty()) return out;
    std::ifstream f(path);
    if (!f) throw Error("cannot open candidates file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto it = g.entity_id.find(line);
        if (it == g.entity_id.end())
            throw Error("candidates file " + path + ":" + std::to_string(lineno) +
                        ": unknown entity '" + line + "'");
        out.push_back(it->second);
    }
    if (out.empty()) throw Error("candidates file " + path + " lists no entities");
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Few-shot knowledge-graph completion with conjugate relations"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, split = "test", candidates_path, variant_name;
    std::string kinds_csv = "sde,ddpm,ddim", steps_csv = "5,10,20,50", out_dir;
    std::size_t entities = 50, relations = 8;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "config file (key = value lines)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--split", split, "task split: valid or test")
        ->check(CLI::IsMember({"valid", "test"}));
    eval->add_option("--candidates", candidates_path, "entity names, one per line");

    auto* ablate = app.add_subcommand("ablate", "train and evaluate one ablation variant");
    ablate->add_option("--variant", variant_name, "gate, condition, icdr, sr or macone")
        ->required();
    ablate->add_option("--config", config_path, "config file");

    auto* sweep = app.add_subcommand("sweep-diffusion", "train one model per (kind, steps) cell");
    sweep->add_option("--kinds", kinds_csv, "comma-separated sampler kinds");
    sweep->add_option("--steps", steps_csv, "comma-separated step counts");
    sweep->add_option("--config", config_path, "config file");

    auto* gen = app.add_subcommand("gen-synth", "write a synthetic planted-pattern dataset");
    gen->add_option("--entities", entities, "entity count");
    gen->add_option("--relations", relations, "relation count");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        Config cfg = load_config(config_path);
        Trainer tr(cfg);
        tr.train(&std::cout);
        std::cout << "trained " << tr.episode() << " episodes; best validation MRR "
                  << tr.best_mrr() << "; checkpoint " << cfg.get_string("train.checkpoint")
                  << "\n";
    } else if (eval->parsed()) {
        Trainer tr = Trainer::from_checkpoint(checkpoint_path);
        const std::vector<int> cands = load_candidates(tr.data().g, candidates_path);
        const EvalReport rep = tr.evaluate(split, cands);
        write_report(rep, tr.config().get_string("eval.report"));
    } else if (ablate->parsed()) {
        const Variant v = parse_variant(variant_name);
        Config cfg = load_config(config_path);
        const EvalReport rep = run_ablation(cfg, v, &std::cout);
        std::cout << "w/o " << variant_name << " test report:\n";
        write_report(rep, cfg.get_string("eval.report"));
    } else if (sweep->parsed()) {
        Config cfg = load_config(config_path);
        const std::vector<std::string> kinds = split_csv(kinds_csv);
        std::vector<std::size_t> steps;
        for (const auto& s : split_csv(steps_csv)) {
            try {
                steps.push_back(std::stoul(s));
            } catch (const std::exception&) {
                throw Error("sweep-diffusion: bad step count '" + s + "'");
            }
        }
        const auto rows = sweep_diffusion(cfg, kinds, steps, &std::cout);
        const std::string csv = sweep_csv(rows);
        std::cout << csv;
        const std::string out = cfg.get_string("sweep.out");
        std::ofstream f(out);
        if (!f) throw Error("cannot write sweep csv: " + out);
        f << csv;
    } else if (gen->parsed()) {
        SynthConfig sc;
        sc.entities = entities;
        sc.relations = relations;
        sc.seed = seed;
        const SynthData data = generate_synth(sc);
        write_synth(data, out_dir);
        std::cout << "wrote " << data.graph.size() << " triples over " << entities
                  << " entities and " << relations << " relations to " << out_dir << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
