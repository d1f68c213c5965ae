#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crfkgc/error.hpp"

namespace crfkgc {

struct ConfigKey {
    std::string def; // default, as written in a config file
    std::string doc; // one-line description
};

// Every recognized key with its default and documentation. Parsing rejects
// anything not listed here, so the schema below is the complete surface.
inline const std::map<std::string, ConfigKey>& config_schema() {
    static const std::map<std::string, ConfigKey> schema = {
        {"data.dir", {"data", "directory with graph.txt and tasks_{train,valid,test}.json"}},
        {"model.dim", {"100", "entity/relation embedding width d"}},
        {"model.cond_dim", {"64", "condition vector width d_c"}},
        {"np.latent_dim", {"64", "neural-process latent width d_s"}},
        {"sr.hidden_dim", {"0", "BiLSTM hidden size (0 = model.dim)"}},
        {"icdr.hidden", {"0", "denoiser residual-block width (0 = 4 * model.dim)"}},
        {"icdr.blocks", {"4", "denoiser residual blocks"}},
        {"icdr.pool_dim", {"0", "attention-pool key/query width (0 = model.dim)"}},
        {"encoder_layers", {"1", "stacked neighborhood aggregation layers"}},
        {"encoder.max_neighbors", {"50", "neighbor truncation per entity"}},
        {"encoder.leaky_slope", {"0.2", "LeakyReLU slope in attention logits"}},
        {"diffusion.kind", {"sde", "reverse sampler: sde | ddpm | ddim"}},
        {"diffusion.steps", {"20", "reverse-pass grid steps"}},
        {"diffusion.beta_min", {"0.1", "noise schedule floor"}},
        {"diffusion.beta_max", {"20.0", "noise schedule ceiling"}},
        {"dec.margin", {"1.0", "ranking hinge margin"}},
        {"dec.thresh_hidden", {"0", "threshold MLP hidden width (0 = model.cond_dim)"}},
        {"train.k", {"5", "support size K per episode (5-shot)"}},
        {"train.n_query", {"10", "positive queries per episode"}},
        {"train.n_neg", {"1", "negatives sampled per positive query"}},
        {"train.lr", {"0.001", "Adam learning rate"}},
        {"train.lr_final", {"-1", "linear-decay endpoint at episodes_max (-1 = constant lr)"}},
        {"train.clip_norm", {"5.0", "global gradient-norm clip (0 = off)"}},
        {"train.beta1", {"0.9", "Adam first-moment decay"}},
        {"train.beta2", {"0.999", "Adam second-moment decay"}},
        {"train.episodes_max", {"2000", "training episodes"}},
        {"train.eval_every", {"500", "validation cadence in episodes"}},
        {"train.seed", {"42", "master seed; every stream derives from it"}},
        {"train.checkpoint", {"checkpoint.bin", "best-validation checkpoint path"}},
        {"train.metrics_log", {"metrics.log", "per-episode metrics file"}},
        {"eval.report", {"eval_report.txt", "evaluation report file (stdout always)"}},
        {"sweep.out", {"sweep.csv", "diffusion sweep CSV path"}},
        {"sweep.episodes", {"0", "training episodes per sweep cell (0 = train.episodes_max)"}},
        {"ablate.gate", {"0", "1 = bypass the fusion gate (h' = h_agg)"}},
        {"ablate.condition", {"0", "1 = labeled-mean MLP condition, no KL"}},
        {"ablate.icdr", {"0", "1 = zero diffusion offset, no denoising loss"}},
        {"ablate.sr", {"0", "1 = mean weak features replace the BiLSTM relation"}},
        {"ablate.macone", {"0", "1 = plain translational distance, no radius"}},
    };
    return schema;
}

class Config {
public:
    static Config defaults() { return Config(); }

    static Config parse_string(const std::string& text, const std::string& origin = "config") {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string stripped = trim(line);
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw IngestError(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + stripped + "'");
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (!config_schema().count(key))
                throw IngestError(origin + ":" + std::to_string(lineno) + ": unknown key '" +
                                  key + "'");
            if (cfg.set_.count(key))
                throw IngestError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
            cfg.set_[key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IngestError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str(), path);
    }

    // Fully documented config text with every key at its default (or the
    // overridden value for keys that were set).
    std::string render() const {
        std::ostringstream os;
        for (const auto& [key, meta] : config_schema())
            os << key << " = " << get_string(key) << "  # " << meta.doc << "\n";
        return os.str();
    }

    bool is_set(const std::string& key) const { return set_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) {
        if (!config_schema().count(key)) throw Error("config: unknown key '" + key + "'");
        set_[key] = value;
    }

    std::string get_string(const std::string& key) const {
        auto it = set_.find(key);
        if (it != set_.end()) return it->second;
        auto sc = config_schema().find(key);
        if (sc == config_schema().end()) throw Error("config: unknown key '" + key + "'");
        return sc->second.def;
    }

    long get_int(const std::string& key) const {
        const std::string v = get_string(key);
        try {
            std::size_t used = 0;
            const long out = std::stol(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw IngestError("config: key '" + key + "' expects an integer, got '" + v + "'");
        }
    }

    double get_double(const std::string& key) const {
        const std::string v = get_string(key);
        try {
            std::size_t used = 0;
            const double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw IngestError("config: key '" + key + "' expects a number, got '" + v + "'");
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string v = get_string(key);
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw IngestError("config: key '" + key + "' expects 0/1/true/false, got '" + v + "'");
    }

    // Cross-field sanity; called by the CLI before any work starts.
    void validate() const {
        auto positive_int = [&](const char* key) {
            if (get_int(key) < 1)
                throw IngestError("config: key '" + std::string(key) + "' must be >= 1, got " +
                                  get_string(key));
        };
        positive_int("model.dim");
        positive_int("model.cond_dim");
        positive_int("np.latent_dim");
        positive_int("icdr.blocks");
        positive_int("encoder_layers");
        positive_int("encoder.max_neighbors");
        positive_int("diffusion.steps");
        positive_int("train.k");
        positive_int("train.n_query");
        positive_int("train.n_neg");
        positive_int("train.episodes_max");
        positive_int("train.eval_every");
        for (const char* key : {"sr.hidden_dim", "icdr.hidden", "icdr.pool_dim",
                                "dec.thresh_hidden", "sweep.episodes"})
            if (get_int(key) < 0)
                throw IngestError("config: key '" + std::string(key) + "' must be >= 0");
        if (!(get_double("train.lr") > 0)) throw IngestError("config: train.lr must be > 0");
        const double lrf = get_double("train.lr_final");
        if (!(lrf > 0) && lrf != -1.0)
            throw IngestError("config: train.lr_final must be > 0 or -1");
        if (!(get_double("train.clip_norm") >= 0))
            throw IngestError("config: train.clip_norm must be >= 0");
        if (!(get_double("dec.margin") > 0)) throw IngestError("config: dec.margin must be > 0");
        for (const char* key : {"train.beta1", "train.beta2"}) {
            const double b = get_double(key);
            if (!(b >= 0.0 && b < 1.0))
                throw IngestError("config: key '" + std::string(key) + "' must be in [0, 1)");
        }
        if (!(get_double("diffusion.beta_max") > get_double("diffusion.beta_min")) ||
            !(get_double("diffusion.beta_min") > 0))
            throw IngestError("config: need 0 < diffusion.beta_min < diffusion.beta_max");
        const std::string kind = get_string("diffusion.kind");
        if (kind != "sde" && kind != "ddpm" && kind != "ddim")
            throw IngestError("config: diffusion.kind must be sde, ddpm or ddim, got '" + kind +
                              "'");
        for (const char* key :
             {"ablate.gate", "ablate.condition", "ablate.icdr", "ablate.sr", "ablate.macone"})
            get_bool(key);
    }

    // Overridden keys only, for embedding into checkpoints.
    const std::map<std::string, std::string>& overrides() const { return set_; }

private:
    static std::string trim(const std::string& s) {
        auto b = s.begin(), e = s.end();
        while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
        while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
        return std::string(b, e);
    }

    std::map<std::string, std::string> set_;
};

} // namespace crfkgc
