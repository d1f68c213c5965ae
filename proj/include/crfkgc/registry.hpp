#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crfkgc/error.hpp"
#include "crfkgc/rng.hpp"
#include "crfkgc/tensor.hpp"

namespace crfkgc {

// One trainable tensor plus its Adam moment sidecar.
template <typename T>
struct Param {
    Tensor<T> value;
    std::vector<T> m; // first moment, sized on first optimizer step
    std::vector<T> v; // second moment

    Tensor<T> value_copy() const {
        Tensor<T> t;
        t.shape = value.shape;
        t.data = value.data;
        return t;
    }
};

enum class Init { Zeros, XavierUniform, Gaussian };

// Named trainable parameters with deterministic (sorted-by-name) iteration,
// a shared Adam step counter, and bit-exact checkpoint round-trips.
template <typename T>
class ParamRegistry {
public:
    Param<T>& create(const std::string& name, std::vector<std::size_t> shape, Init init,
                     RngStream& rng, double gaussian_std = 0.1) {
        if (params_.count(name))
            throw Error("parameter '" + name + "' already registered");
        Param<T> p;
        p.value = Tensor<T>(shape);
        switch (init) {
            case Init::Zeros:
                break;
            case Init::XavierUniform: {
                const double fan_out = shape.empty() ? 1.0 : static_cast<double>(shape[0]);
                const double fan_in =
                    shape.size() >= 2 ? static_cast<double>(shape[1]) : fan_out;
                const double limit = std::sqrt(6.0 / (fan_in + fan_out));
                for (auto& x : p.value.data)
                    x = static_cast<T>((rng.uniform() * 2.0 - 1.0) * limit);
                break;
            }
            case Init::Gaussian:
                for (auto& x : p.value.data)
                    x = static_cast<T>(rng.gaussian() * gaussian_std);
                break;
        }
        auto [it, ok] = params_.emplace(name, std::move(p));
        (void)ok;
        return it->second;
    }

    bool exists(const std::string& name) const { return params_.count(name) != 0; }

    Param<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
        return it->second;
    }

    const Param<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
        return it->second;
    }

    std::map<std::string, Param<T>>& items() { return params_; }
    const std::map<std::string, Param<T>>& items() const { return params_; }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& [k, p] : params_) n += p.value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [k, p] : params_) p.value.zero_grad();
    }

    double grad_norm() const {
        double s = 0;
        for (const auto& [k, p] : params_)
            for (const T& g : p.value.grad) s += static_cast<double>(g) * g;
        return std::sqrt(s);
    }

    void scale_grads(double factor) {
        for (auto& [k, p] : params_)
            for (T& g : p.value.grad) g = static_cast<T>(g * factor);
    }

    std::uint64_t adam_steps() const { return adam_t_; }

    // Bias-corrected Adam over every registered parameter. Gradients must
    // have been populated (zero_grads + backward) for all of them.
    void adam_step(double lr, double beta1, double beta2, double eps) {
        ++adam_t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
        for (auto& [name, p] : params_) {
            if (p.value.grad.size() != p.value.data.size())
                throw Error("adam_step: parameter '" + name + "' has no gradient");
            if (p.m.size() != p.value.numel()) p.m.assign(p.value.numel(), T(0));
            if (p.v.size() != p.value.numel()) p.v.assign(p.value.numel(), T(0));
            for (std::size_t i = 0; i < p.value.numel(); ++i) {
                const double g = static_cast<double>(p.value.grad[i]);
                const double m = beta1 * static_cast<double>(p.m[i]) + (1.0 - beta1) * g;
                const double v = beta2 * static_cast<double>(p.v[i]) + (1.0 - beta2) * g * g;
                p.m[i] = static_cast<T>(m);
                p.v[i] = static_cast<T>(v);
                const double mh = m / bc1;
                const double vh = v / bc2;
                p.value.data[i] =
                    static_cast<T>(static_cast<double>(p.value.data[i]) -
                                   lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }

    // ---- checkpoint io ----------------------------------------------------
    // Layout: magic, version, precision byte, adam step count, parameter
    // count, then per parameter (sorted by name): name, dims, raw values,
    // raw moments. An opaque trailer carries trainer state (episode counter,
    // rng strings) so a resumed run continues bit-identically.

    void save(const std::string& path, const std::string& extra_state) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open checkpoint for writing: " + path);
        f.write(kMagic, 8);
        write_u32(f, kVersion);
        const std::uint8_t prec = sizeof(T);
        f.write(reinterpret_cast<const char*>(&prec), 1);
        write_u64(f, adam_t_);
        write_u32(f, static_cast<std::uint32_t>(params_.size()));
        for (const auto& [name, p] : params_) {
            write_u32(f, static_cast<std::uint32_t>(name.size()));
            f.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u32(f, static_cast<std::uint32_t>(p.value.shape.size()));
            for (std::size_t d : p.value.shape) write_u64(f, d);
            write_raw(f, p.value.data);
            const std::uint8_t has_m = p.m.size() == p.value.numel() ? 1 : 0;
            f.write(reinterpret_cast<const char*>(&has_m), 1);
            if (has_m) {
                write_raw(f, p.m);
                write_raw(f, p.v);
            }
        }
        write_u32(f, static_cast<std::uint32_t>(extra_state.size()));
        f.write(extra_state.data(), static_cast<std::streamsize>(extra_state.size()));
        if (!f) throw Error("checkpoint write failed: " + path);
    }

    // Loads into a fresh registry; returns the opaque trailer.
    std::string load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw Error("cannot open checkpoint: " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, kMagic, 8) != 0)
            throw Error("not a checkpoint file: " + path);
        const std::uint32_t version = read_u32(f);
        if (version != kVersion)
            throw Error("unsupported checkpoint version " + std::to_string(version));
        std::uint8_t prec = 0;
        f.read(reinterpret_cast<char*>(&prec), 1);
        if (prec != sizeof(T))
            throw Error("checkpoint precision is " + std::to_string(prec * 8) +
                        "-bit, expected " + std::to_string(sizeof(T) * 8) + "-bit");
        params_.clear();
        adam_t_ = read_u64(f);
        const std::uint32_t n = read_u32(f);
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint32_t name_len = read_u32(f);
            std::string name(name_len, '\0');
            f.read(name.data(), name_len);
            const std::uint32_t ndim = read_u32(f);
            std::vector<std::size_t> shape(ndim);
            for (auto& d : shape) d = static_cast<std::size_t>(read_u64(f));
            Param<T> p;
            p.value = Tensor<T>(shape);
            read_raw(f, p.value.data);
            std::uint8_t has_m = 0;
            f.read(reinterpret_cast<char*>(&has_m), 1);
            if (has_m) {
                p.m.resize(p.value.numel());
                p.v.resize(p.value.numel());
                read_raw(f, p.m);
                read_raw(f, p.v);
            }
            params_.emplace(std::move(name), std::move(p));
        }
        const std::uint32_t extra_len = read_u32(f);
        std::string extra(extra_len, '\0');
        f.read(extra.data(), extra_len);
        if (!f) throw Error("truncated checkpoint: " + path);
        return extra;
    }

private:
    static constexpr const char kMagic[9] = "CRFKGCKP";
    static constexpr std::uint32_t kVersion = 1;

    static void write_u32(std::ofstream& f, std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        f.write(b, 4);
    }
    static void write_u64(std::ofstream& f, std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        f.write(b, 8);
    }
    static std::uint32_t read_u32(std::ifstream& f) {
        unsigned char b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    static std::uint64_t read_u64(std::ifstream& f) {
        unsigned char b[8];
        f.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    static void write_raw(std::ofstream& f, const std::vector<T>& d) {
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(T)));
    }
    static void read_raw(std::ifstream& f, std::vector<T>& d) {
        f.read(reinterpret_cast<char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(T)));
    }

    std::map<std::string, Param<T>> params_;
    std::uint64_t adam_t_ = 0;
};

// Free-function spelling used by the trainer.
template <typename T>
inline void adam_step(ParamRegistry<T>& registry, double lr, std::pair<double, double> betas,
                      double eps) {
    registry.adam_step(lr, betas.first, betas.second, eps);
}

} // namespace crfkgc
