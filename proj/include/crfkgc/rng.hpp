#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace crfkgc {

// splitmix64 finalizer, used to derive independent stream seeds from
// (base seed, stream index) pairs without correlated low bits.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix_seed(a ^ mix_seed(b));
}

// Seeded random stream. Uniform and gaussian draws are built from raw
// mt19937_64 output instead of std distributions, so sequences are
// identical across standard library implementations.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Rejection-free modulo bias is negligible
    // for the vocabulary sizes involved, but use Lemire-style rejection
    // anyway to keep draws exact.
    std::size_t index(std::size_t n) {
        if (n == 0) return 0;
        const std::uint64_t bound = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
        std::uint64_t x = engine_();
        while (x >= bound) x = engine_();
        return static_cast<std::size_t>(x % n);
    }

    // Standard normal via Box-Muller; caches the second value.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(theta);
        has_spare_ = true;
        return radius * std::cos(theta);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void deserialize(const std::string& state) {
        std::istringstream is(state);
        int has_spare = 0;
        is >> engine_ >> has_spare >> spare_;
        has_spare_ = has_spare != 0;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace crfkgc
