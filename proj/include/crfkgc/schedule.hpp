#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "crfkgc/error.hpp"

namespace crfkgc {

enum class DiffusionKind { Sde, Ddpm, Ddim };

inline DiffusionKind parse_diffusion_kind(const std::string& s) {
    if (s == "sde" || s == "vp_sde") return DiffusionKind::Sde;
    if (s == "ddpm") return DiffusionKind::Ddpm;
    if (s == "ddim") return DiffusionKind::Ddim;
    throw Error("unknown diffusion kind '" + s + "' (expected sde, ddpm or ddim)");
}

inline std::string to_string(DiffusionKind k) {
    switch (k) {
        case DiffusionKind::Sde: return "sde";
        case DiffusionKind::Ddpm: return "ddpm";
        case DiffusionKind::Ddim: return "ddim";
    }
    return "?";
}

// Variance-preserving schedule with linear beta(t) on (0, 1]:
//   beta(t) = beta_min + t (beta_max - beta_min)
//   alpha_bar(t) = exp(-1/2 * (beta_min t + (beta_max - beta_min) t^2 / 2))
// so the forward marginal is x_t = alpha_bar(t) x0 + sqrt(1 - alpha_bar(t)^2) eps
// and alpha_bar(t)^2 + variance = 1 exactly.
struct DiffusionSchedule {
    DiffusionKind kind = DiffusionKind::Sde;
    double beta_min = 0.1;
    double beta_max = 20.0;
    std::size_t steps = 20;
    double t_min = 1e-3; // reverse integration stops here, not at exactly 0

    DiffusionSchedule() = default;
    DiffusionSchedule(DiffusionKind k, double bmin, double bmax, std::size_t n)
        : kind(k), beta_min(bmin), beta_max(bmax), steps(n) {
        validate();
    }

    void validate() const {
        if (!(beta_min < beta_max)) throw Error("diffusion schedule: beta_min must be < beta_max");
        if (beta_min <= 0) throw Error("diffusion schedule: beta_min must be positive");
        if (steps < 1) throw Error("diffusion schedule: steps must be >= 1");
        if (!(t_min > 0 && t_min < 1)) throw Error("diffusion schedule: t_min must be in (0,1)");
    }

    double beta(double t) const { return beta_min + t * (beta_max - beta_min); }

    double alpha_bar(double t) const {
        const double integral = beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
        return std::exp(-0.5 * integral);
    }

    double marginal_std(double t) const {
        const double a = alpha_bar(t);
        return std::sqrt(std::max(0.0, 1.0 - a * a));
    }

    // Uniform grid t_0 = t_min < t_1 < ... < t_N = 1; the reverse pass walks
    // it from t_N down to t_0.
    std::vector<double> t_grid() const {
        std::vector<double> ts(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i)
            ts[i] = t_min + (1.0 - t_min) * static_cast<double>(i) / static_cast<double>(steps);
        return ts;
    }
};

} // namespace crfkgc
