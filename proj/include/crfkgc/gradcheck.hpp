#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "crfkgc/registry.hpp"

namespace crfkgc {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_coord = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    bool pass = false;
    bool finite = true; // false if any evaluation produced nan/inf
    double max_rel_err = 0.0;
    std::vector<GradCheckEntry> per_input;
};

// Central finite differences against reverse-mode gradients, in 64-bit.
//
// eval(true) must rebuild the computation (reseeding any internal rng so
// every call sees identical draws), run backward, leave gradients in the
// checked params, and return the scalar loss. eval(false) is forward-only.
// Relative error uses max(1, |analytic|, |numeric|) as denominator so tiny
// gradients are compared absolutely.
inline GradCheckReport grad_check(
    const std::function<double(bool)>& eval,
    const std::vector<std::pair<std::string, Param<double>*>>& inputs, double eps,
    double tol) {
    GradCheckReport report;
    if (!std::isfinite(eval(true))) report.finite = false;
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& [name, p] : inputs) {
        if (p->value.grad.size() != p->value.data.size())
            throw Error("grad_check: no gradient recorded for '" + name + "'");
        for (double g : p->value.grad)
            if (!std::isfinite(g)) report.finite = false;
        analytic.push_back(p->value.grad);
    }

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Param<double>* p = inputs[k].second;
        GradCheckEntry entry;
        entry.name = inputs[k].first;
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double saved = p->value.data[i];
            p->value.data[i] = saved + eps;
            const double f_plus = eval(false);
            p->value.data[i] = saved - eps;
            const double f_minus = eval(false);
            p->value.data[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            if (!std::isfinite(numeric)) report.finite = false;
            const double a = analytic[k][i];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_coord = i;
                entry.analytic = a;
                entry.numeric = numeric;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.per_input.push_back(std::move(entry));
    }
    report.pass = report.finite && report.max_rel_err <= tol;
    return report;
}

} // namespace crfkgc
