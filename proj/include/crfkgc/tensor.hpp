#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "crfkgc/error.hpp"
#include "crfkgc/rng.hpp"

namespace crfkgc {

// Dense row-major tensor of rank 0..2. Rank 0 is a scalar, rank 1 a
// vector, rank 2 a matrix. grad is empty until requested.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad; // empty or same length as data

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T(0));
    }

    Tensor(std::vector<std::size_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) os << 'x';
            os << s[i];
        }
        os << ']';
        return os.str();
    }

    static Tensor scalar(T v) {
        Tensor t;
        t.shape = {};
        t.data = {v};
        return t;
    }

    static Tensor vec(std::vector<T> d) {
        Tensor t;
        t.shape = {d.size()};
        t.data = std::move(d);
        return t;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 1); }
    std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

    T& operator()(std::size_t i) { return data[i]; }
    const T& operator()(std::size_t i) const { return data[i]; }
    T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void zero_grad() {
        grad.assign(data.size(), T(0));
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const { return shape_str(shape); }
};

template <typename T>
inline Tensor<T> gaussian_tensor(std::vector<std::size_t> shape, RngStream& rng, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.gaussian() * stddev);
    return t;
}

} // namespace crfkgc
