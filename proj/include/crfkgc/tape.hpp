#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "crfkgc/error.hpp"
#include "crfkgc/rng.hpp"
#include "crfkgc/tensor.hpp"

namespace crfkgc {

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

template <typename T>
struct Param;

// Reverse-mode tape. Ops append nodes holding the forward value; backward()
// seeds the root with 1 and runs the recorded closures in reverse order.
// Parameter leaves accumulate their gradient into the owning Param tensor.
template <typename T>
class Tape {
public:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;
        std::function<void(Tape&)> backprop; // empty for leaves without sinks
    };

    Tape() = default;

    // When enabled, every op verifies its output is finite and raises a
    // NumericError naming the op otherwise.
    void set_check_finite(bool on) { check_finite_ = on; }

    std::size_t size() const { return nodes_.size(); }
    const Tensor<T>& value(Var v) const { return nodes_[v.idx].value; }
    const std::vector<T>& grad(Var v) const { return nodes_[v.idx].grad; }

    T scalar_value(Var v) const {
        const Tensor<T>& t = nodes_[v.idx].value;
        if (t.numel() != 1)
            throw ShapeError("expected scalar, got " + t.shape_str());
        return t.data[0];
    }

    // ---- leaves ----------------------------------------------------------

    Var leaf(Tensor<T> value) { return push("leaf", std::move(value), {}); }

    Var scalar(T v) { return leaf(Tensor<T>::scalar(v)); }

    Var zeros(std::vector<std::size_t> shape) { return leaf(Tensor<T>(std::move(shape))); }

    // Gaussian draw; constant on the tape (reparameterization is done by
    // the caller combining it with differentiable ops).
    Var sample_gaussian(std::vector<std::size_t> shape, RngStream& rng) {
        return leaf(gaussian_tensor<T>(std::move(shape), rng));
    }

    // Whole trainable tensor. Backward accumulates into p.value.grad.
    Var param(Param<T>& p) {
        Var out = push("param", p.value_copy(), {});
        Param<T>* pp = &p;
        int oi = out.idx;
        nodes_[oi].backprop = [oi, pp](Tape& tp) {
            auto& g = tp.nodes_[oi].grad;
            pp->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) pp->value.grad[i] += g[i];
        };
        return out;
    }

    // Single row of a 2-D trainable table (embedding lookup).
    Var param_row(Param<T>& p, std::size_t row) {
        const Tensor<T>& t = p.value;
        if (t.rank() != 2 || row >= t.shape[0])
            throw ShapeError("param_row: row " + std::to_string(row) + " out of range for " +
                             t.shape_str());
        const std::size_t d = t.shape[1];
        Tensor<T> v({d});
        for (std::size_t j = 0; j < d; ++j) v.data[j] = t(row, j);
        Var out = push("param_row", std::move(v), {});
        Param<T>* pp = &p;
        int oi = out.idx;
        nodes_[oi].backprop = [oi, pp, row, d](Tape& tp) {
            auto& g = tp.nodes_[oi].grad;
            pp->value.ensure_grad();
            for (std::size_t j = 0; j < d; ++j) pp->value.grad[row * d + j] += g[j];
        };
        return out;
    }

    // ---- elementwise -----------------------------------------------------

    Var add(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require_same_shape("add", ta, tb);
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
        return binary_elementwise("add", std::move(out), a, b,
                                  [](Tape& tp, int ai, int bi, int oi) {
                                      auto& g = tp.nodes_[oi].grad;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          ga[i] += g[i];
                                          gb[i] += g[i];
                                      }
                                  });
    }

    Var sub(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require_same_shape("sub", ta, tb);
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= tb.data[i];
        return binary_elementwise("sub", std::move(out), a, b,
                                  [](Tape& tp, int ai, int bi, int oi) {
                                      auto& g = tp.nodes_[oi].grad;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          ga[i] += g[i];
                                          gb[i] -= g[i];
                                      }
                                  });
    }

    Var mul(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require_same_shape("mul", ta, tb);
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
        return binary_elementwise("mul", std::move(out), a, b,
                                  [](Tape& tp, int ai, int bi, int oi) {
                                      auto& g = tp.nodes_[oi].grad;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      const auto& va = tp.nodes_[ai].value.data;
                                      const auto& vb = tp.nodes_[bi].value.data;
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          ga[i] += g[i] * vb[i];
                                          gb[i] += g[i] * va[i];
                                      }
                                  });
    }

    Var div(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require_same_shape("div", ta, tb);
        Tensor<T> out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] /= tb.data[i];
        return binary_elementwise("div", std::move(out), a, b,
                                  [](Tape& tp, int ai, int bi, int oi) {
                                      auto& g = tp.nodes_[oi].grad;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      const auto& va = tp.nodes_[ai].value.data;
                                      const auto& vb = tp.nodes_[bi].value.data;
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          ga[i] += g[i] / vb[i];
                                          gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                                      }
                                  });
    }

    // y = mult * a + shift, elementwise with constant coefficients.
    Var affine_const(Var a, T mult, T shift) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = mult * v + shift;
        return unary("affine_const", std::move(out), a,
                     [mult](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += mult * g[i];
                     });
    }

    Var scale(Var a, T mult) { return affine_const(a, mult, T(0)); }
    Var neg(Var a) { return affine_const(a, T(-1), T(0)); }

    Var sigmoid(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
        return unary("sigmoid", std::move(out), a,
                     [](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& y = tp.nodes_[oi].value.data;
                         for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * y[i] * (T(1) - y[i]);
                     });
    }

    Var tanh_(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::tanh(v);
        return unary("tanh", std::move(out), a,
                     [](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& y = tp.nodes_[oi].value.data;
                         for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * (T(1) - y[i] * y[i]);
                     });
    }

    Var leaky_relu(Var a, T slope) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = v > T(0) ? v : slope * v;
        return unary("leaky_relu", std::move(out), a,
                     [slope](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& x = tp.nodes_[ai].value.data;
                         for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * (x[i] > T(0) ? T(1) : slope);
                     });
    }

    // max(x, 0); subgradient 0 at the kink.
    Var relu(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        return unary("relu", std::move(out), a,
                     [](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& x = tp.nodes_[ai].value.data;
                         for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * (x[i] > T(0) ? T(1) : T(0));
                     });
    }

    // |x|; subgradient 0 at 0.
    Var abs_(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::abs(v);
        return unary("abs", std::move(out), a,
                     [](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& x = tp.nodes_[ai].value.data;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
                             ga[i] += g[i] * s;
                         }
                     });
    }

    Var log_(Var a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::log(v);
        return unary("log", std::move(out), a,
                     [](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& x = tp.nodes_[ai].value.data;
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
                     });
    }

    // ---- softmax ---------------------------------------------------------

    // Softmax over the last axis: whole vector for rank 1, each row for
    // rank 2. Empty axis is an error.
    Var softmax(Var a) {
        const auto& ta = val(a);
        if (ta.numel() == 0 || (ta.rank() == 2 && ta.shape[1] == 0) ||
            (ta.rank() == 1 && ta.shape[0] == 0))
            throw ShapeError("softmax over empty axis, shape " + ta.shape_str());
        Tensor<T> out = ta;
        const std::size_t rows = ta.rank() == 2 ? ta.shape[0] : 1;
        const std::size_t cols = ta.rank() == 2 ? ta.shape[1] : ta.numel();
        for (std::size_t r = 0; r < rows; ++r) {
            T* o = out.data.data() + r * cols;
            T mx = o[0];
            for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, o[j]);
            T s = T(0);
            for (std::size_t j = 0; j < cols; ++j) {
                o[j] = std::exp(o[j] - mx);
                s += o[j];
            }
            for (std::size_t j = 0; j < cols; ++j) o[j] /= s;
        }
        return unary("softmax", std::move(out), a,
                     [rows, cols](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         const auto& y = tp.nodes_[oi].value.data;
                         for (std::size_t r = 0; r < rows; ++r) {
                             const T* yy = y.data() + r * cols;
                             const T* gg = g.data() + r * cols;
                             T dot = T(0);
                             for (std::size_t j = 0; j < cols; ++j) dot += gg[j] * yy[j];
                             for (std::size_t j = 0; j < cols; ++j)
                                 ga[r * cols + j] += yy[j] * (gg[j] - dot);
                         }
                     });
    }

    // ---- shape / assembly -------------------------------------------------

    Var concat(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.rank() != 1 || tb.rank() != 1)
            throw ShapeError("concat expects vectors, got " + ta.shape_str() + " and " +
                             tb.shape_str());
        Tensor<T> out({ta.numel() + tb.numel()});
        for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i];
        for (std::size_t i = 0; i < tb.numel(); ++i) out.data[ta.numel() + i] = tb.data[i];
        const std::size_t na = ta.numel();
        return binary_elementwise("concat", std::move(out), a, b,
                                  [na](Tape& tp, int ai, int bi, int oi) {
                                      auto& g = tp.nodes_[oi].grad;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                                      for (std::size_t i = 0; i < gb.size(); ++i)
                                          gb[i] += g[na + i];
                                  });
    }

    // Column-wise concatenation of two matrices with equal row counts.
    Var concat_cols(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[0] != tb.shape[0])
            throw ShapeError("concat_cols shape mismatch: " + ta.shape_str() + " vs " +
                             tb.shape_str());
        const std::size_t n = ta.shape[0], ca = ta.shape[1], cb = tb.shape[1];
        Tensor<T> out({n, ca + cb});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < ca; ++j) out(i, j) = ta(i, j);
            for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = tb(i, j);
        }
        return binary_elementwise("concat_cols", std::move(out), a, b,
                                  [n, ca, cb](Tape& tp, int ai, int bi, int oi) {
                                      auto& g = tp.nodes_[oi].grad;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      for (std::size_t i = 0; i < n; ++i) {
                                          for (std::size_t j = 0; j < ca; ++j)
                                              ga[i * ca + j] += g[i * (ca + cb) + j];
                                          for (std::size_t j = 0; j < cb; ++j)
                                              gb[i * cb + j] += g[i * (ca + cb) + ca + j];
                                      }
                                  });
    }

    Var slice(Var a, std::size_t start, std::size_t len) {
        const auto& ta = val(a);
        if (ta.rank() != 1 || start + len > ta.numel())
            throw ShapeError("slice [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") out of range for " +
                             ta.shape_str());
        Tensor<T> out({len});
        for (std::size_t i = 0; i < len; ++i) out.data[i] = ta.data[start + i];
        return unary("slice", std::move(out), a,
                     [start, len](Tape& tp, int ai, int oi) {
                         auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         for (std::size_t i = 0; i < len; ++i) ga[start + i] += g[i];
                     });
    }

    // Stack equal-length vectors into a matrix, one per row.
    Var stack_rows(const std::vector<Var>& rows) {
        if (rows.empty()) throw ShapeError("stack_rows: empty row list");
        const std::size_t d = val(rows[0]).numel();
        Tensor<T> out({rows.size(), d});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = val(rows[i]);
            if (r.rank() != 1 || r.numel() != d)
                throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " +
                                 r.shape_str() + ", expected [" + std::to_string(d) + "]");
            for (std::size_t j = 0; j < d; ++j) out(i, j) = r.data[j];
        }
        std::vector<int> idx(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) idx[i] = rows[i].idx;
        Var out_v = push("stack_rows", std::move(out), {});
        int oi = out_v.idx;
        nodes_[oi].backprop = [oi, idx, d](Tape& tp) {
            auto& g = tp.nodes_[oi].grad;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                auto& gr = tp.nodes_[idx[i]].grad;
                for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
            }
        };
        return out_v;
    }

    // Stack scalar nodes into one vector [n].
    Var stack_scalars(const std::vector<Var>& xs) {
        if (xs.empty()) throw ShapeError("stack_scalars: empty list");
        Tensor<T> out({xs.size()});
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const auto& t = val(xs[i]);
            if (t.numel() != 1)
                throw ShapeError("stack_scalars: element " + std::to_string(i) +
                                 " has shape " + t.shape_str());
            out.data[i] = t.data[0];
        }
        std::vector<int> idx(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) idx[i] = xs[i].idx;
        Var out_v = push("stack_scalars", std::move(out), {});
        int oi = out_v.idx;
        nodes_[oi].backprop = [oi, idx](Tape& tp) {
            auto& g = tp.nodes_[oi].grad;
            for (std::size_t i = 0; i < idx.size(); ++i) tp.nodes_[idx[i]].grad[0] += g[i];
        };
        return out_v;
    }

    // ---- linear algebra ----------------------------------------------------

    Var matmul(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
            throw ShapeError("matmul shape mismatch: " + ta.shape_str() + " * " +
                             tb.shape_str());
        const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
        Tensor<T> out({m, n});
        gemm(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
        return binary_elementwise("matmul", std::move(out), a, b,
                                  [m, k, n](Tape& tp, int ai, int bi, int oi) {
                                      const auto& g = tp.nodes_[oi].grad;
                                      const auto& va = tp.nodes_[ai].value.data;
                                      const auto& vb = tp.nodes_[bi].value.data;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      // dA += G * B^T ; dB += A^T * G
                                      for (std::size_t i = 0; i < m; ++i)
                                          for (std::size_t j = 0; j < n; ++j) {
                                              const T gij = g[i * n + j];
                                              if (gij == T(0)) continue;
                                              for (std::size_t p = 0; p < k; ++p)
                                                  ga[i * k + p] += gij * vb[p * n + j];
                                          }
                                      for (std::size_t i = 0; i < m; ++i)
                                          for (std::size_t p = 0; p < k; ++p) {
                                              const T aip = va[i * k + p];
                                              if (aip == T(0)) continue;
                                              for (std::size_t j = 0; j < n; ++j)
                                                  gb[p * n + j] += aip * g[i * n + j];
                                          }
                                  });
    }

    // A * B^T for row-major weight layout [out x in].
    Var matmul_nt(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[1])
            throw ShapeError("matmul_nt shape mismatch: " + ta.shape_str() + " * " +
                             tb.shape_str() + "^T");
        const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[0];
        Tensor<T> out({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T s = T(0);
                const T* ra = ta.data.data() + i * k;
                const T* rb = tb.data.data() + j * k;
                for (std::size_t p = 0; p < k; ++p) s += ra[p] * rb[p];
                out(i, j) = s;
            }
        return binary_elementwise("matmul_nt", std::move(out), a, b,
                                  [m, k, n](Tape& tp, int ai, int bi, int oi) {
                                      const auto& g = tp.nodes_[oi].grad;
                                      const auto& va = tp.nodes_[ai].value.data;
                                      const auto& vb = tp.nodes_[bi].value.data;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      // dA += G * B ; dB += G^T * A
                                      for (std::size_t i = 0; i < m; ++i)
                                          for (std::size_t j = 0; j < n; ++j) {
                                              const T gij = g[i * n + j];
                                              if (gij == T(0)) continue;
                                              for (std::size_t p = 0; p < k; ++p) {
                                                  ga[i * k + p] += gij * vb[j * k + p];
                                                  gb[j * k + p] += gij * va[i * k + p];
                                              }
                                          }
                                  });
    }

    // W [out x in] times x [in] -> [out].
    Var matvec(Var w, Var x) {
        const auto& tw = val(w);
        const auto& tx = val(x);
        if (tw.rank() != 2 || tx.rank() != 1 || tw.shape[1] != tx.shape[0])
            throw ShapeError("matvec shape mismatch: " + tw.shape_str() + " * " +
                             tx.shape_str());
        const std::size_t m = tw.shape[0], k = tw.shape[1];
        Tensor<T> out({m});
        for (std::size_t i = 0; i < m; ++i) {
            T s = T(0);
            const T* rw = tw.data.data() + i * k;
            for (std::size_t p = 0; p < k; ++p) s += rw[p] * tx.data[p];
            out.data[i] = s;
        }
        return binary_elementwise("matvec", std::move(out), w, x,
                                  [m, k](Tape& tp, int wi, int xi, int oi) {
                                      const auto& g = tp.nodes_[oi].grad;
                                      const auto& vw = tp.nodes_[wi].value.data;
                                      const auto& vx = tp.nodes_[xi].value.data;
                                      auto& gw = tp.nodes_[wi].grad;
                                      auto& gx = tp.nodes_[xi].grad;
                                      for (std::size_t i = 0; i < m; ++i) {
                                          const T gi = g[i];
                                          if (gi == T(0)) continue;
                                          for (std::size_t p = 0; p < k; ++p) {
                                              gw[i * k + p] += gi * vx[p];
                                              gx[p] += gi * vw[i * k + p];
                                          }
                                      }
                                  });
    }

    // Add a vector to every row of a matrix.
    Var add_rowvec(Var m, Var v) {
        const auto& tm = val(m);
        const auto& tv = val(v);
        if (tm.rank() != 2 || tv.rank() != 1 || tm.shape[1] != tv.shape[0])
            throw ShapeError("add_rowvec shape mismatch: " + tm.shape_str() + " + " +
                             tv.shape_str());
        const std::size_t rows = tm.shape[0], cols = tm.shape[1];
        Tensor<T> out = tm;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out(i, j) += tv.data[j];
        return binary_elementwise("add_rowvec", std::move(out), m, v,
                                  [rows, cols](Tape& tp, int mi, int vi, int oi) {
                                      const auto& g = tp.nodes_[oi].grad;
                                      auto& gm = tp.nodes_[mi].grad;
                                      auto& gv = tp.nodes_[vi].grad;
                                      for (std::size_t i = 0; i < rows; ++i)
                                          for (std::size_t j = 0; j < cols; ++j) {
                                              gm[i * cols + j] += g[i * cols + j];
                                              gv[j] += g[i * cols + j];
                                          }
                                  });
    }

    // sum_i w_i * M[i,:] for weights w [n], matrix M [n x d] -> [d].
    Var weighted_sum_rows(Var m, Var w) {
        const auto& tm = val(m);
        const auto& tw = val(w);
        if (tm.rank() != 2 || tw.rank() != 1 || tm.shape[0] != tw.shape[0])
            throw ShapeError("weighted_sum_rows shape mismatch: " + tm.shape_str() +
                             " weighted by " + tw.shape_str());
        const std::size_t n = tm.shape[0], d = tm.shape[1];
        Tensor<T> out({d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) out.data[j] += tw.data[i] * tm(i, j);
        return binary_elementwise("weighted_sum_rows", std::move(out), m, w,
                                  [n, d](Tape& tp, int mi, int wi, int oi) {
                                      const auto& g = tp.nodes_[oi].grad;
                                      const auto& vm = tp.nodes_[mi].value.data;
                                      const auto& vw = tp.nodes_[wi].value.data;
                                      auto& gm = tp.nodes_[mi].grad;
                                      auto& gw = tp.nodes_[wi].grad;
                                      for (std::size_t i = 0; i < n; ++i) {
                                          T dot = T(0);
                                          for (std::size_t j = 0; j < d; ++j) {
                                              gm[i * d + j] += vw[i] * g[j];
                                              dot += g[j] * vm[i * d + j];
                                          }
                                          gw[i] += dot;
                                      }
                                  });
    }

    Var dot(Var a, Var b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require_same_shape("dot", ta, tb);
        T s = T(0);
        for (std::size_t i = 0; i < ta.numel(); ++i) s += ta.data[i] * tb.data[i];
        return binary_elementwise("dot", Tensor<T>::scalar(s), a, b,
                                  [](Tape& tp, int ai, int bi, int oi) {
                                      const T g = tp.nodes_[oi].grad[0];
                                      const auto& va = tp.nodes_[ai].value.data;
                                      const auto& vb = tp.nodes_[bi].value.data;
                                      auto& ga = tp.nodes_[ai].grad;
                                      auto& gb = tp.nodes_[bi].grad;
                                      for (std::size_t i = 0; i < va.size(); ++i) {
                                          ga[i] += g * vb[i];
                                          gb[i] += g * va[i];
                                      }
                                  });
    }

    // ---- reductions --------------------------------------------------------

    Var sum(Var a) {
        const auto& ta = val(a);
        T s = T(0);
        for (const T& v : ta.data) s += v;
        return unary("sum", Tensor<T>::scalar(s), a,
                     [](Tape& tp, int ai, int oi) {
                         const T g = tp.nodes_[oi].grad[0];
                         auto& ga = tp.nodes_[ai].grad;
                         for (auto& v : ga) v += g;
                     });
    }

    Var mean(Var a) {
        const auto& ta = val(a);
        if (ta.numel() == 0) throw ShapeError("mean of empty tensor");
        const T inv = T(1) / static_cast<T>(ta.numel());
        return scale(sum(a), inv);
    }

    // Mean over rows of a matrix -> vector of column means.
    Var mean_rows(Var a) {
        const auto& ta = val(a);
        if (ta.rank() != 2 || ta.shape[0] == 0)
            throw ShapeError("mean_rows expects a nonempty matrix, got " + ta.shape_str());
        const std::size_t n = ta.shape[0], d = ta.shape[1];
        Tensor<T> out({d});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) out.data[j] += ta(i, j);
        const T inv = T(1) / static_cast<T>(n);
        for (auto& v : out.data) v *= inv;
        return unary("mean_rows", std::move(out), a,
                     [n, d, inv](Tape& tp, int ai, int oi) {
                         const auto& g = tp.nodes_[oi].grad;
                         auto& ga = tp.nodes_[ai].grad;
                         for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += inv * g[j];
                     });
    }

    // Euclidean norm; undefined gradient at exactly zero input.
    Var l2_norm(Var a) {
        const auto& ta = val(a);
        T s = T(0);
        for (const T& v : ta.data) s += v * v;
        const T nrm = std::sqrt(s);
        return unary("l2_norm", Tensor<T>::scalar(nrm), a,
                     [](Tape& tp, int ai, int oi) {
                         const T g = tp.nodes_[oi].grad[0];
                         const T nrm = tp.nodes_[oi].value.data[0];
                         if (nrm == T(0)) return;
                         const auto& x = tp.nodes_[ai].value.data;
                         auto& ga = tp.nodes_[ai].grad;
                         for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * x[i] / nrm;
                     });
    }

    // Sum of squares.
    Var sq_norm(Var a) {
        const auto& ta = val(a);
        T s = T(0);
        for (const T& v : ta.data) s += v * v;
        return unary("sq_norm", Tensor<T>::scalar(s), a,
                     [](Tape& tp, int ai, int oi) {
                         const T g = tp.nodes_[oi].grad[0];
                         const auto& x = tp.nodes_[ai].value.data;
                         auto& ga = tp.nodes_[ai].grad;
                         for (std::size_t i = 0; i < x.size(); ++i) ga[i] += T(2) * g * x[i];
                     });
    }

    // Mean squared error between same-shape tensors.
    Var mse(Var a, Var b) {
        // numel is captured before sub/sq_norm push nodes: those pushes can
        // reallocate nodes_ and invalidate references into it.
        const std::size_t n = [&] {
            const auto& ta = val(a);
            require_same_shape("mse", ta, val(b));
            if (ta.numel() == 0) throw ShapeError("mse of empty tensors");
            return ta.numel();
        }();
        Var d = sub(a, b);
        return scale(sq_norm(d), T(1) / static_cast<T>(n));
    }

    // ---- backward ----------------------------------------------------------

    void backward(Var root) {
        Node& r = nodes_[root.idx];
        if (r.value.numel() != 1)
            throw ShapeError("backward: root must be scalar, got " + r.value.shape_str());
        for (auto& n : nodes_) n.grad.assign(n.value.numel(), T(0));
        r.grad[0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].backprop) nodes_[i].backprop(*this);
        }
    }

    void clear() { nodes_.clear(); }

private:
    const Tensor<T>& val(Var v) const { return nodes_[v.idx].value; }

    static void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
        if (!a.same_shape(b))
            throw ShapeError(std::string(op) + " shape mismatch: " + a.shape_str() + " vs " +
                             b.shape_str());
    }

    static void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                     std::size_t n) {
        for (std::size_t i = 0; i < m; ++i) {
            T* rc = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T aip = a[i * k + p];
                if (aip == T(0)) continue;
                const T* rb = b + p * n;
                for (std::size_t j = 0; j < n; ++j) rc[j] += aip * rb[j];
            }
        }
    }

    Var push(const char* op, Tensor<T> value, std::function<void(Tape&)> backprop) {
        if (check_finite_ && !value.all_finite())
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        Node n;
        n.value = std::move(value);
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    template <typename F>
    Var unary(const char* op, Tensor<T> out, Var a, F f) {
        Var o = push(op, std::move(out), {});
        int oi = o.idx, ai = a.idx;
        nodes_[oi].backprop = [ai, oi, f](Tape& tp) { f(tp, ai, oi); };
        return o;
    }

    template <typename F>
    Var binary_elementwise(const char* op, Tensor<T> out, Var a, Var b, F f) {
        Var o = push(op, std::move(out), {});
        int oi = o.idx, ai = a.idx, bi = b.idx;
        nodes_[oi].backprop = [ai, bi, oi, f](Tape& tp) { f(tp, ai, bi, oi); };
        return o;
    }

    std::vector<Node> nodes_;
    bool check_finite_ = false;
};

} // namespace crfkgc
