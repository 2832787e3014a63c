#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmaprank/util.hpp"

namespace cmaprank {

/// Dense row-major matrix; a vector is a 1 x n tensor.
struct tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    tensor() = default;
    tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    tensor(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != r * c) throw error("tensor: value count does not match shape");
    }

    static tensor row(std::vector<double> v) {
        const auto n = v.size();
        return tensor(1, n, std::move(v));
    }

    static tensor identity(std::size_t n) {
        tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t size() const { return data.size(); }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    friend bool operator==(const tensor&, const tensor&) = default;
};

/// Named parameters in a deterministic (sorted) order.
using param_store = std::map<std::string, tensor>;

/// Compressed row groups: group g owns index[offsets[g] .. offsets[g+1]).
struct segments {
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> index;

    std::size_t count() const { return offsets.size() - 1; }
    std::size_t size(std::size_t g) const { return offsets[g + 1] - offsets[g]; }

    void add_group(const std::vector<std::size_t>& members) {
        index.insert(index.end(), members.begin(), members.end());
        offsets.push_back(index.size());
    }

    template <typename Int>
    static segments from(const std::vector<std::vector<Int>>& groups) {
        segments s;
        for (const auto& g : groups) {
            for (auto x : g) s.index.push_back(static_cast<std::size_t>(x));
            s.offsets.push_back(s.index.size());
        }
        return s;
    }
};

class tape;

/// Handle to a recorded value.
struct var {
    tape* owner = nullptr;
    std::size_t id = 0;

    std::size_t rows() const;
    std::size_t cols() const;
    const std::vector<double>& value() const;
    double scalar() const;
    tensor as_tensor() const;
};

/// Records a forward computation and replays it backwards. Nodes are
/// appended in evaluation order, so reverse order is a valid topological
/// order for the gradient sweep.
class tape {
public:
    var constant(tensor t) { return push(t.rows, t.cols, std::move(t.data), nullptr); }
    var constant_row(std::vector<double> v) { return constant(tensor::row(std::move(v))); }

    /// Leaf bound to a named parameter; repeated requests share one node.
    var param(const param_store& store, const std::string& name) {
        if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return {this, it->second};
        auto it = store.find(name);
        if (it == store.end()) throw error("unknown parameter: " + name);
        auto v = constant(it->second);
        param_nodes_.emplace(name, v.id);
        return v;
    }

    /// Fills every node's gradient of the 1x1 `loss`.
    void backward(var loss) {
        if (loss.owner != this || loss.id >= nodes_.size()) throw error("backward: loss was not recorded on this tape");
        if (nodes_[loss.id].value.size() != 1) throw error("backward: loss must be a scalar");
        for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
        nodes_[loss.id].grad[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward(*this, i);
        }
        backward_done_ = true;
    }

    /// Parameter gradients after backward(); parameters never touched are absent.
    param_store gradients() const {
        if (!backward_done_) throw error("gradients requested before backward()");
        param_store out;
        for (const auto& [name, id] : param_nodes_) {
            const auto& n = nodes_[id];
            out.emplace(name, tensor(n.rows, n.cols, n.grad));
        }
        return out;
    }

    void accumulate_gradients(param_store& into) const {
        for (auto& [name, g] : gradients()) {
            auto [it, fresh] = into.try_emplace(name, g);
            if (!fresh) {
                for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
            }
        }
    }

    const std::vector<double>& grad(var v) const {
        if (!backward_done_) throw error("gradient requested before backward()");
        return nodes_[v.id].grad;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    friend struct var;
    friend struct ops;

    struct node {
        std::size_t rows, cols;
        std::vector<double> value;
        std::vector<double> grad;
        std::function<void(tape&, std::size_t)> backward;
    };

    var push(std::size_t r, std::size_t c, std::vector<double> value, std::function<void(tape&, std::size_t)> bw) {
        nodes_.push_back({r, c, std::move(value), {}, std::move(bw)});
        return {this, nodes_.size() - 1};
    }

    std::vector<node> nodes_;
    std::unordered_map<std::string, std::size_t> param_nodes_;
    bool backward_done_ = false;
};

inline std::size_t var::rows() const { return owner->nodes_[id].rows; }
inline std::size_t var::cols() const { return owner->nodes_[id].cols; }
inline const std::vector<double>& var::value() const { return owner->nodes_[id].value; }
inline double var::scalar() const {
    if (value().size() != 1) throw error("scalar() on a non-scalar value");
    return value()[0];
}
inline tensor var::as_tensor() const { return tensor(rows(), cols(), value()); }

/// Differentiable operations. Each forward computes its value eagerly and
/// registers the adjoint update for backward().
struct ops {
    static tape::node& at(tape& t, std::size_t id) { return t.nodes_[id]; }
    static tape& owner(var a) { return *a.owner; }

    static void same_tape(var a, var b) {
        if (a.owner != b.owner || !a.owner) throw error("operands recorded on different tapes");
    }

    static var matmul(var a, var b) {
        same_tape(a, b);
        auto& t = owner(a);
        const auto n = a.rows(), k = a.cols(), m = b.cols();
        if (b.rows() != k) {
            throw error("matmul: shape mismatch (" + std::to_string(n) + "x" + std::to_string(k) + ") * ("
                        + std::to_string(b.rows()) + "x" + std::to_string(m) + ")");
        }
        std::vector<double> out(n * m, 0.0);
        const auto& A = a.value();
        const auto& B = b.value();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double av = A[i * k + p];
                if (av == 0.0) continue;
                const double* brow = &B[p * m];
                double* orow = &out[i * m];
                for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
            }
        const auto ia = a.id, ib = b.id;
        return t.push(n, m, std::move(out), [ia, ib, n, k, m](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            const auto& A = at(tp, ia).value;
            const auto& B = at(tp, ib).value;
            auto& gA = at(tp, ia).grad;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * B[p * m + j];
                    gA[i * k + p] += s;
                }
            auto& gB = at(tp, ib).grad;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = A[i * k + p];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < m; ++j) gB[p * m + j] += av * G[i * m + j];
                }
        });
    }

    static var add(var a, var b, double sign = 1.0) {
        same_tape(a, b);
        if (a.rows() != b.rows() || a.cols() != b.cols()) throw error("add: shape mismatch");
        std::vector<double> out(a.value());
        const auto& B = b.value();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * B[i];
        const auto ia = a.id, ib = b.id;
        return owner(a).push(a.rows(), a.cols(), std::move(out), [ia, ib, sign](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            auto& ga = at(tp, ia).grad;
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
            auto& gb = at(tp, ib).grad;
            for (std::size_t i = 0; i < G.size(); ++i) gb[i] += sign * G[i];
        });
    }

    /// a (n x m) plus row vector b (1 x m) broadcast over rows.
    static var add_row(var a, var b) {
        same_tape(a, b);
        if (b.rows() != 1 || b.cols() != a.cols()) throw error("add_row: bias shape mismatch");
        const auto n = a.rows(), m = a.cols();
        std::vector<double> out(a.value());
        const auto& B = b.value();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += B[j];
        const auto ia = a.id, ib = b.id;
        return owner(a).push(n, m, std::move(out), [ia, ib, n, m](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            auto& ga = at(tp, ia).grad;
            auto& gb = at(tp, ib).grad;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    ga[i * m + j] += G[i * m + j];
                    gb[j] += G[i * m + j];
                }
        });
    }

    /// c * a + offset, elementwise, for constants c and offset.
    static var affine(var a, double c, double offset) {
        std::vector<double> out(a.value());
        for (auto& x : out) x = c * x + offset;
        const auto ia = a.id;
        return owner(a).push(a.rows(), a.cols(), std::move(out), [ia, c](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            auto& ga = at(tp, ia).grad;
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += c * G[i];
        });
    }

    /// Scalar variable s (1 x 1) times a.
    static var mul_scalar(var a, var s) {
        same_tape(a, s);
        if (s.value().size() != 1) throw error("mul_scalar: multiplier must be 1x1");
        const double sv = s.scalar();
        std::vector<double> out(a.value());
        for (auto& x : out) x *= sv;
        const auto ia = a.id, is = s.id;
        return owner(a).push(a.rows(), a.cols(), std::move(out), [ia, is](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            const auto& A = at(tp, ia).value;
            const double sv = at(tp, is).value[0];
            auto& ga = at(tp, ia).grad;
            double gs = 0.0;
            for (std::size_t i = 0; i < G.size(); ++i) {
                ga[i] += sv * G[i];
                gs += A[i] * G[i];
            }
            at(tp, is).grad[0] += gs;
        });
    }

    /// max(x, slope * x); slope 0 gives ReLU. The derivative at 0 is `slope`.
    static var leaky_relu(var a, double slope) {
        std::vector<double> out(a.value());
        for (auto& x : out)
            if (x <= 0.0) x *= slope;
        const auto ia = a.id;
        return owner(a).push(a.rows(), a.cols(), std::move(out), [ia, slope](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            const auto& A = at(tp, ia).value;
            auto& ga = at(tp, ia).grad;
            for (std::size_t i = 0; i < G.size(); ++i) ga[i] += A[i] > 0.0 ? G[i] : slope * G[i];
        });
    }

    static var concat_cols(const std::vector<var>& parts) {
        if (parts.empty()) throw error("concat of nothing");
        const auto n = parts.front().rows();
        std::size_t m = 0;
        for (auto p : parts) {
            same_tape(parts.front(), p);
            if (p.rows() != n) throw error("concat_cols: row count mismatch");
            m += p.cols();
        }
        std::vector<double> out(n * m);
        std::vector<std::pair<std::size_t, std::size_t>> spans;  // (node id, column offset)
        std::size_t off = 0;
        for (auto p : parts) {
            const auto pc = p.cols();
            const auto& v = p.value();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < pc; ++j) out[i * m + off + j] = v[i * pc + j];
            spans.emplace_back(p.id, off);
            off += pc;
        }
        return owner(parts.front()).push(n, m, std::move(out), [spans, n, m](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            for (const auto& [id, off] : spans) {
                auto& nd = at(tp, id);
                const auto pc = nd.cols;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < pc; ++j) nd.grad[i * pc + j] += G[i * m + off + j];
            }
        });
    }

    /// Rows of `a` summed per group, optionally scaled by per-entry weights
    /// (an E x 1 variable aligned with the flattened group entries).
    static var segment_sum(var a, std::shared_ptr<const segments> seg, std::optional<var> weights = std::nullopt) {
        const auto m = a.cols();
        const auto G = seg->count();
        if (weights) {
            same_tape(a, *weights);
            if (weights->value().size() != seg->index.size()) throw error("segment_sum: weight count mismatch");
        }
        for (auto r : seg->index)
            if (r >= a.rows()) throw error("segment_sum: row index out of range");
        const auto& A = a.value();
        std::vector<double> out(G * m, 0.0);
        const std::vector<double>* W = weights ? &weights->value() : nullptr;
        for (std::size_t g = 0; g < G; ++g)
            for (std::size_t e = seg->offsets[g]; e < seg->offsets[g + 1]; ++e) {
                const double w = W ? (*W)[e] : 1.0;
                const auto r = seg->index[e];
                for (std::size_t j = 0; j < m; ++j) out[g * m + j] += w * A[r * m + j];
            }
        const auto ia = a.id;
        const std::size_t iw = weights ? weights->id : SIZE_MAX;
        return owner(a).push(G, m, std::move(out), [ia, iw, seg, m](tape& tp, std::size_t self) {
            const auto& Gd = at(tp, self).grad;
            const auto& A = at(tp, ia).value;
            const std::vector<double>* W = iw != SIZE_MAX ? &at(tp, iw).value : nullptr;
            auto& ga = at(tp, ia).grad;
            std::vector<double>* gw = iw != SIZE_MAX ? &at(tp, iw).grad : nullptr;
            for (std::size_t g = 0; g < seg->count(); ++g)
                for (std::size_t e = seg->offsets[g]; e < seg->offsets[g + 1]; ++e) {
                    const auto r = seg->index[e];
                    const double w = W ? (*W)[e] : 1.0;
                    double dw = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        ga[r * m + j] += w * Gd[g * m + j];
                        dw += A[r * m + j] * Gd[g * m + j];
                    }
                    if (gw) (*gw)[e] += dw;
                }
        });
    }

    static var gather_rows(var a, std::vector<std::size_t> rows) {
        auto seg = std::make_shared<segments>();
        for (auto r : rows) seg->add_group({r});
        return segment_sum(a, seg);
    }

    /// Softmax of an E x 1 score column within each group of consecutive
    /// entries (group g spans offsets[g] .. offsets[g+1]).
    static var segment_softmax(var scores, std::shared_ptr<const segments> seg) {
        if (scores.cols() != 1 || scores.rows() != seg->index.size()) throw error("segment_softmax: shape mismatch");
        const auto& S = scores.value();
        std::vector<double> out(S.size());
        for (std::size_t g = 0; g < seg->count(); ++g) {
            const auto lo = seg->offsets[g], hi = seg->offsets[g + 1];
            if (lo == hi) continue;
            double mx = S[lo];
            for (auto e = lo; e < hi; ++e) mx = std::max(mx, S[e]);
            double z = 0.0;
            for (auto e = lo; e < hi; ++e) z += (out[e] = std::exp(S[e] - mx));
            for (auto e = lo; e < hi; ++e) out[e] /= z;
        }
        const auto is = scores.id;
        return owner(scores).push(S.size(), 1, std::move(out), [is, seg](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            const auto& Y = at(tp, self).value;
            auto& gs = at(tp, is).grad;
            for (std::size_t g = 0; g < seg->count(); ++g) {
                const auto lo = seg->offsets[g], hi = seg->offsets[g + 1];
                double dot = 0.0;
                for (auto e = lo; e < hi; ++e) dot += Y[e] * G[e];
                for (auto e = lo; e < hi; ++e) gs[e] += Y[e] * (G[e] - dot);
            }
        });
    }

    enum class reduce_mode { mean, sum, max };

    /// Column-wise reduction over rows to a 1 x m row. Max routes the
    /// gradient to the lowest row index among ties.
    static var reduce_rows(var a, reduce_mode mode) {
        const auto n = a.rows(), m = a.cols();
        if (n == 0) throw error("reduce_rows: no rows");
        const auto& A = a.value();
        std::vector<double> out(m, 0.0);
        std::vector<std::size_t> arg;
        if (mode == reduce_mode::max) {
            arg.assign(m, 0);
            for (std::size_t j = 0; j < m; ++j) out[j] = A[j];
            for (std::size_t i = 1; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    if (A[i * m + j] > out[j]) {
                        out[j] = A[i * m + j];
                        arg[j] = i;
                    }
        } else {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) out[j] += A[i * m + j];
            if (mode == reduce_mode::mean)
                for (auto& x : out) x /= static_cast<double>(n);
        }
        const auto ia = a.id;
        return owner(a).push(1, m, std::move(out), [ia, mode, arg = std::move(arg), n, m](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            auto& ga = at(tp, ia).grad;
            if (mode == reduce_mode::max) {
                for (std::size_t j = 0; j < m; ++j) ga[arg[j] * m + j] += G[j];
                return;
            }
            const double c = mode == reduce_mode::mean ? 1.0 / static_cast<double>(n) : 1.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += c * G[j];
        });
    }

    /// Σ_i w_i · row_i for constant weights.
    static var weighted_rows(var a, std::vector<double> w) {
        const auto n = a.rows(), m = a.cols();
        if (w.size() != n) throw error("weighted_rows: one weight per row required");
        const auto& A = a.value();
        std::vector<double> out(m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out[j] += w[i] * A[i * m + j];
        const auto ia = a.id;
        return owner(a).push(1, m, std::move(out), [ia, w = std::move(w), n, m](tape& tp, std::size_t self) {
            const auto& G = at(tp, self).grad;
            auto& ga = at(tp, ia).grad;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += w[i] * G[j];
        });
    }

    /// u·v / (‖u‖‖v‖) for same-length rows.
    static var cosine(var u, var v) {
        same_tape(u, v);
        if (u.value().size() != v.value().size()) throw error("cosine: length mismatch");
        const auto& U = u.value();
        const auto& V = v.value();
        double uv = 0.0, uu = 0.0, vv = 0.0;
        for (std::size_t i = 0; i < U.size(); ++i) {
            uv += U[i] * V[i];
            uu += U[i] * U[i];
            vv += V[i] * V[i];
        }
        if (uu == 0.0 || vv == 0.0) throw error("cosine: zero-norm vector");
        const double nu = std::sqrt(uu), nv = std::sqrt(vv);
        const double c = uv / (nu * nv);
        const auto iu = u.id, iv = v.id;
        return owner(u).push(1, 1, {c}, [iu, iv, nu, nv, c](tape& tp, std::size_t self) {
            const double g = at(tp, self).grad[0];
            const auto& U = at(tp, iu).value;
            const auto& V = at(tp, iv).value;
            auto& gu = at(tp, iu).grad;
            auto& gv = at(tp, iv).grad;
            for (std::size_t i = 0; i < U.size(); ++i) {
                gu[i] += g * (V[i] / (nu * nv) - c * U[i] / (nu * nu));
                gv[i] += g * (U[i] / (nu * nv) - c * V[i] / (nv * nv));
            }
        });
    }

    static var sum_all(const std::vector<var>& xs) {
        if (xs.empty()) throw error("sum of nothing");
        var acc = xs.front();
        for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
        return acc;
    }
};

inline var matmul(var a, var b) { return ops::matmul(a, b); }
inline var operator+(var a, var b) { return ops::add(a, b); }
inline var operator-(var a, var b) { return ops::add(a, b, -1.0); }
inline var add_row(var a, var b) { return ops::add_row(a, b); }
inline var scale(var a, double c) { return ops::affine(a, c, 0.0); }
inline var add_const(var a, double c) { return ops::affine(a, 1.0, c); }
inline var mul_scalar(var a, var s) { return ops::mul_scalar(a, s); }
inline var relu(var a) { return ops::leaky_relu(a, 0.0); }
inline var leaky_relu(var a, double slope = 0.2) { return ops::leaky_relu(a, slope); }
inline var concat_cols(const std::vector<var>& parts) { return ops::concat_cols(parts); }
inline var cosine(var u, var v) { return ops::cosine(u, v); }

/// max{s_n − s_p + margin, 0}.
inline var triplet_loss(var s_pos, var s_neg, double margin) {
    if (margin < 0.0) throw error("triplet margin must be non-negative");
    return relu(add_const(s_neg - s_pos, margin));
}

inline double triplet_loss(double s_pos, double s_neg, double margin) {
    if (margin < 0.0) throw error("triplet margin must be non-negative");
    return std::max(s_neg - s_pos + margin, 0.0);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    tape t;
    return cosine(t.constant_row(u), t.constant_row(v)).scalar();
}

// --- MLP --------------------------------------------------------------------

/// Layer l stores "<prefix>.W<l>" (in x out) and "<prefix>.b<l>" (1 x out);
/// ReLU between layers, identity after the last.
struct mlp_spec {
    std::string prefix;
    std::vector<std::size_t> dims;  // input, hidden..., output

    std::size_t layers() const { return dims.size() - 1; }
    std::size_t in_dim() const { return dims.front(); }
    std::size_t out_dim() const { return dims.back(); }
    std::string weight(std::size_t l) const { return prefix + ".W" + std::to_string(l); }
    std::string bias(std::size_t l) const { return prefix + ".b" + std::to_string(l); }
};

/// Glorot-uniform weights, zero biases.
inline void init_mlp(param_store& store, const mlp_spec& spec, rng& r) {
    if (spec.dims.size() < 2) throw error("MLP needs at least one layer");
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const auto in = spec.dims[l], out = spec.dims[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        tensor w(in, out);
        for (auto& x : w.data) x = r.uniform(-a, a);
        store[spec.weight(l)] = std::move(w);
        store[spec.bias(l)] = tensor(1, out);
    }
}

/// Applies the MLP to every row of x.
inline var mlp_forward(tape& t, const param_store& store, const mlp_spec& spec, var x) {
    if (x.cols() != spec.in_dim()) {
        throw error("mlp " + spec.prefix + ": input has " + std::to_string(x.cols()) + " columns, expected "
                    + std::to_string(spec.in_dim()));
    }
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        x = add_row(matmul(x, t.param(store, spec.weight(l))), t.param(store, spec.bias(l)));
        if (l + 1 < spec.layers()) x = relu(x);
    }
    return x;
}

inline std::vector<double> mlp_forward(const param_store& store, const mlp_spec& spec, const std::vector<double>& x) {
    tape t;
    return mlp_forward(t, store, spec, t.constant_row(x)).value();
}

// --- Adam -------------------------------------------------------------------

struct adam_config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct adam_state {
    adam_config config;
    long step = 0;
    param_store m;
    param_store v;

    friend bool operator==(const adam_state& a, const adam_state& b) {
        return a.step == b.step && a.m == b.m && a.v == b.v && a.config.lr == b.config.lr
            && a.config.beta1 == b.config.beta1 && a.config.beta2 == b.config.beta2 && a.config.eps == b.config.eps;
    }
};

/// Bias-corrected Adam. Parameters without a gradient entry are untouched.
inline void adam_step(param_store& params, const param_store& grads, adam_state& st) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw error("adam: gradient for unknown parameter " + name);
        if (g.rows != it->second.rows || g.cols != it->second.cols) throw error("adam: gradient shape mismatch for " + name);
        for (double x : g.data)
            if (!std::isfinite(x)) throw error("adam: non-finite gradient for parameter " + name);
    }
    ++st.step;
    const auto& c = st.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
    for (const auto& [name, g] : grads) {
        auto& p = params.at(name);
        auto& m = st.m.try_emplace(name, p.rows, p.cols).first->second;
        auto& v = st.v.try_emplace(name, p.rows, p.cols).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g.data[i];
            v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

// --- checkpoints ------------------------------------------------------------

inline constexpr int checkpoint_format_version = 1;

inline nlohmann::json params_to_json(const param_store& ps) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, t] : ps) j[name] = {{"shape", {t.rows, t.cols}}, {"values", t.data}};
    return j;
}

inline param_store params_from_json(const nlohmann::json& j) {
    param_store ps;
    for (const auto& [name, jt] : j.items()) {
        const auto shape = jt.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2) throw error("checkpoint: parameter " + name + " must have a rank-2 shape");
        ps.emplace(name, tensor(shape[0], shape[1], jt.at("values").get<std::vector<double>>()));
    }
    return ps;
}

struct checkpoint {
    param_store params;
    adam_state optimizer;
    /// Free-form metadata (model configuration, training summary).
    nlohmann::json meta = nlohmann::json::object();
};

inline std::string serialize_checkpoint(const checkpoint& c) {
    nlohmann::json j;
    j["format"] = "cmaprank-checkpoint";
    j["version"] = checkpoint_format_version;
    j["meta"] = c.meta;
    j["params"] = params_to_json(c.params);
    const auto& o = c.optimizer;
    j["optimizer"] = {{"kind", "adam"},
                      {"lr", o.config.lr},
                      {"beta1", o.config.beta1},
                      {"beta2", o.config.beta2},
                      {"eps", o.config.eps},
                      {"step", o.step},
                      {"m", params_to_json(o.m)},
                      {"v", params_to_json(o.v)}};
    return j.dump();
}

inline checkpoint parse_checkpoint(const std::string& content) {
    try {
        auto j = nlohmann::json::parse(content);
        if (j.value("format", "") != "cmaprank-checkpoint") throw error("not a checkpoint file");
        if (j.value("version", 0) != checkpoint_format_version) throw error("unsupported checkpoint version");
        checkpoint c;
        c.meta = j.value("meta", nlohmann::json::object());
        c.params = params_from_json(j.at("params"));
        const auto& o = j.at("optimizer");
        c.optimizer.config = {o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                              o.at("eps").get<double>()};
        c.optimizer.step = o.at("step").get<long>();
        c.optimizer.m = params_from_json(o.at("m"));
        c.optimizer.v = params_from_json(o.at("v"));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace cmaprank
