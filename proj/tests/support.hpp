#pragma once

// Helpers shared by the unit and acceptance binaries.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cmaprank/graphmodels.hpp"
#include "cmaprank/tensorcore.hpp"
#include "cmaprank/util.hpp"

namespace cmaprank::testing {

inline tensor random_tensor(rng& r, std::size_t rows, std::size_t cols) {
    tensor t(rows, cols);
    for (auto& x : t.data) x = r.normal();
    return t;
}

/// Random undirected graph on `n` nodes with edge probability `p`.
inline std::vector<std::pair<int, int>> random_edges(rng& r, std::size_t n, double p) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (r.bernoulli(p)) edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
    return edges;
}

/// Random graph with positive tf-idf weights and, when `walks`, a walk set.
inline graph_input random_graph(rng& r, std::size_t n, std::size_t in_dim, const gnn_config& cfg, bool walks) {
    std::vector<double> w(n);
    for (auto& x : w) x = r.uniform(0.1, 2.0);
    auto g = make_graph_input(random_tensor(r, n, in_dim), random_edges(r, n, r.uniform(0.2, 0.8)), w);
    if (walks && !g.edges.empty()) set_walks(g, sample_walks(g.adjacency, cfg.walk_lengths, 2, r.next()));
    return g;
}

/// The same graph with node i renamed to perm[i]; walks are renamed too.
inline graph_input permute_graph(const graph_input& g, const std::vector<int>& perm) {
    const auto n = g.node_count(), d = g.features.cols;
    tensor f(n, d);
    std::vector<double> w(g.tfidf.empty() ? 0 : n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = static_cast<std::size_t>(perm[i]);
        for (std::size_t c = 0; c < d; ++c) f(p, c) = g.features(i, c);
        if (!w.empty()) w[p] = g.tfidf[i];
    }
    std::vector<std::pair<int, int>> edges;
    for (const auto& [a, b] : g.edges) edges.emplace_back(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    auto out = make_graph_input(std::move(f), std::move(edges), std::move(w));
    walk_set ws = g.walks;
    for (auto& walk : ws.walks)
        for (auto& v : walk) v = perm[static_cast<std::size_t>(v)];
    set_walks(out, std::move(ws));
    return out;
}

/// Small model dimensions so exhaustive checks stay cheap.
inline gnn_config small_config(model_kind kind, std::size_t in_dim = 4) {
    gnn_config c;
    c.kind = kind;
    c.in_dim = in_dim;
    c.hidden = 5;
    c.out_dim = 3;
    c.layers = 2;
    c.mlp_layers = 2;
    c.walk_lengths = {2, 3};
    c.walks_per_node = 2;
    return c;
}

inline constexpr model_kind all_kinds[] = {model_kind::gin, model_kind::gat, model_kind::npool, model_kind::epool,
                                          model_kind::rwpool};

/// Every entry (biases and ε included) drawn from N(0, 0.5²).
inline param_store random_params(const gnn_config& cfg, rng& r) {
    auto ps = init_params(cfg, r.next());
    for (auto& [_, t] : ps)
        for (auto& x : t.data) x = 0.5 * r.normal();
    return ps;
}

using loss_fn = std::function<var(tape&, const param_store&)>;

struct grad_check_outcome {
    bool ok = true;
    double worst = 0.0;  // largest relative error accepted or rejected
    std::size_t checked = 0;
    std::size_t kink_retries = 0;
    std::string failure;
};

inline double loss_value(const loss_fn& f, const param_store& ps) {
    tape t;
    return f(t, ps).scalar();
}

inline double analytic_entry(const loss_fn& f, const param_store& ps, const std::string& name, std::size_t i) {
    tape t;
    auto l = f(t, ps);
    t.backward(l);
    const auto g = t.gradients();
    auto it = g.find(name);
    return it == g.end() ? 0.0 : it->second.data[i];
}

/// Central differences against reverse mode for every parameter entry,
/// scored as |analytic - fd| / max(1, |fd|). When a coordinate fails and
/// the analytic derivative jumps between x - h and x + h (a ReLU or max
/// kink inside the step), the step shrinks tenfold, at most three times.
inline grad_check_outcome check_gradients(const param_store& ps, const loss_fn& f, double tol = 1e-4, double h = 1e-5) {
    grad_check_outcome out;
    tape t;
    auto l = f(t, ps);
    t.backward(l);
    const auto grads = t.gradients();
    for (const auto& [name, value] : ps) {
        for (std::size_t i = 0; i < value.size(); ++i) {
            auto it = grads.find(name);
            const double a = it == grads.end() ? 0.0 : it->second.data[i];
            double step = h, err = 0.0, fd = 0.0;
            for (int attempt = 0;; ++attempt) {
                auto plus = ps, minus = ps;
                plus[name].data[i] += step;
                minus[name].data[i] -= step;
                fd = (loss_value(f, plus) - loss_value(f, minus)) / (2.0 * step);
                err = std::abs(a - fd) / std::max(1.0, std::abs(fd));
                if (err < tol || attempt == 3) break;
                const double jump = std::abs(analytic_entry(f, plus, name, i) - analytic_entry(f, minus, name, i));
                if (jump <= tol * std::max(1.0, std::abs(a))) break;
                ++out.kink_retries;
                step /= 10.0;
            }
            ++out.checked;
            out.worst = std::max(out.worst, err);
            if (err >= tol && out.ok) {
                out.ok = false;
                out.failure = name + "[" + std::to_string(i) + "]: analytic " + exact_double(a) + ", numeric "
                              + exact_double(fd) + ", relative error " + exact_double(err);
            }
        }
    }
    return out;
}

/// c · h_G for a fixed random c, so every output coordinate carries gradient.
inline loss_fn encoder_loss(const gnn_config& cfg, const graph_input& g, std::vector<double> c) {
    return [cfg, &g, c = std::move(c)](tape& t, const param_store& ps) {
        auto h = encode(t, ps, cfg, g);
        if (!h) throw error("empty graph in encoder_loss");
        return matmul(*h, t.constant(tensor(c.size(), 1, c)));
    };
}

}  // namespace cmaprank::testing
