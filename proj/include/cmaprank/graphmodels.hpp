#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmaprank/conceptmap.hpp"
#include "cmaprank/embedstore.hpp"
#include "cmaprank/lexindex.hpp"
#include "cmaprank/tensorcore.hpp"

namespace cmaprank {

enum class model_kind { gin, gat, npool, epool, rwpool };
enum class readout_mode { mean, sum, max, tfidf };
enum class eps_mode { learnable, fixed };

inline std::string to_string(model_kind k) {
    switch (k) {
    case model_kind::gin: return "gin";
    case model_kind::gat: return "gat";
    case model_kind::npool: return "npool";
    case model_kind::epool: return "epool";
    case model_kind::rwpool: return "rwpool";
    }
    return "?";
}

inline model_kind parse_model_kind(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "gin") return model_kind::gin;
    if (s == "gat") return model_kind::gat;
    if (s == "npool" || s == "n-pool") return model_kind::npool;
    if (s == "epool" || s == "e-pool") return model_kind::epool;
    if (s == "rwpool" || s == "rw-pool") return model_kind::rwpool;
    throw error("unknown model kind: " + name + " (expected gin, gat, npool, epool, rwpool)");
}

inline std::string to_string(readout_mode m) {
    switch (m) {
    case readout_mode::mean: return "mean";
    case readout_mode::sum: return "sum";
    case readout_mode::max: return "max";
    case readout_mode::tfidf: return "tfidf";
    }
    return "?";
}

inline readout_mode parse_readout(const std::string& s) {
    if (s == "mean") return readout_mode::mean;
    if (s == "sum") return readout_mode::sum;
    if (s == "max") return readout_mode::max;
    if (s == "tfidf") return readout_mode::tfidf;
    throw error("unknown read-out: " + s + " (expected mean, sum, max, tfidf)");
}

struct gnn_config {
    model_kind kind = model_kind::epool;
    std::size_t in_dim = 50;
    std::size_t hidden = 64;
    std::size_t out_dim = 64;
    /// Message-passing layers K (GIN / GAT).
    int layers = 2;
    /// Linear layers per MLP.
    int mlp_layers = 2;
    eps_mode eps = eps_mode::learnable;
    double eps_init = 0.0;
    /// Unset: tf-idf for GIN / GAT, mean for the pooling functions.
    std::optional<readout_mode> readout;
    std::vector<int> walk_lengths{2, 3, 4};
    int walks_per_node = 5;
    double attention_slope = 0.2;

    bool message_passing() const { return kind == model_kind::gin || kind == model_kind::gat; }

    readout_mode effective_readout() const {
        if (readout) return *readout;
        return message_passing() ? readout_mode::tfidf : readout_mode::mean;
    }

    /// Dimension of h_G.
    std::size_t graph_dim() const { return kind == model_kind::epool ? 2 * out_dim : out_dim; }

    void validate() const {
        if (in_dim == 0 || hidden == 0 || out_dim == 0) throw error("model dimensions must be positive");
        if (message_passing() && layers < 1) throw error("GIN/GAT need at least one layer");
        if (mlp_layers < 1) throw error("MLPs need at least one layer");
        if (walks_per_node < 1) throw error("walks_per_node must be positive");
        for (int l : walk_lengths)
            if (l < 2) throw error("walk lengths must be at least 2");
    }
};

inline nlohmann::json to_json(const gnn_config& c) {
    return {{"kind", to_string(c.kind)},
            {"in_dim", c.in_dim},
            {"hidden", c.hidden},
            {"out_dim", c.out_dim},
            {"layers", c.layers},
            {"mlp_layers", c.mlp_layers},
            {"eps", c.eps == eps_mode::learnable ? "learnable" : "fixed"},
            {"eps_init", c.eps_init},
            {"readout", c.readout ? to_string(*c.readout) : "auto"},
            {"walk_lengths", c.walk_lengths},
            {"walks_per_node", c.walks_per_node},
            {"attention_slope", c.attention_slope}};
}

inline gnn_config gnn_config_from_json(const nlohmann::json& j) {
    gnn_config c;
    c.kind = parse_model_kind(j.value("kind", to_string(c.kind)));
    c.in_dim = j.value("in_dim", c.in_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.out_dim = j.value("out_dim", c.out_dim);
    c.layers = j.value("layers", c.layers);
    c.mlp_layers = j.value("mlp_layers", c.mlp_layers);
    const auto eps = j.value("eps", std::string("learnable"));
    if (eps != "learnable" && eps != "fixed") throw error("eps must be \"learnable\" or \"fixed\"");
    c.eps = eps == "learnable" ? eps_mode::learnable : eps_mode::fixed;
    c.eps_init = j.value("eps_init", c.eps_init);
    if (const auto r = j.value("readout", std::string("auto")); r != "auto") c.readout = parse_readout(r);
    c.walk_lengths = j.value("walk_lengths", c.walk_lengths);
    c.walks_per_node = j.value("walks_per_node", c.walks_per_node);
    c.attention_slope = j.value("attention_slope", c.attention_slope);
    c.validate();
    return c;
}

// --- walks ------------------------------------------------------------------

struct walk_set {
    std::vector<std::vector<int>> walks;
    std::vector<int> lengths;
    std::uint64_t seed = 0;

    bool empty() const { return walks.empty(); }
};

/// For every node with a neighbour, for every length, `per_node` uniform
/// random walks of that many nodes starting there.
inline walk_set sample_walks(const std::vector<std::vector<int>>& adjacency, const std::vector<int>& lengths,
                             int per_node, std::uint64_t seed) {
    walk_set ws{{}, lengths, seed};
    rng r(seed);
    for (std::size_t start = 0; start < adjacency.size(); ++start) {
        if (adjacency[start].empty()) continue;
        for (int len : lengths) {
            if (len < 2) throw error("walk length must be at least 2");
            for (int k = 0; k < per_node; ++k) {
                std::vector<int> w{static_cast<int>(start)};
                while (static_cast<int>(w.size()) < len) {
                    const auto& nb = adjacency[static_cast<std::size_t>(w.back())];
                    w.push_back(nb[r.index(nb.size())]);
                }
                ws.walks.push_back(std::move(w));
            }
        }
    }
    return ws;
}

// --- graph input ------------------------------------------------------------

/// Everything an encoder reads about one concept map.
struct graph_input {
    std::string doc_id;
    tensor features;  // |V| x in_dim
    std::vector<std::pair<int, int>> edges;  // undirected, i < j
    std::vector<std::vector<int>> adjacency;
    std::vector<double> tfidf;  // per node; empty when unavailable
    walk_set walks;

    std::shared_ptr<const segments> neighbors;  // group i: N(i)
    std::shared_ptr<const segments> centers;    // one entry per (i, j in N(i)): i
    std::shared_ptr<const segments> edge_src;
    std::shared_ptr<const segments> edge_dst;
    std::shared_ptr<const segments> walk_members;

    std::size_t node_count() const { return features.rows; }
    bool empty() const { return features.rows == 0; }
};

inline void set_walks(graph_input& g, walk_set ws) {
    g.walks = std::move(ws);
    g.walk_members = std::make_shared<const segments>(segments::from(g.walks.walks));
}

inline graph_input make_graph_input(tensor features, std::vector<std::pair<int, int>> edges,
                                    std::vector<double> tfidf = {}, std::string doc_id = {}) {
    graph_input g;
    g.doc_id = std::move(doc_id);
    const auto n = features.rows;
    g.features = std::move(features);
    for (auto& e : edges) {
        if (e.first > e.second) std::swap(e.first, e.second);
        if (e.first == e.second || e.first < 0 || static_cast<std::size_t>(e.second) >= n) {
            throw error("graph edge out of range or self-loop");
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    g.edges = std::move(edges);
    g.adjacency.assign(n, {});
    for (const auto& [a, b] : g.edges) {
        g.adjacency[a].push_back(b);
        g.adjacency[b].push_back(a);
    }
    for (auto& a : g.adjacency) std::sort(a.begin(), a.end());
    if (!tfidf.empty() && tfidf.size() != n) throw error("tf-idf weights must cover every node");
    g.tfidf = std::move(tfidf);

    auto nb = std::make_shared<segments>(segments::from(g.adjacency));
    auto ct = std::make_shared<segments>();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < g.adjacency[i].size(); ++k) ct->index.push_back(i);
    ct->offsets = nb->offsets;
    auto src = std::make_shared<segments>(), dst = std::make_shared<segments>();
    for (const auto& [a, b] : g.edges) {
        src->add_group({static_cast<std::size_t>(a)});
        dst->add_group({static_cast<std::size_t>(b)});
    }
    g.neighbors = std::move(nb);
    g.centers = std::move(ct);
    g.edge_src = std::move(src);
    g.edge_dst = std::move(dst);
    set_walks(g, {});
    return g;
}

/// Node features from the embedding table, tf-idf weights from the index
/// (when given) and, for RW-Pool, walks seeded per document.
inline graph_input prepare_graph(const concept_map& m, const embedding_table& table, const inverted_index* index,
                                 const gnn_config& cfg, std::uint64_t walk_seed) {
    tensor feats(m.node_count(), table.dim());
    std::vector<double> weights;
    for (std::size_t i = 0; i < m.node_count(); ++i) {
        const auto v = node_features(table, m.nodes[i]);
        std::copy(v.begin(), v.end(), feats.data.begin() + static_cast<std::ptrdiff_t>(i * table.dim()));
        if (index) weights.push_back(tfidf_weight(*index, m.nodes[i].mention, m.nodes[i].freq));
    }
    std::vector<std::pair<int, int>> edges;
    for (const auto& [e, _] : m.edges) edges.push_back(e);
    auto g = make_graph_input(std::move(feats), std::move(edges), std::move(weights), m.doc_id);
    if (cfg.kind == model_kind::rwpool && !g.edges.empty()) {
        set_walks(g, sample_walks(g.adjacency, cfg.walk_lengths, cfg.walks_per_node, derive_seed(walk_seed, m.doc_id)));
    }
    return g;
}

// --- parameters -------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> mlp_dims(std::size_t in, std::size_t hidden, std::size_t out, int layers) {
    std::vector<std::size_t> d{in};
    for (int l = 1; l < layers; ++l) d.push_back(hidden);
    d.push_back(out);
    return d;
}

inline std::string layer_prefix(const gnn_config& c, int k) { return to_string(c.kind) + "." + std::to_string(k); }

}  // namespace detail

/// MLP of message-passing layer k (1-based).
inline mlp_spec layer_mlp(const gnn_config& c, int k) {
    const auto in = k == 1 ? c.in_dim : c.hidden;
    return {detail::layer_prefix(c, k) + ".mlp", detail::mlp_dims(in, c.hidden, c.hidden, c.mlp_layers)};
}

/// Shared node MLP of the pooling functions.
inline mlp_spec pool_mlp(const gnn_config& c) {
    return {"pool.mlp", detail::mlp_dims(c.in_dim, c.hidden, c.out_dim, c.mlp_layers)};
}

inline std::string eps_name(const gnn_config& c, int k) { return detail::layer_prefix(c, k) + ".eps"; }

struct attention_names {
    std::string self, neighbor, bias;
};

inline attention_names attention_params(const gnn_config& c, int k) {
    const auto p = detail::layer_prefix(c, k) + ".att";
    return {p + ".self", p + ".nbr", p + ".bias"};
}

inline std::size_t concat_readout_dim(const gnn_config& c) {
    return c.in_dim + static_cast<std::size_t>(c.layers) * c.hidden;
}

inline param_store init_params(const gnn_config& cfg, std::uint64_t seed) {
    cfg.validate();
    rng r(seed);
    param_store ps;
    auto glorot = [&](std::size_t in, std::size_t out) {
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        tensor w(in, out);
        for (auto& x : w.data) x = r.uniform(-a, a);
        return w;
    };
    if (cfg.message_passing()) {
        for (int k = 1; k <= cfg.layers; ++k) {
            init_mlp(ps, layer_mlp(cfg, k), r);
            ps[eps_name(cfg, k)] = tensor(1, 1, cfg.eps_init);
            if (cfg.kind == model_kind::gat) {
                const auto dim = k == 1 ? cfg.in_dim : cfg.hidden;
                const auto names = attention_params(cfg, k);
                ps[names.self] = glorot(dim, 1);
                ps[names.neighbor] = glorot(dim, 1);
                ps[names.bias] = tensor(1, 1);
            }
        }
        const auto prefix = to_string(cfg.kind) + ".out";
        ps[prefix + ".W"] = glorot(concat_readout_dim(cfg), cfg.out_dim);
        ps[prefix + ".b"] = tensor(1, cfg.out_dim);
    } else {
        init_mlp(ps, pool_mlp(cfg), r);
    }
    ps["query.W"] = glorot(cfg.in_dim, cfg.graph_dim());
    return ps;
}

// --- building blocks --------------------------------------------------------

/// Pools a set of row vectors into one row. `weights` is required for tfidf.
inline var readout(var rows, readout_mode mode, const std::vector<double>& weights = {}) {
    if (rows.rows() == 0) throw error("read-out over an empty set");
    switch (mode) {
    case readout_mode::mean: return ops::reduce_rows(rows, ops::reduce_mode::mean);
    case readout_mode::sum: return ops::reduce_rows(rows, ops::reduce_mode::sum);
    case readout_mode::max: return ops::reduce_rows(rows, ops::reduce_mode::max);
    case readout_mode::tfidf:
        if (weights.size() != rows.rows()) throw error("tf-idf read-out needs one weight per element");
        return ops::weighted_rows(rows, weights);
    }
    throw error("unreachable read-out mode");
}

inline std::vector<double> readout(const std::vector<std::vector<double>>& rows, readout_mode mode,
                                   const std::vector<double>& weights = {}) {
    if (rows.empty()) throw error("read-out over an empty set");
    tape t;
    tensor m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m.cols) throw error("read-out rows differ in length");
        std::copy(rows[i].begin(), rows[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    }
    return readout(t.constant(std::move(m)), mode, weights).value();
}

inline var layer_eps(tape& t, const param_store& ps, const gnn_config& cfg, int k) {
    const auto& name = eps_name(cfg, k);
    if (cfg.eps == eps_mode::learnable) return t.param(ps, name);
    return t.constant(ps.at(name));
}

/// h_i' = MLP((1 + ε) h_i + Σ_{j∈N(i)} h_j).
inline var gin_layer(tape& t, const param_store& ps, const gnn_config& cfg, int k, const graph_input& g, var h) {
    auto self = mul_scalar(h, add_const(layer_eps(t, ps, cfg, k), 1.0));
    auto agg = g.edges.empty() ? self : self + ops::segment_sum(h, g.neighbors);
    return mlp_forward(t, ps, layer_mlp(cfg, k), agg);
}

/// Attention weights α_ij, one entry per (i, j ∈ N(i)) in adjacency order,
/// softmaxed within each centre node.
inline var gat_attention(tape& t, const param_store& ps, const gnn_config& cfg, int k, const graph_input& g, var h) {
    const auto names = attention_params(cfg, k);
    auto s_self = matmul(h, t.param(ps, names.self));
    auto s_nbr = matmul(h, t.param(ps, names.neighbor));
    auto per_entry_self = ops::gather_rows(s_self, g.centers->index);
    auto per_entry_nbr = ops::gather_rows(s_nbr, g.neighbors->index);
    auto raw = add_row(per_entry_self + per_entry_nbr, t.param(ps, names.bias));
    return ops::segment_softmax(leaky_relu(raw, cfg.attention_slope), g.neighbors);
}

/// Softmax over plain scores; used to sanity-check attention arithmetic.
inline std::vector<double> attention_softmax(const std::vector<double>& scores) {
    if (scores.empty()) return {};
    tape t;
    auto seg = std::make_shared<segments>();
    std::vector<std::size_t> all(scores.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    seg->add_group(all);
    return ops::segment_softmax(t.constant(tensor(scores.size(), 1, scores)), seg).value();
}

/// h_i' = MLP((1 + ε) h_i + Σ_{j∈N(i)} α_ij h_j).
inline var gat_layer(tape& t, const param_store& ps, const gnn_config& cfg, int k, const graph_input& g, var h) {
    auto self = mul_scalar(h, add_const(layer_eps(t, ps, cfg, k), 1.0));
    if (g.edges.empty()) return mlp_forward(t, ps, layer_mlp(cfg, k), self);
    auto alpha = gat_attention(t, ps, cfg, k, g, h);
    auto agg = self + ops::segment_sum(h, g.neighbors, alpha);
    return mlp_forward(t, ps, layer_mlp(cfg, k), agg);
}

/// Node states h^(0..K) of GIN / GAT.
inline std::vector<var> message_passing_states(tape& t, const param_store& ps, const gnn_config& cfg,
                                               const graph_input& g) {
    std::vector<var> states{t.constant(g.features)};
    for (int k = 1; k <= cfg.layers; ++k) {
        const auto h = states.back();
        states.push_back(cfg.kind == model_kind::gat ? gat_layer(t, ps, cfg, k, g, h) : gin_layer(t, ps, cfg, k, g, h));
    }
    return states;
}

/// CONCAT(READOUT(h^(k)) | k = 0..K), before the output projection.
inline var concat_readout(tape& t, const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    std::vector<var> pooled;
    for (auto h : message_passing_states(t, ps, cfg, g)) pooled.push_back(readout(h, cfg.effective_readout(), g.tfidf));
    return concat_cols(pooled);
}

inline var encode_gnn(tape& t, const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    const auto prefix = to_string(cfg.kind) + ".out";
    return add_row(matmul(concat_readout(t, ps, cfg, g), t.param(ps, prefix + ".W")), t.param(ps, prefix + ".b"));
}

inline var encode_npool(tape& t, const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    auto z = mlp_forward(t, ps, pool_mlp(cfg), t.constant(g.features));
    return readout(z, cfg.effective_readout(), g.tfidf);
}

/// Each undirected edge contributes ½[cat(z_i, z_j) + cat(z_j, z_i)]. An
/// edgeless graph yields cat(N-Pool, N-Pool), keeping the 2d output width.
inline var encode_epool(tape& t, const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    auto z = mlp_forward(t, ps, pool_mlp(cfg), t.constant(g.features));
    const auto mode = cfg.effective_readout();
    if (g.edges.empty()) {
        auto n = readout(z, mode, g.tfidf);
        return concat_cols({n, n});
    }
    auto zi = ops::segment_sum(z, g.edge_src);
    auto zj = ops::segment_sum(z, g.edge_dst);
    auto edge_emb = scale(concat_cols({zi, zj}) + concat_cols({zj, zi}), 0.5);
    std::vector<double> w;
    if (mode == readout_mode::tfidf) {
        if (g.tfidf.empty()) throw error("tf-idf read-out needs node weights");
        for (const auto& [a, b] : g.edges) w.push_back(0.5 * (g.tfidf[a] + g.tfidf[b]));
    }
    return readout(edge_emb, mode, w);
}

/// Each walk contributes Σ z_v over its nodes; no walks falls back to N-Pool.
inline var encode_rwpool(tape& t, const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    if (g.walks.empty()) return encode_npool(t, ps, cfg, g);
    auto z = mlp_forward(t, ps, pool_mlp(cfg), t.constant(g.features));
    auto walk_emb = ops::segment_sum(z, g.walk_members);
    const auto mode = cfg.effective_readout();
    std::vector<double> w;
    if (mode == readout_mode::tfidf) {
        if (g.tfidf.empty()) throw error("tf-idf read-out needs node weights");
        for (const auto& walk : g.walks.walks) {
            double s = 0.0;
            for (int v : walk) s += g.tfidf[v];
            w.push_back(s / static_cast<double>(walk.size()));
        }
    }
    return readout(walk_emb, mode, w);
}

/// h_G for any model kind; nullopt for an empty graph (caller falls back
/// to the first-stage score).
inline std::optional<var> encode(tape& t, const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    if (g.empty()) return std::nullopt;
    switch (cfg.kind) {
    case model_kind::gin:
    case model_kind::gat: return encode_gnn(t, ps, cfg, g);
    case model_kind::npool: return encode_npool(t, ps, cfg, g);
    case model_kind::epool: return encode_epool(t, ps, cfg, g);
    case model_kind::rwpool: return encode_rwpool(t, ps, cfg, g);
    }
    return std::nullopt;
}

inline std::optional<std::vector<double>> encode(const param_store& ps, const gnn_config& cfg, const graph_input& g) {
    tape t;
    auto h = encode(t, ps, cfg, g);
    if (!h) return std::nullopt;
    return h->value();
}

/// W_q · h_Q: maps the token-mean query vector into h_G's space.
inline var project_query(tape& t, const param_store& ps, const std::vector<double>& h_q) {
    return matmul(t.constant_row(h_q), t.param(ps, "query.W"));
}

}  // namespace cmaprank
