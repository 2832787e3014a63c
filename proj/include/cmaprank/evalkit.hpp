#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cmaprank/conceptmap.hpp"
#include "cmaprank/corpus.hpp"
#include "cmaprank/lexindex.hpp"
#include "cmaprank/util.hpp"

namespace cmaprank {

// --- retrieval metrics ------------------------------------------------------

inline std::vector<std::string> metric_names(const std::vector<int>& ks) {
    std::vector<std::string> out;
    for (int k : ks) {
        out.push_back("ndcg@" + std::to_string(k));
        out.push_back("p@" + std::to_string(k));
        out.push_back("r@" + std::to_string(k));
    }
    return out;
}

struct metric_report {
    std::vector<int> ks;
    /// query id -> metric name -> value
    std::map<std::string, std::map<std::string, double>> per_query;
    std::map<std::string, double> macro;
    /// Run queries without judgments.
    std::vector<std::string> excluded;

    double at(const std::string& metric) const {
        auto it = macro.find(metric);
        if (it == macro.end()) throw error("metric not in report: " + metric);
        return it->second;
    }

    friend bool operator==(const metric_report&, const metric_report&) = default;
};

inline double ndcg_gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }
inline double ndcg_discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

/// Metrics of one ranked list against one query's judgments. A query
/// without positives scores zero throughout.
inline std::map<std::string, double> eval_query(const std::vector<scored_doc>& ranked,
                                                const std::map<std::string, int>& judged, const std::vector<int>& ks) {
    std::vector<int> ideal;
    std::size_t n_pos = 0;
    for (const auto& [_, g] : judged) {
        ideal.push_back(g);
        if (g > 0) ++n_pos;
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    std::map<std::string, double> out;
    for (int k : ks) {
        if (k <= 0) throw error("metric cutoff must be positive");
        const auto ks_ = std::to_string(k);
        double dcg = 0.0, idcg = 0.0;
        std::size_t hits = 0;
        const auto depth = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
        for (std::size_t r = 0; r < depth; ++r) {
            auto it = judged.find(ranked[r].doc_id);
            const int g = it == judged.end() ? 0 : it->second;
            if (g > 0) ++hits;
            dcg += ndcg_gain(g) * ndcg_discount(r + 1);
        }
        for (std::size_t r = 0; r < std::min<std::size_t>(static_cast<std::size_t>(k), ideal.size()); ++r)
            idcg += ndcg_gain(ideal[r]) * ndcg_discount(r + 1);
        const bool any = n_pos > 0;
        out["ndcg@" + ks_] = any && idcg > 0.0 ? dcg / idcg : 0.0;
        out["p@" + ks_] = any ? static_cast<double>(hits) / k : 0.0;
        out["r@" + ks_] = any ? static_cast<double>(hits) / static_cast<double>(n_pos) : 0.0;
    }
    return out;
}

/// Macro averages are taken over run queries that have judgments.
inline metric_report eval_run(const run_ranking& run, const qrels& judgments, const std::vector<int>& ks = {10, 20}) {
    metric_report rep;
    rep.ks = ks;
    for (const auto& [qid, docs] : run) {
        if (!judgments.has_query(qid)) {
            rep.excluded.push_back(qid);
            continue;
        }
        rep.per_query[qid] = eval_query(docs, judgments.for_query(qid), ks);
    }
    for (const auto& name : metric_names(ks)) {
        double s = 0.0;
        for (const auto& [_, m] : rep.per_query) s += m.at(name);
        rep.macro[name] = rep.per_query.empty() ? 0.0 : s / static_cast<double>(rep.per_query.size());
    }
    return rep;
}

/// CSV with a row per query and a final "all" row of macro averages.
inline std::string metrics_csv(const metric_report& rep, const std::string& run_name = {}) {
    const auto names = metric_names(rep.ks);
    std::string out = run_name.empty() ? "query" : "run,query";
    for (const auto& n : names) out += "," + n;
    out += "\n";
    auto row = [&](const std::string& q, const std::map<std::string, double>& m) {
        if (!run_name.empty()) out += run_name + ",";
        out += q;
        for (const auto& n : names) out += "," + format_double(m.at(n));
        out += "\n";
    };
    for (const auto& [q, m] : rep.per_query) row(q, m);
    row("all", rep.macro);
    return out;
}

// --- concept-map utility assessment -----------------------------------------

enum class pair_type { pos_pos, pos_neg, pos_bm };

inline std::string to_string(pair_type t) {
    switch (t) {
    case pair_type::pos_pos: return "Pos-Pos";
    case pair_type::pos_neg: return "Pos-Neg";
    case pair_type::pos_bm: return "Pos-BM";
    }
    return "?";
}

struct doc_pair {
    std::string query_id;
    std::string first;
    std::string second;

    friend bool operator==(const doc_pair&, const doc_pair&) = default;
};

struct pair_sets {
    std::vector<doc_pair> pos_pos;
    std::vector<doc_pair> pos_neg;
    std::vector<doc_pair> pos_bm;

    const std::vector<doc_pair>& of(pair_type t) const {
        return t == pair_type::pos_pos ? pos_pos : t == pair_type::pos_neg ? pos_neg : pos_bm;
    }
};

struct pair_options {
    /// Per query and pair type; 0 means unlimited.
    std::size_t cap = 0;
    std::size_t bm_depth = 20;
    std::uint64_t seed = 1;
};

namespace detail {

inline void cap_pairs(std::vector<doc_pair>& pairs, std::size_t cap, rng& r) {
    if (cap == 0 || pairs.size() <= cap) return;
    r.shuffle(pairs);
    pairs.resize(cap);
    std::sort(pairs.begin(), pairs.end(), [](const doc_pair& a, const doc_pair& b) {
        return std::tie(a.first, a.second) < std::tie(b.first, b.second);
    });
}

}  // namespace detail

/// Exhaustive per-query pairs: both relevant; relevant with judged
/// irrelevant; relevant with a stage-one top-`bm_depth` document other than
/// itself.
inline pair_sets build_pairs(const qrels& judgments, const run_ranking& stage_one, const pair_options& opt = {}) {
    pair_sets out;
    for (const auto& qid : judgments.query_ids()) {
        rng r(derive_seed(opt.seed, qid));
        const auto pos = judgments.positives(qid);
        const auto neg = judgments.negatives(qid);
        std::vector<doc_pair> pp, pn, pb;
        for (std::size_t i = 0; i < pos.size(); ++i)
            for (std::size_t j = i + 1; j < pos.size(); ++j) pp.push_back({qid, pos[i], pos[j]});
        for (const auto& p : pos)
            for (const auto& n : neg) pn.push_back({qid, p, n});
        if (auto it = stage_one.find(qid); it != stage_one.end()) {
            const auto depth = std::min(opt.bm_depth, it->second.size());
            for (const auto& p : pos)
                for (std::size_t k = 0; k < depth; ++k)
                    if (it->second[k].doc_id != p) pb.push_back({qid, p, it->second[k].doc_id});
        }
        detail::cap_pairs(pp, opt.cap, r);
        detail::cap_pairs(pn, opt.cap, r);
        detail::cap_pairs(pb, opt.cap, r);
        out.pos_pos.insert(out.pos_pos.end(), pp.begin(), pp.end());
        out.pos_neg.insert(out.pos_neg.end(), pn.begin(), pn.end());
        out.pos_bm.insert(out.pos_bm.end(), pb.begin(), pb.end());
    }
    return out;
}

struct similarity {
    double ncr = 0.0;
    double ncr_plus = 0.0;
    double ecr = 0.0;
    double ecr_plus = 0.0;

    friend bool operator==(const similarity&, const similarity&) = default;
};

/// Node weight from a mention and its tf averaged over the two maps.
using node_weight_fn = std::function<double(const std::string& mention, double mean_tf)>;

inline node_weight_fn tfidf_node_weight(const inverted_index& idx) {
    return [&idx](const std::string& mention, double mean_tf) {
        return tfidf_weight(idx.doc_count(), idx.concept_df(mention), mean_tf);
    };
}

namespace detail {

inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace detail

/// Node and edge coincidence rates between two maps, with nodes identified
/// by mention. An empty `weight` means uniform weights.
inline similarity pair_similarity(const concept_map& a, const concept_map& b, const node_weight_fn& weight = {}) {
    std::map<std::string, std::pair<int, int>> freq;  // mention -> (freq in a, freq in b)
    for (const auto& n : a.nodes) freq[n.mention].first += n.freq;
    for (const auto& n : b.nodes) freq[n.mention].second += n.freq;
    std::map<std::string, double> w;
    for (const auto& [m, f] : freq) w[m] = weight ? weight(m, 0.5 * (f.first + f.second)) : 1.0;

    auto edge_set = [](const concept_map& m) {
        std::set<std::pair<std::string, std::string>> s;
        for (const auto& [e, _] : m.edges) {
            auto x = m.nodes[e.first].mention, y = m.nodes[e.second].mention;
            if (x > y) std::swap(x, y);
            s.emplace(std::move(x), std::move(y));
        }
        return s;
    };
    const auto ea = edge_set(a), eb = edge_set(b);

    similarity s;
    std::size_t n_inter = 0, n_union = 0;
    double w_inter = 0.0, w_union = 0.0;
    for (const auto& [m, f] : freq) {
        const bool in_a = f.first > 0, in_b = f.second > 0;
        ++n_union;
        w_union += w[m];
        if (in_a && in_b) {
            ++n_inter;
            w_inter += w[m];
        }
    }
    s.ncr = detail::ratio_or_zero(static_cast<double>(n_inter), static_cast<double>(n_union));
    s.ncr_plus = detail::ratio_or_zero(w_inter, w_union);

    std::set<std::pair<std::string, std::string>> e_union(ea);
    e_union.insert(eb.begin(), eb.end());
    std::size_t e_inter = 0;
    double we_inter = 0.0, we_union = 0.0;
    for (const auto& e : e_union) {
        const double we = w[e.first] * w[e.second];
        we_union += we;
        if (ea.count(e) && eb.count(e)) {
            ++e_inter;
            we_inter += we;
        }
    }
    s.ecr = detail::ratio_or_zero(static_cast<double>(e_inter), static_cast<double>(e_union.size()));
    s.ecr_plus = detail::ratio_or_zero(we_inter, we_union);
    return s;
}

/// Two-sample Student t with pooled variance.
inline double t_score(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw error("t_score: each sample needs at least two values");
    auto moments = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= static_cast<double>(x.size());
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        return std::pair{m, ss};
    };
    const auto [ma, ssa] = moments(a);
    const auto [mb, ssb] = moments(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double pooled = (ssa + ssb) / (na + nb - 2.0);
    if (pooled == 0.0) throw error("t_score: both samples have zero variance");
    return (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
}

struct utility_row {
    pair_type type;
    std::size_t n_pairs = 0;
    similarity mean;
    /// t against Pos-Pos per measure; unset for Pos-Pos itself or when undefined.
    std::array<std::optional<double>, 4> t;
};

struct utility_report {
    std::vector<utility_row> rows;
    /// Pairs skipped because a map was missing.
    std::size_t skipped = 0;
};

inline utility_report assess_utility(const pair_sets& pairs, const concept_map_store& maps,
                                     const node_weight_fn& weight = {}) {
    utility_report rep;
    std::map<pair_type, std::array<std::vector<double>, 4>> samples;
    const pair_type types[] = {pair_type::pos_pos, pair_type::pos_neg, pair_type::pos_bm};
    for (auto t : types) {
        auto& s = samples[t];
        for (const auto& p : pairs.of(t)) {
            auto ia = maps.find(p.first), ib = maps.find(p.second);
            if (ia == maps.end() || ib == maps.end()) {
                ++rep.skipped;
                continue;
            }
            const auto sim = pair_similarity(ia->second, ib->second, weight);
            s[0].push_back(sim.ncr);
            s[1].push_back(sim.ncr_plus);
            s[2].push_back(sim.ecr);
            s[3].push_back(sim.ecr_plus);
        }
    }
    auto mean = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        return x.empty() ? 0.0 : m / static_cast<double>(x.size());
    };
    for (auto t : types) {
        const auto& s = samples[t];
        utility_row row{t, s[0].size(), {mean(s[0]), mean(s[1]), mean(s[2]), mean(s[3])}, {}};
        if (t != pair_type::pos_pos) {
            for (std::size_t k = 0; k < 4; ++k) {
                try {
                    row.t[k] = t_score(samples[pair_type::pos_pos][k], s[k]);
                } catch (const error&) {
                    row.t[k].reset();
                }
            }
        }
        rep.rows.push_back(row);
    }
    return rep;
}

inline std::string utility_csv(const utility_report& rep) {
    std::string out = "pair_type,n_pairs,ncr,ncr_plus,ecr,ecr_plus,t_ncr,t_ncr_plus,t_ecr,t_ecr_plus\n";
    for (const auto& r : rep.rows) {
        out += to_string(r.type) + "," + std::to_string(r.n_pairs) + "," + format_double(r.mean.ncr) + ","
             + format_double(r.mean.ncr_plus) + "," + format_double(r.mean.ecr) + "," + format_double(r.mean.ecr_plus);
        for (const auto& t : r.t) out += "," + (t ? format_double(*t, 4) : std::string());
        out += "\n";
    }
    return out;
}

// --- multi-seed stability ---------------------------------------------------

struct metric_summary {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

/// Mean and sample standard deviation (n - 1 divisor) of every macro metric.
inline std::map<std::string, metric_summary> stability_report(const std::vector<metric_report>& reports) {
    if (reports.size() < 2) throw error("stability report needs at least two runs");
    std::map<std::string, metric_summary> out;
    for (const auto& [name, _] : reports.front().macro) {
        metric_summary s;
        s.n = reports.size();
        // Shifted by the first value so identical reports give exactly σ = 0.
        const double base = reports.front().at(name);
        for (const auto& r : reports) s.mean += r.at(name) - base;
        s.mean = base + s.mean / static_cast<double>(s.n);
        double ss = 0.0;
        for (const auto& r : reports) ss += (r.at(name) - s.mean) * (r.at(name) - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
        out[name] = s;
    }
    return out;
}

/// Rows (model, metric, mean, std, n) in metric-name order per model.
inline std::string stability_csv(const std::vector<std::pair<std::string, std::map<std::string, metric_summary>>>& models) {
    std::string out = "model,metric,mean,std,n\n";
    for (const auto& [model, summary] : models)
        for (const auto& [metric, s] : summary)
            out += model + "," + metric + "," + format_double(s.mean) + "," + format_double(s.stddev) + ","
                 + std::to_string(s.n) + "\n";
    return out;
}

}  // namespace cmaprank
