#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cmaprank/corpus.hpp"
#include "cmaprank/embedstore.hpp"
#include "cmaprank/evalkit.hpp"
#include "cmaprank/graphmodels.hpp"
#include "cmaprank/lexindex.hpp"
#include "cmaprank/tensorcore.hpp"

namespace cmaprank {

struct triplet {
    std::string query_id;
    std::string positive;
    std::string negative;

    friend bool operator==(const triplet&, const triplet&) = default;
};

/// Doc id -> prepared graph for every document a model may score.
using graph_cache = std::map<std::string, graph_input>;
/// Query id -> token-mean query vector.
using query_vectors = std::map<std::string, vec>;

/// Up to `per_query` distinct (positive, negative) pairs per query, sampled
/// uniformly: judged-irrelevant negatives first, unjudged candidates only
/// once those pairs run out. Documents outside `usable` (when given) are
/// ignored. Queries without a usable positive are skipped and noted in
/// `warnings`.
inline std::vector<triplet> build_triplets(const qrels& judgments, const run_ranking& candidates, std::size_t per_query,
                                           std::uint64_t seed, const std::set<std::string>* usable = nullptr,
                                           std::vector<std::string>* warnings = nullptr) {
    auto ok = [&](const std::string& d) { return !usable || usable->count(d) > 0; };
    std::vector<triplet> out;
    std::set<std::string> qids;
    for (const auto& q : judgments.query_ids()) qids.insert(q);
    for (const auto& [q, _] : candidates) qids.insert(q);
    for (const auto& qid : qids) {
        std::vector<std::string> pos, judged_neg, unjudged;
        for (const auto& d : judgments.positives(qid))
            if (ok(d)) pos.push_back(d);
        for (const auto& d : judgments.negatives(qid))
            if (ok(d)) judged_neg.push_back(d);
        if (auto it = candidates.find(qid); it != candidates.end()) {
            std::set<std::string> seen;
            for (const auto& c : it->second)
                if (!judgments.grade(qid, c.doc_id) && ok(c.doc_id) && seen.insert(c.doc_id).second)
                    unjudged.push_back(c.doc_id);
        }
        if (pos.empty()) {
            if (warnings) warnings->push_back("query " + qid + ": no relevant document with a concept map; skipped");
            continue;
        }
        rng r(derive_seed(seed, qid));
        auto take = [&](const std::vector<std::string>& negs, std::size_t want) {
            std::vector<std::pair<std::size_t, std::size_t>> combos;
            for (std::size_t i = 0; i < pos.size(); ++i)
                for (std::size_t j = 0; j < negs.size(); ++j) combos.emplace_back(i, j);
            r.shuffle(combos);
            if (combos.size() > want) combos.resize(want);
            for (const auto& [i, j] : combos) out.push_back({qid, pos[i], negs[j]});
            return combos.size();
        };
        const auto got = take(judged_neg, per_query);
        if (got < per_query) take(unjudged, per_query - got);
    }
    return out;
}

// --- scoring ----------------------------------------------------------------

struct ranker {
    gnn_config config;
    param_store params;
};

inline ranker make_ranker(const gnn_config& cfg, std::uint64_t seed) { return {cfg, init_params(cfg, seed)}; }

/// cosine(h_G, W_q h_Q) on a tape; nullopt for an empty graph.
inline std::optional<var> relevance_score(tape& t, const ranker& m, const graph_input& g, const vec& h_q) {
    auto h_g = encode(t, m.params, m.config, g);
    if (!h_g) return std::nullopt;
    return cosine(*h_g, project_query(t, m.params, h_q));
}

inline std::optional<double> relevance_score(const ranker& m, const graph_input& g, const vec& h_q) {
    tape t;
    auto s = relevance_score(t, m, g, h_q);
    if (!s) return std::nullopt;
    return s->scalar();
}

/// Candidates ordered by model score (stable with respect to the input
/// order). Documents without a usable graph follow in input order with
/// scores below every cosine.
inline run_ranking rerank(const ranker& m, const query_vectors& queries, const run_ranking& candidates,
                          const graph_cache& graphs, std::vector<std::string>* log = nullptr) {
    run_ranking out;
    for (const auto& [qid, docs] : candidates) {
        auto qv = queries.find(qid);
        if (qv == queries.end()) throw error("rerank: no query vector for " + qid);
        std::vector<scored_doc> scored, tail;
        for (const auto& d : docs) {
            auto g = graphs.find(d.doc_id);
            std::optional<double> s;
            if (g != graphs.end()) {
                try {
                    s = relevance_score(m, g->second, qv->second);
                } catch (const error& e) {
                    if (log) log->push_back("query " + qid + ", doc " + d.doc_id + ": " + e.what());
                }
            }
            if (s) scored.push_back({d.doc_id, *s});
            else tail.push_back(d);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const scored_doc& a, const scored_doc& b) { return a.score > b.score; });
        for (std::size_t i = 0; i < tail.size(); ++i) tail[i].score = -2.0 - static_cast<double>(i);
        scored.insert(scored.end(), tail.begin(), tail.end());
        out[qid] = std::move(scored);
    }
    return out;
}

// --- training ---------------------------------------------------------------

struct train_config {
    int epochs = 20;
    std::size_t triplets_per_query = 32;
    std::size_t batch_size = 16;
    double margin = 1.0;
    adam_config adam;
    std::uint64_t seed = 1;
    /// Epochs without validation NDCG@20 improvement before stopping; 0 disables.
    int patience = 5;
    double val_fraction = 0.2;

    void validate() const {
        if (epochs < 1) throw error("epochs must be positive");
        if (triplets_per_query == 0) throw error("triplets_per_query must be positive");
        if (batch_size == 0) throw error("batch_size must be positive");
        if (margin < 0.0) throw error("margin must be non-negative");
        if (adam.lr <= 0.0) throw error("learning rate must be positive");
        if (patience < 0) throw error("patience must be non-negative");
        if (val_fraction < 0.0 || val_fraction >= 1.0) throw error("val_fraction must be in [0, 1)");
    }
};

struct epoch_record {
    int epoch = 0;
    double mean_loss = 0.0;
    /// NaN when there is no validation split.
    double val_ndcg20 = std::numeric_limits<double>::quiet_NaN();
};

inline std::string history_csv(const std::vector<epoch_record>& h) {
    std::string out = "epoch,mean_loss,val_ndcg20\n";
    for (const auto& r : h)
        out += std::to_string(r.epoch) + "," + format_double(r.mean_loss, 8) + ","
             + (std::isnan(r.val_ndcg20) ? std::string() : format_double(r.val_ndcg20)) + "\n";
    return out;
}

/// Everything the training loop reads besides the model.
struct train_data {
    const qrels* judgments = nullptr;
    const run_ranking* candidates = nullptr;
    const graph_cache* graphs = nullptr;
    const query_vectors* queries = nullptr;
};

struct epoch_stats {
    double mean_loss = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
};

/// One pass of minibatch Adam over `triplets` in the given order.
inline epoch_stats train_epoch(ranker& m, adam_state& opt, const std::vector<triplet>& triplets, const train_data& data,
                               std::size_t batch_size, double margin) {
    epoch_stats st;
    double total = 0.0;
    for (std::size_t start = 0; start < triplets.size(); start += batch_size) {
        const auto end = std::min(triplets.size(), start + batch_size);
        param_store grads;
        std::size_t in_batch = 0;
        for (std::size_t i = start; i < end; ++i) {
            const auto& tr = triplets[i];
            const auto& hq = data.queries->at(tr.query_id);
            auto gp = data.graphs->find(tr.positive), gn = data.graphs->find(tr.negative);
            if (gp == data.graphs->end() || gn == data.graphs->end()) {
                ++st.skipped;
                continue;
            }
            tape t;
            std::optional<var> sp, sn;
            try {
                sp = relevance_score(t, m, gp->second, hq);
                sn = relevance_score(t, m, gn->second, hq);
            } catch (const error&) {
                ++st.skipped;
                continue;
            }
            if (!sp || !sn) {
                ++st.skipped;
                continue;
            }
            auto loss = triplet_loss(*sp, *sn, margin);
            const double lv = loss.scalar();
            if (!std::isfinite(lv)) {
                throw error("non-finite triplet loss (query " + tr.query_id + ", positive " + tr.positive + ", negative "
                            + tr.negative + ", scores " + exact_double(sp->scalar()) + " / " + exact_double(sn->scalar())
                            + ")");
            }
            total += lv;
            t.backward(loss);
            t.accumulate_gradients(grads);
            ++in_batch;
        }
        if (in_batch == 0) continue;
        st.used += in_batch;
        const double inv = 1.0 / static_cast<double>(in_batch);
        for (auto& [_, g] : grads)
            for (auto& x : g.data) x *= inv;
        adam_step(m.params, grads, opt);
    }
    st.mean_loss = st.used ? total / static_cast<double>(st.used) : 0.0;
    return st;
}

struct train_result {
    ranker model;  // best-validation parameters
    adam_state optimizer;
    std::vector<epoch_record> history;
    int best_epoch = 0;
    double best_val = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> train_queries;
    std::vector<std::string> val_queries;
    std::vector<std::string> warnings;
};

/// Seeded split of the judged queries that have candidates.
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_queries(const qrels& judgments,
                                                                                     const run_ranking& candidates,
                                                                                     double val_fraction,
                                                                                     std::uint64_t seed) {
    std::vector<std::string> qs;
    for (const auto& q : judgments.query_ids())
        if (candidates.count(q) && !judgments.positives(q).empty()) qs.push_back(q);
    rng r(derive_seed(seed, "validation-split"));
    r.shuffle(qs);
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(qs.size()) + 0.5));
    std::vector<std::string> val(qs.begin(), qs.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, qs.size())));
    std::vector<std::string> tr(qs.begin() + static_cast<std::ptrdiff_t>(val.size()), qs.end());
    std::sort(val.begin(), val.end());
    std::sort(tr.begin(), tr.end());
    return {tr, val};
}

namespace detail {

inline run_ranking restrict_run(const run_ranking& run, const std::vector<std::string>& qids) {
    run_ranking out;
    for (const auto& q : qids)
        if (auto it = run.find(q); it != run.end()) out.emplace(q, it->second);
    return out;
}

inline qrels restrict_qrels(const qrels& all, const std::vector<std::string>& qids) {
    qrels out;
    for (const auto& q : qids)
        for (const auto& [d, g] : all.for_query(q)) out.add(q, d, g);
    return out;
}

}  // namespace detail

/// Minibatch Adam on the triplet loss with per-epoch triplet resampling and
/// early stopping on validation NDCG@20. Returns the best-validation model.
inline train_result train(const ranker& init, const train_data& data, const train_config& cfg) {
    cfg.validate();
    if (!data.judgments || !data.candidates || !data.graphs || !data.queries) throw error("train: incomplete inputs");
    train_result res;
    res.model = init;
    res.optimizer.config = cfg.adam;
    std::tie(res.train_queries, res.val_queries) = split_queries(*data.judgments, *data.candidates, cfg.val_fraction, cfg.seed);
    const auto train_qrels = detail::restrict_qrels(*data.judgments, res.train_queries);
    const auto train_cands = detail::restrict_run(*data.candidates, res.train_queries);
    const auto val_qrels = detail::restrict_qrels(*data.judgments, res.val_queries);
    const auto val_cands = detail::restrict_run(*data.candidates, res.val_queries);

    std::set<std::string> usable;
    for (const auto& [d, g] : *data.graphs)
        if (!g.empty()) usable.insert(d);

    ranker current = init;
    adam_state opt;
    opt.config = cfg.adam;
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto epoch_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
        auto triplets = build_triplets(train_qrels, train_cands, cfg.triplets_per_query, epoch_seed, &usable,
                                       epoch == 1 ? &res.warnings : nullptr);
        if (triplets.empty()) throw error("train: no training triplets (no judged relevant document has a concept map)");
        rng order(derive_seed(epoch_seed, "order"));
        order.shuffle(triplets);
        const auto st = train_epoch(current, opt, triplets, data, cfg.batch_size, cfg.margin);
        if (st.used == 0) throw error("train: every triplet was skipped in epoch " + std::to_string(epoch));
        epoch_record rec{epoch, st.mean_loss};
        if (!res.val_queries.empty()) {
            rec.val_ndcg20 = eval_run(rerank(current, *data.queries, val_cands, *data.graphs), val_qrels, {20}).at("ndcg@20");
        }
        res.history.push_back(rec);

        const bool has_val = !std::isnan(rec.val_ndcg20);
        const bool improved = !has_val || std::isnan(res.best_val) || rec.val_ndcg20 > res.best_val;
        if (improved) {
            res.model = current;
            res.optimizer = opt;
            res.best_epoch = epoch;
            if (has_val) res.best_val = rec.val_ndcg20;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }
    return res;
}

}  // namespace cmaprank
