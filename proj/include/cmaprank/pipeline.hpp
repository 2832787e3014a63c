#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cmaprank/conceptmap.hpp"
#include "cmaprank/corpus.hpp"
#include "cmaprank/embedstore.hpp"
#include "cmaprank/evalkit.hpp"
#include "cmaprank/graphmodels.hpp"
#include "cmaprank/lexindex.hpp"
#include "cmaprank/trainer.hpp"

namespace cmaprank {

inline concept_map_store build_concept_maps(const document_collection& docs, const lexicon& lx,
                                            const concept_map_options& opt = {}) {
    concept_map_store out;
    for (const auto& d : docs) out.emplace(d.id, concept_map_for(d, lx, opt));
    return out;
}

/// Graphs for the documents in `only` (all maps when null).
inline graph_cache prepare_graphs(const concept_map_store& maps, const embedding_table& table, const inverted_index& idx,
                                  const gnn_config& cfg, std::uint64_t walk_seed,
                                  const std::set<std::string>* only = nullptr) {
    graph_cache out;
    for (const auto& [id, m] : maps)
        if (!only || only->count(id)) out.emplace(id, prepare_graph(m, table, &idx, cfg, walk_seed));
    return out;
}

inline std::set<std::string> candidate_docs(const run_ranking& run) {
    std::set<std::string> out;
    for (const auto& [_, docs] : run)
        for (const auto& d : docs) out.insert(d.doc_id);
    return out;
}

inline query_vectors make_query_vectors(const std::vector<query>& queries, const embedding_table& table) {
    query_vectors out;
    for (const auto& q : queries) out.emplace(q.id, query_embedding(table, q));
    return out;
}

inline run_ranking retrieve_all(const inverted_index& idx, const std::vector<query>& queries, std::size_t k,
                                const bm25_params& p = {}) {
    run_ranking out;
    for (const auto& q : queries) out[q.id] = retrieve_topk(idx, q, k, p).docs;
    return out;
}

// --- train / evaluate on a prepared workspace -------------------------------

/// Everything downstream of stage one, loaded once and shared by the
/// models trained on it.
struct workspace {
    std::vector<query> queries;
    qrels judgments;
    concept_map_store maps;
    inverted_index index;
    run_ranking stage_one;
    embedding_table table;
};

struct model_run {
    metric_report untrained;
    metric_report trained;
    train_result training;
    run_ranking run;
};

/// Seeds for parameter init, walks and training all derive from `seed`.
inline model_run train_and_evaluate(const workspace& ws, const gnn_config& model, const train_config& tc_base,
                                    std::uint64_t seed, const std::vector<int>& ks = {10, 20}) {
    const auto cands = candidate_docs(ws.stage_one);
    const auto graphs = prepare_graphs(ws.maps, ws.table, ws.index, model, derive_seed(seed, "walks"), &cands);
    const auto qv = make_query_vectors(ws.queries, ws.table);
    model_run res;
    const auto init = make_ranker(model, derive_seed(seed, "init"));
    res.untrained = eval_run(rerank(init, qv, ws.stage_one, graphs), ws.judgments, ks);
    auto tc = tc_base;
    tc.seed = derive_seed(seed, "train");
    res.training = train(init, {&ws.judgments, &ws.stage_one, &graphs, &qv}, tc);
    res.run = rerank(res.training.model, qv, ws.stage_one, graphs);
    res.trained = eval_run(res.run, ws.judgments, ks);
    return res;
}

// --- end-to-end experiment on a synthetic fixture ---------------------------

struct experiment_config {
    synth_config synth;
    std::uint64_t corpus_seed = 7;
    int window = 3;
    std::size_t top_k = 100;
    gnn_config model;
    train_config train;
    std::uint64_t embedding_seed = 0x5eed;
};

inline workspace synthetic_workspace(const experiment_config& cfg) {
    auto fixture = generate_synthetic(cfg.synth, cfg.corpus_seed);
    workspace ws{std::move(fixture.queries), std::move(fixture.judgments), {}, {}, {},
                 embedding_table(cfg.model.in_dim, cfg.embedding_seed)};
    ws.maps = build_concept_maps(fixture.collection, lexicon::english(), {cfg.window});
    ws.index = build_index(fixture.collection, &ws.maps);
    ws.stage_one = retrieve_all(ws.index, ws.queries, cfg.top_k);
    return ws;
}

struct experiment_result {
    metric_report bm25;
    model_run model;
};

/// Fixture fixed by `corpus_seed`; `seed` drives the model side.
inline experiment_result run_experiment(const experiment_config& cfg, std::uint64_t seed) {
    const auto ws = synthetic_workspace(cfg);
    return {eval_run(ws.stage_one, ws.judgments), train_and_evaluate(ws, cfg.model, cfg.train, seed)};
}

}  // namespace cmaprank
