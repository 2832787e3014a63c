#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmaprank/pipeline.hpp"

namespace cmaprank {

// --- configuration ----------------------------------------------------------

struct pipeline_config {
    std::uint64_t seed = 1;
    std::uint64_t embedding_seed = 0x5eed;

    struct paths_t {
        std::string workdir = "work";
        std::string corpus;      // empty: <workdir>/corpus.jsonl
        std::string queries;     // empty: <workdir>/queries.jsonl
        std::string qrels;       // empty: <workdir>/qrels.txt
        std::string embeddings;  // empty: hashed vectors only
        std::string lexicon;     // optional TSV merged over the built-in lexicon
    } paths;

    synth_config synth;
    std::uint64_t synth_seed = 7;

    concept_map_options conceptmap;

    bm25_params bm25;
    std::size_t top_k = 100;

    gnn_config model;
    train_config train;

    std::vector<int> ks{10, 20};
    std::size_t pair_cap = 0;
    std::size_t bm_depth = 20;

    int stability_seeds = 5;
    std::vector<std::string> stability_models{"gin", "gat", "npool", "epool", "rwpool"};

    void validate() const {
        if (conceptmap.window < 2) throw error("conceptmap.window must be at least 2");
        if (top_k == 0) throw error("index.top_k must be positive");
        if (bm25.k1 < 0.0 || bm25.b < 0.0 || bm25.b > 1.0) throw error("index: need k1 >= 0 and b in [0, 1]");
        if (ks.empty()) throw error("eval.ks must not be empty");
        for (int k : ks)
            if (k <= 0) throw error("eval.ks entries must be positive");
        if (stability_seeds < 2) throw error("stability.seeds must be at least 2");
        for (const auto& m : stability_models) parse_model_kind(m);
        model.validate();
        train.validate();
    }
};

inline nlohmann::ordered_json to_json(const pipeline_config& c) {
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["embedding_seed"] = c.embedding_seed;
    j["paths"] = {{"workdir", c.paths.workdir},       {"corpus", c.paths.corpus},   {"queries", c.paths.queries},
                  {"qrels", c.paths.qrels},           {"embeddings", c.paths.embeddings},
                  {"lexicon", c.paths.lexicon}};
    j["synth"] = {{"n_docs", c.synth.n_docs},
                  {"n_queries", c.synth.n_queries},
                  {"vocab_size", c.synth.vocab_size},
                  {"concepts_per_query", c.synth.concepts_per_query},
                  {"noise_rate", c.synth.noise_rate},
                  {"adversarial", c.synth.adversarial},
                  {"seed", c.synth_seed}};
    j["conceptmap"] = {{"window", c.conceptmap.window}};
    j["index"] = {{"k1", c.bm25.k1}, {"b", c.bm25.b}, {"top_k", c.top_k}};
    j["model"] = to_json(c.model);
    j["train"] = {{"epochs", c.train.epochs},
                  {"triplets_per_query", c.train.triplets_per_query},
                  {"batch_size", c.train.batch_size},
                  {"margin", c.train.margin},
                  {"lr", c.train.adam.lr},
                  {"beta1", c.train.adam.beta1},
                  {"beta2", c.train.adam.beta2},
                  {"eps", c.train.adam.eps},
                  {"patience", c.train.patience},
                  {"val_fraction", c.train.val_fraction}};
    j["eval"] = {{"ks", c.ks}, {"pair_cap", c.pair_cap}, {"bm_depth", c.bm_depth}};
    j["stability"] = {{"seeds", c.stability_seeds}, {"models", c.stability_models}};
    return j;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& section, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw error("config: " + section + " must be an object");
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k)) throw error("config: unknown key " + section + "." + k);
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace detail

/// Overlays the keys present in `j` onto `c`. Unknown keys are errors.
inline void apply_config(pipeline_config& c, const nlohmann::json& j) {
    using detail::read_key;
    try {
        detail::check_keys(j, "<root>",
                           {"seed", "embedding_seed", "paths", "synth", "conceptmap", "index", "model", "train", "eval",
                            "stability"});
        read_key(j, "seed", c.seed);
        read_key(j, "embedding_seed", c.embedding_seed);
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            detail::check_keys(p, "paths", {"workdir", "corpus", "queries", "qrels", "embeddings", "lexicon"});
            read_key(p, "workdir", c.paths.workdir);
            read_key(p, "corpus", c.paths.corpus);
            read_key(p, "queries", c.paths.queries);
            read_key(p, "qrels", c.paths.qrels);
            read_key(p, "embeddings", c.paths.embeddings);
            read_key(p, "lexicon", c.paths.lexicon);
        }
        if (j.contains("synth")) {
            const auto& s = j["synth"];
            detail::check_keys(s, "synth",
                               {"n_docs", "n_queries", "vocab_size", "concepts_per_query", "noise_rate", "adversarial", "seed"});
            read_key(s, "n_docs", c.synth.n_docs);
            read_key(s, "n_queries", c.synth.n_queries);
            read_key(s, "vocab_size", c.synth.vocab_size);
            read_key(s, "concepts_per_query", c.synth.concepts_per_query);
            read_key(s, "noise_rate", c.synth.noise_rate);
            read_key(s, "adversarial", c.synth.adversarial);
            read_key(s, "seed", c.synth_seed);
        }
        if (j.contains("conceptmap")) {
            detail::check_keys(j["conceptmap"], "conceptmap", {"window"});
            read_key(j["conceptmap"], "window", c.conceptmap.window);
        }
        if (j.contains("index")) {
            const auto& x = j["index"];
            detail::check_keys(x, "index", {"k1", "b", "top_k"});
            read_key(x, "k1", c.bm25.k1);
            read_key(x, "b", c.bm25.b);
            read_key(x, "top_k", c.top_k);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            detail::check_keys(m, "model",
                               {"kind", "in_dim", "hidden", "out_dim", "layers", "mlp_layers", "eps", "eps_init", "readout",
                                "walk_lengths", "walks_per_node", "attention_slope"});
            auto merged = to_json(c.model);
            merged.update(m);
            c.model = gnn_config_from_json(merged);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            detail::check_keys(t, "train",
                               {"epochs", "triplets_per_query", "batch_size", "margin", "lr", "beta1", "beta2", "eps",
                                "patience", "val_fraction"});
            read_key(t, "epochs", c.train.epochs);
            read_key(t, "triplets_per_query", c.train.triplets_per_query);
            read_key(t, "batch_size", c.train.batch_size);
            read_key(t, "margin", c.train.margin);
            read_key(t, "lr", c.train.adam.lr);
            read_key(t, "beta1", c.train.adam.beta1);
            read_key(t, "beta2", c.train.adam.beta2);
            read_key(t, "eps", c.train.adam.eps);
            read_key(t, "patience", c.train.patience);
            read_key(t, "val_fraction", c.train.val_fraction);
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            detail::check_keys(e, "eval", {"ks", "pair_cap", "bm_depth"});
            read_key(e, "ks", c.ks);
            read_key(e, "pair_cap", c.pair_cap);
            read_key(e, "bm_depth", c.bm_depth);
        }
        if (j.contains("stability")) {
            const auto& s = j["stability"];
            detail::check_keys(s, "stability", {"seeds", "models"});
            read_key(s, "seeds", c.stability_seeds);
            read_key(s, "models", c.stability_models);
        }
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("config: ") + e.what());
    }
}

inline pipeline_config load_config(const std::string& path) {
    pipeline_config c;
    try {
        apply_config(c, nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw error(path + ": " + e.what());
    }
    return c;
}

// --- workdir ----------------------------------------------------------------

/// Fixed artifact names inside the workdir.
namespace artifact {
inline constexpr const char* corpus = "corpus.jsonl";
inline constexpr const char* queries = "queries.jsonl";
inline constexpr const char* qrels = "qrels.txt";
inline constexpr const char* graphs = "graphs.jsonl";
inline constexpr const char* index = "index.json";
inline constexpr const char* stage_one = "stage1.run";
inline constexpr const char* checkpoint = "model.ckpt.json";
inline constexpr const char* history = "train_history.csv";
inline constexpr const char* rerank = "rerank.run";
inline constexpr const char* metrics = "metrics.csv";
inline constexpr const char* utility = "utility.csv";
inline constexpr const char* stability = "stability.csv";
inline constexpr const char* stability_runs = "stability_runs.csv";
inline constexpr int layout_version = 1;
}  // namespace artifact

class workdir {
public:
    workdir(const pipeline_config& cfg, std::ostream& log) : cfg_(cfg), log_(log), root_(cfg.paths.workdir) {}

    std::string path(const char* name) const { return (root_ / name).string(); }
    std::string corpus() const { return cfg_.paths.corpus.empty() ? path(artifact::corpus) : cfg_.paths.corpus; }
    std::string queries() const { return cfg_.paths.queries.empty() ? path(artifact::queries) : cfg_.paths.queries; }
    std::string qrels_path() const { return cfg_.paths.qrels.empty() ? path(artifact::qrels) : cfg_.paths.qrels; }

    /// Errors unless `file` exists, naming the subcommand that writes it.
    static void require(const std::string& file, const std::string& producer) {
        if (!std::filesystem::exists(file))
            throw error("missing " + file + " (produced by `cmaprank " + producer + "`; run it first)");
    }

    void ensure() const { std::filesystem::create_directories(root_ / "stamps"); }

    /// True when the stage's stamp matches the current inputs, settings and
    /// outputs, so the stage can be skipped.
    bool up_to_date(const std::string& stage, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, const nlohmann::json& settings) const {
        const auto stamp = stamp_path(stage);
        if (!std::filesystem::exists(stamp)) return false;
        for (const auto& o : outputs)
            if (!std::filesystem::exists(o)) return false;
        try {
            return nlohmann::json::parse(read_file(stamp)) == make_stamp(inputs, outputs, settings);
        } catch (const std::exception&) {
            return false;
        }
    }

    void stamp(const std::string& stage, const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
               const nlohmann::json& settings) const {
        ensure();
        write_file(stamp_path(stage), make_stamp(inputs, outputs, settings).dump(2) + "\n");
    }

    void write(const char* name, const std::string& content) const {
        ensure();
        write_file(path(name), content);
        log_ << "wrote " << path(name) << "\n";
    }

private:
    std::string stamp_path(const std::string& stage) const { return (root_ / "stamps" / (stage + ".json")).string(); }

    static std::string file_hash(const std::string& p) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(read_file(p))));
        return buf;
    }

    static nlohmann::json make_stamp(const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                                     const nlohmann::json& settings) {
        nlohmann::json j;
        j["layout"] = artifact::layout_version;
        j["settings"] = settings;
        for (const auto& i : inputs) j["inputs"][i] = std::filesystem::exists(i) ? file_hash(i) : "absent";
        for (const auto& o : outputs) j["outputs"][o] = file_hash(o);
        return j;
    }

    const pipeline_config& cfg_;
    std::ostream& log_;
    std::filesystem::path root_;
};

// --- stages -----------------------------------------------------------------

struct loaded_inputs {
    std::vector<query> queries;
    qrels judgments;
    concept_map_store maps;
    inverted_index index;
    run_ranking stage_one;
};

inline lexicon pipeline_lexicon(const pipeline_config& c) {
    if (c.paths.lexicon.empty()) return lexicon::english();
    return lexicon::from_tsv(read_file(c.paths.lexicon), lexicon::english());
}

inline embedding_table pipeline_embeddings(const pipeline_config& c, std::ostream& log) {
    if (c.paths.embeddings.empty()) return embedding_table(c.model.in_dim, c.embedding_seed);
    auto res = load_embeddings(c.paths.embeddings, c.embedding_seed);
    if (res.table.dim() != c.model.in_dim) {
        throw error(c.paths.embeddings + ": vectors have dimension " + std::to_string(res.table.dim())
                    + " but model.in_dim is " + std::to_string(c.model.in_dim));
    }
    if (res.duplicates) log << "warning: " << res.duplicates << " duplicate embedding rows (last one kept)\n";
    return std::move(res.table);
}

inline std::vector<query> load_queries_file(const std::string& path) { return parse_queries(read_file(path), path); }

inline qrels load_qrels_file(const std::string& path, const std::vector<query>& qs) {
    std::set<std::string> known;
    for (const auto& q : qs) known.insert(q.id);
    return parse_qrels(read_file(path), known, path);
}

class pipeline {
public:
    pipeline(pipeline_config cfg, std::ostream& out, std::ostream& log, bool force = false)
        : cfg_(std::move(cfg)), out_(out), log_(log), wd_(cfg_, log), force_(force) {
        cfg_.validate();
    }

    const pipeline_config& config() const { return cfg_; }

    void synth() {
        const std::vector<std::string> outs{wd_.path(artifact::corpus), wd_.path(artifact::queries), wd_.path(artifact::qrels)};
        const auto settings = to_json(cfg_)["synth"];
        if (skip("synth", {}, outs, settings)) return;
        const auto s = generate_synthetic(cfg_.synth, cfg_.synth_seed);
        wd_.write(artifact::corpus, serialize_collection(s.collection));
        wd_.write(artifact::queries, serialize_queries(s.queries));
        wd_.write(artifact::qrels, serialize_qrels(s.judgments));
        wd_.stamp("synth", {}, outs, settings);
    }

    void build_graphs() {
        const auto corpus = wd_.corpus();
        workdir::require(corpus, "synth");
        std::vector<std::string> ins{corpus};
        if (!cfg_.paths.lexicon.empty()) ins.push_back(cfg_.paths.lexicon);
        const std::vector<std::string> outs{wd_.path(artifact::graphs)};
        const nlohmann::json settings = to_json(cfg_)["conceptmap"];
        if (skip("build-graphs", ins, outs, settings)) return;
        const auto docs = load_collection(corpus);
        const auto maps = build_concept_maps(docs, pipeline_lexicon(cfg_), cfg_.conceptmap);
        std::size_t empty = 0;
        for (const auto& [_, m] : maps) empty += m.empty();
        if (empty) log_ << "note: " << empty << " document(s) produced an empty concept map\n";
        wd_.write(artifact::graphs, serialize_concept_maps(maps));
        wd_.stamp("build-graphs", ins, outs, settings);
    }

    void index() {
        const auto corpus = wd_.corpus();
        workdir::require(corpus, "synth");
        workdir::require(wd_.path(artifact::graphs), "build-graphs");
        const std::vector<std::string> ins{corpus, wd_.path(artifact::graphs)};
        const std::vector<std::string> outs{wd_.path(artifact::index)};
        if (skip("index", ins, outs, {})) return;
        const auto docs = load_collection(corpus);
        const auto maps = parse_concept_maps(read_file(wd_.path(artifact::graphs)), wd_.path(artifact::graphs));
        const auto idx = build_index(docs, &maps);
        wd_.write(artifact::index, index_to_json(idx).dump());
        wd_.stamp("index", ins, outs, {});
    }

    void retrieve() {
        workdir::require(wd_.path(artifact::index), "index");
        workdir::require(wd_.queries(), "synth");
        const std::vector<std::string> ins{wd_.path(artifact::index), wd_.queries()};
        const std::vector<std::string> outs{wd_.path(artifact::stage_one)};
        const nlohmann::json settings = to_json(cfg_)["index"];
        if (skip("retrieve", ins, outs, settings)) return;
        const auto idx = load_index(wd_.path(artifact::index));
        const auto run = retrieve_all(idx, load_queries_file(wd_.queries()), cfg_.top_k, cfg_.bm25);
        wd_.write(artifact::stage_one, serialize_run(run, "bm25"));
        wd_.stamp("retrieve", ins, outs, settings);
    }

    void train_model() {
        const auto ins = model_inputs();
        const std::vector<std::string> outs{wd_.path(artifact::checkpoint), wd_.path(artifact::history)};
        const auto settings = model_settings();
        if (skip("train", ins, outs, settings)) return;
        const auto in = load_inputs();
        const auto ws = make_workspace(in);
        const auto cands = candidate_docs(in.stage_one);
        const auto walk_seed = derive_seed(cfg_.seed, "walks");
        const auto graphs = prepare_graphs(in.maps, ws.table, in.index, cfg_.model, walk_seed, &cands);
        const auto qv = make_query_vectors(in.queries, ws.table);
        auto tc = cfg_.train;
        tc.seed = derive_seed(cfg_.seed, "train");
        const auto init = make_ranker(cfg_.model, derive_seed(cfg_.seed, "init"));
        const auto res = train(init, {&in.judgments, &in.stage_one, &graphs, &qv}, tc);
        for (const auto& w : res.warnings) log_ << "warning: " << w << "\n";
        for (const auto& r : res.history)
            log_ << "epoch " << r.epoch << " loss " << format_double(r.mean_loss) << " val_ndcg@20 "
                 << (std::isnan(r.val_ndcg20) ? std::string("-") : format_double(r.val_ndcg20)) << "\n";
        checkpoint ck{res.model.params, res.optimizer, nlohmann::json::object()};
        ck.meta["model"] = to_json(cfg_.model);
        ck.meta["seed"] = cfg_.seed;
        ck.meta["walk_seed"] = walk_seed;
        ck.meta["embedding_seed"] = cfg_.embedding_seed;
        ck.meta["best_epoch"] = res.best_epoch;
        ck.meta["epochs_run"] = res.history.size();
        ck.meta["train_queries"] = res.train_queries;
        ck.meta["val_queries"] = res.val_queries;
        wd_.write(artifact::checkpoint, serialize_checkpoint(ck));
        wd_.write(artifact::history, history_csv(res.history));
        out_ << "best epoch " << res.best_epoch << " of " << res.history.size() << "\n";
        wd_.stamp("train", ins, outs, settings);
    }

    void rerank_run() {
        workdir::require(wd_.path(artifact::checkpoint), "train");
        auto ins = model_inputs();
        ins.push_back(wd_.path(artifact::checkpoint));
        const std::vector<std::string> outs{wd_.path(artifact::rerank)};
        const nlohmann::json settings = {{"embedding_seed", cfg_.embedding_seed}};
        if (skip("rerank", ins, outs, settings)) return;
        const auto ck = parse_checkpoint(read_file(wd_.path(artifact::checkpoint)));
        const auto model_cfg = gnn_config_from_json(ck.meta.at("model"));
        auto mcfg = cfg_;
        mcfg.model = model_cfg;
        const auto in = load_inputs();
        const auto table = pipeline_embeddings(mcfg, log_);
        const auto cands = candidate_docs(in.stage_one);
        const auto graphs =
            prepare_graphs(in.maps, table, in.index, model_cfg, ck.meta.at("walk_seed").get<std::uint64_t>(), &cands);
        std::vector<std::string> notes;
        const auto run = rerank({model_cfg, ck.params}, make_query_vectors(in.queries, table), in.stage_one, graphs, &notes);
        for (const auto& n : notes) log_ << "note: " << n << "\n";
        wd_.write(artifact::rerank, serialize_run(run, to_string(model_cfg.kind)));
        wd_.stamp("rerank", ins, outs, settings);
    }

    void evaluate() {
        workdir::require(wd_.path(artifact::stage_one), "retrieve");
        workdir::require(wd_.queries(), "synth");
        workdir::require(wd_.qrels_path(), "synth");
        const auto in_q = load_queries_file(wd_.queries());
        const auto judgments = load_qrels_file(wd_.qrels_path(), in_q);
        std::string csv;
        std::vector<std::pair<std::string, std::string>> runs{{"bm25", wd_.path(artifact::stage_one)}};
        if (std::filesystem::exists(wd_.path(artifact::rerank))) runs.emplace_back("rerank", wd_.path(artifact::rerank));
        for (const auto& [name, p] : runs) {
            const auto rep = eval_run(parse_run(read_file(p), p), judgments, cfg_.ks);
            for (const auto& q : rep.excluded) log_ << "note: query " << q << " has no judgments; excluded\n";
            auto part = metrics_csv(rep, name);
            csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
            out_ << name;
            for (const auto& m : metric_names(cfg_.ks)) out_ << "  " << m << " " << format_double(rep.at(m), 4);
            out_ << "\n";
        }
        wd_.write(artifact::metrics, csv);
    }

    void assess_utility() {
        const auto ins = model_inputs();
        const std::vector<std::string> outs{wd_.path(artifact::utility)};
        const nlohmann::json settings = {{"pair_cap", cfg_.pair_cap}, {"bm_depth", cfg_.bm_depth}, {"seed", cfg_.seed}};
        if (skip("assess-utility", ins, outs, settings)) return;
        const auto in = load_inputs();
        const auto pairs = build_pairs(in.judgments, in.stage_one, {cfg_.pair_cap, cfg_.bm_depth, cfg_.seed});
        const auto rep = cmaprank::assess_utility(pairs, in.maps, tfidf_node_weight(in.index));
        wd_.write(artifact::utility, utility_csv(rep));
        out_ << utility_csv(rep);
        wd_.stamp("assess-utility", ins, outs, settings);
    }

    void stability() {
        const auto ins = model_inputs();
        const std::vector<std::string> outs{wd_.path(artifact::stability), wd_.path(artifact::stability_runs)};
        auto settings = model_settings();
        settings["stability"] = to_json(cfg_)["stability"];
        if (skip("stability", ins, outs, settings)) return;
        const auto in = load_inputs();
        const auto ws = make_workspace(in);
        std::vector<std::pair<std::string, std::map<std::string, metric_summary>>> summaries;
        std::string runs_csv = "model,seed";
        for (const auto& m : metric_names(cfg_.ks)) runs_csv += "," + m;
        runs_csv += "\n";
        for (const auto& name : cfg_.stability_models) {
            auto model = cfg_.model;
            model.kind = parse_model_kind(name);
            std::vector<metric_report> reports;
            for (int s = 1; s <= cfg_.stability_seeds; ++s) {
                const auto seed = derive_seed(cfg_.seed, static_cast<std::uint64_t>(s));
                auto r = train_and_evaluate(ws, model, cfg_.train, seed, cfg_.ks);
                runs_csv += name + "," + std::to_string(s);
                for (const auto& m : metric_names(cfg_.ks)) runs_csv += "," + format_double(r.trained.at(m));
                runs_csv += "\n";
                log_ << name << " seed " << s << " ndcg@" << cfg_.ks.front() << " "
                     << format_double(r.trained.at("ndcg@" + std::to_string(cfg_.ks.front())), 4) << "\n";
                reports.push_back(std::move(r.trained));
            }
            summaries.emplace_back(name, stability_report(reports));
        }
        wd_.write(artifact::stability, stability_csv(summaries));
        wd_.write(artifact::stability_runs, runs_csv);
        wd_.stamp("stability", ins, outs, settings);
    }

private:
    bool skip(const std::string& stage, const std::vector<std::string>& ins, const std::vector<std::string>& outs,
              const nlohmann::json& settings) {
        if (force_ || !wd_.up_to_date(stage, ins, outs, settings)) return false;
        log_ << stage << ": up to date, skipping (use --force to rerun)\n";
        return true;
    }

    nlohmann::json model_settings() const {
        const auto j = to_json(cfg_);
        return {{"seed", cfg_.seed}, {"embedding_seed", cfg_.embedding_seed}, {"model", j["model"]}, {"train", j["train"]},
                {"ks", cfg_.ks}};
    }

    std::vector<std::string> model_inputs() const {
        workdir::require(wd_.path(artifact::graphs), "build-graphs");
        workdir::require(wd_.path(artifact::index), "index");
        workdir::require(wd_.path(artifact::stage_one), "retrieve");
        workdir::require(wd_.queries(), "synth");
        std::vector<std::string> ins{wd_.path(artifact::graphs), wd_.path(artifact::index), wd_.path(artifact::stage_one),
                                     wd_.queries()};
        workdir::require(wd_.qrels_path(), "synth");
        ins.push_back(wd_.qrels_path());
        if (!cfg_.paths.embeddings.empty()) ins.push_back(cfg_.paths.embeddings);
        return ins;
    }

    loaded_inputs load_inputs() const {
        loaded_inputs in;
        in.queries = load_queries_file(wd_.queries());
        in.judgments = load_qrels_file(wd_.qrels_path(), in.queries);
        in.maps = parse_concept_maps(read_file(wd_.path(artifact::graphs)), wd_.path(artifact::graphs));
        in.index = load_index(wd_.path(artifact::index));
        in.stage_one = parse_run(read_file(wd_.path(artifact::stage_one)), wd_.path(artifact::stage_one));
        return in;
    }

    workspace make_workspace(const loaded_inputs& in) const {
        return {in.queries, in.judgments, in.maps, in.index, in.stage_one, pipeline_embeddings(cfg_, log_)};
    }

    pipeline_config cfg_;
    std::ostream& out_;
    std::ostream& log_;
    workdir wd_;
    bool force_;
};

// --- command line -----------------------------------------------------------

namespace detail {

/// Value of --config from raw arguments, if any.
inline std::string find_config_arg(int argc, const char* const* argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

struct flag_targets {
    std::string model_kind;
    std::string readout;
    std::string eps;
    bool force = false;
    std::string config;
};

inline void add_common(CLI::App* sub, pipeline_config& c, flag_targets& f) {
    sub->add_option("--config", f.config, "JSON configuration file (flags override its values)");
    sub->add_option("--workdir", c.paths.workdir, "Artifact directory (env CMAPRANK_WORKDIR overrides the config)")
        ->capture_default_str();
    sub->add_option("--seed", c.seed, "Global seed for model init, walks, sampling")->capture_default_str();
    sub->add_option("--corpus", c.paths.corpus, "Corpus JSON-lines (default <workdir>/corpus.jsonl)")->capture_default_str();
    sub->add_option("--queries", c.paths.queries, "Queries JSON-lines (default <workdir>/queries.jsonl)")
        ->capture_default_str();
    sub->add_option("--qrels", c.paths.qrels, "Judgments file (default <workdir>/qrels.txt)")->capture_default_str();
    sub->add_flag("--force", f.force, "Rerun even when the stage is up to date");
}

inline void add_synth(CLI::App* sub, pipeline_config& c) {
    sub->add_option("--docs", c.synth.n_docs, "Documents to generate")->capture_default_str();
    sub->add_option("--num-queries", c.synth.n_queries, "Queries to generate")->capture_default_str();
    sub->add_option("--vocab", c.synth.vocab_size, "Noun vocabulary size")->capture_default_str();
    sub->add_option("--concepts", c.synth.concepts_per_query, "Planted concepts per query")->capture_default_str();
    sub->add_option("--noise", c.synth.noise_rate, "Rate of foreign planted phrases in filler")->capture_default_str();
    sub->add_flag("--adversarial,!--no-adversarial", c.synth.adversarial, "Negatives repeat planted tokens")
        ->capture_default_str();
    sub->add_option("--synth-seed", c.synth_seed, "Corpus generator seed")->capture_default_str();
}

inline void add_graph_opts(CLI::App* sub, pipeline_config& c) {
    sub->add_option("--window", c.conceptmap.window, "Co-occurrence window size (phrases)")->capture_default_str();
    sub->add_option("--lexicon", c.paths.lexicon, "Extra lexicon TSV (token<TAB>tag)")->capture_default_str();
}

inline void add_index_opts(CLI::App* sub, pipeline_config& c) {
    sub->add_option("--k1", c.bm25.k1, "BM25 k1")->capture_default_str();
    sub->add_option("--b", c.bm25.b, "BM25 b")->capture_default_str();
    sub->add_option("--top-k", c.top_k, "Candidates kept per query")->capture_default_str();
}

inline void add_model_opts(CLI::App* sub, pipeline_config& c, flag_targets& f) {
    sub->add_option("--model", f.model_kind, "gin | gat | npool | epool | rwpool")->capture_default_str();
    sub->add_option("--readout", f.readout, "auto | mean | sum | max | tfidf (auto: tfidf for GIN/GAT, mean for pooling)")->capture_default_str();
    sub->add_option("--eps", f.eps, "learnable | fixed")->capture_default_str();
    sub->add_option("--eps-init", c.model.eps_init, "Initial / fixed GIN epsilon")->capture_default_str();
    sub->add_option("--layers", c.model.layers, "Message-passing layers K")->capture_default_str();
    sub->add_option("--mlp-layers", c.model.mlp_layers, "Linear layers per MLP")->capture_default_str();
    sub->add_option("--in-dim", c.model.in_dim, "Word vector dimension")->capture_default_str();
    sub->add_option("--hidden", c.model.hidden, "Hidden width")->capture_default_str();
    sub->add_option("--out-dim", c.model.out_dim, "Output width d")->capture_default_str();
    sub->add_option("--walks-per-node", c.model.walks_per_node, "RW-Pool walks per node and length")->capture_default_str();
    sub->add_option("--walk-lengths", c.model.walk_lengths, "RW-Pool walk lengths (nodes)")->capture_default_str();
}

/// Model shape comes from the checkpoint for `rerank`; only the word vectors are chosen here.
inline void add_embedding_opts(CLI::App* sub, pipeline_config& c) {
    sub->add_option("--embeddings", c.paths.embeddings, "word2vec text file (empty: hashed vectors)")->capture_default_str();
    sub->add_option("--embedding-seed", c.embedding_seed, "Seed of hashed out-of-vocabulary vectors")->capture_default_str();
}

inline void add_train_opts(CLI::App* sub, pipeline_config& c) {
    sub->add_option("--epochs", c.train.epochs, "Maximum epochs")->capture_default_str();
    sub->add_option("--triplets-per-query", c.train.triplets_per_query, "Triplets sampled per query per epoch")
        ->capture_default_str();
    sub->add_option("--batch-size", c.train.batch_size, "Triplets per Adam step")->capture_default_str();
    sub->add_option("--margin", c.train.margin, "Triplet loss margin")->capture_default_str();
    sub->add_option("--lr", c.train.adam.lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--patience", c.train.patience, "Early-stopping patience in epochs (0: off)")->capture_default_str();
    sub->add_option("--val-fraction", c.train.val_fraction, "Share of queries held out for early stopping")
        ->capture_default_str();
}

inline void add_eval_opts(CLI::App* sub, pipeline_config& c) {
    sub->add_option("--ks", c.ks, "Metric cutoffs")->capture_default_str();
}

}  // namespace detail

/// Parses arguments and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    pipeline_config cfg;
    detail::flag_targets flags;
    try {
        if (const auto path = detail::find_config_arg(argc, argv); !path.empty()) cfg = load_config(path);
        if (const char* env = std::getenv("CMAPRANK_WORKDIR"); env && *env) cfg.paths.workdir = env;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    flags.model_kind = to_string(cfg.model.kind);
    flags.readout = cfg.model.readout ? to_string(*cfg.model.readout) : "auto";
    flags.eps = cfg.model.eps == eps_mode::learnable ? "learnable" : "fixed";

    CLI::App app{"Concept-map document retrieval: BM25 candidates re-ranked by graph models"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    struct command {
        const char* name;
        const char* help;
        void (pipeline::*run)();
    };
    const command commands[] = {
        {"synth", "Generate a planted-concept corpus, queries and judgments", &pipeline::synth},
        {"build-graphs", "Extract a concept map per document", &pipeline::build_graphs},
        {"index", "Build the inverted index and concept document frequencies", &pipeline::index},
        {"retrieve", "BM25 top-K candidates per query", &pipeline::retrieve},
        {"train", "Train the re-ranking model on triplets", &pipeline::train_model},
        {"rerank", "Re-rank candidates with the trained model", &pipeline::rerank_run},
        {"evaluate", "NDCG / P / R of the stage-one and re-ranked runs", &pipeline::evaluate},
        {"assess-utility", "Concept-map similarity of document pair types", &pipeline::assess_utility},
        {"stability", "Train every listed model over several seeds; mean and std", &pipeline::stability},
    };
    std::map<CLI::App*, const command*> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        detail::add_common(sub, cfg, flags);
        const std::string n = c.name;
        if (n == "synth") detail::add_synth(sub, cfg);
        if (n == "build-graphs") detail::add_graph_opts(sub, cfg);
        if (n == "retrieve") detail::add_index_opts(sub, cfg);
        if (n == "train" || n == "stability") detail::add_model_opts(sub, cfg, flags);
        if (n == "train" || n == "rerank" || n == "stability") detail::add_embedding_opts(sub, cfg);
        if (n == "train" || n == "stability") detail::add_train_opts(sub, cfg);
        if (n == "evaluate" || n == "stability" || n == "train") detail::add_eval_opts(sub, cfg);
        if (n == "assess-utility") {
            sub->add_option("--pair-cap", cfg.pair_cap, "Pairs per query and type (0: all)")->capture_default_str();
            sub->add_option("--bm-depth", cfg.bm_depth, "Stage-one depth for Pos-BM pairs")->capture_default_str();
        }
        if (n == "stability") {
            sub->add_option("--seeds", cfg.stability_seeds, "Seeds per model")->capture_default_str();
            sub->add_option("--models", cfg.stability_models, "Models to compare")->capture_default_str();
        }
        subs[sub] = &c;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        cfg.model.kind = parse_model_kind(flags.model_kind);
        if (flags.readout.empty() || flags.readout == "auto") cfg.model.readout.reset();
        else cfg.model.readout = parse_readout(flags.readout);
        if (flags.eps != "learnable" && flags.eps != "fixed") throw error("--eps must be learnable or fixed");
        cfg.model.eps = flags.eps == "learnable" ? eps_mode::learnable : eps_mode::fixed;
        pipeline p(cfg, out, err, flags.force);
        for (const auto& [sub, c] : subs)
            if (sub->parsed()) (p.*(c->run))();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace cmaprank
