// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cmaprank/pipeline.hpp"
#include "support.hpp"

using namespace cmaprank;
using namespace cmaprank::testing;

namespace {

struct verdict {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double max_abs_diff(const vec& a, const vec& b) {
    if (a.size() != b.size()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

constexpr readout_mode all_readouts[] = {readout_mode::mean, readout_mode::sum, readout_mode::max, readout_mode::tfidf};

// --- 1 ----------------------------------------------------------------------

verdict permutation_invariance() {
    rng r(101);
    double worst = 0.0;
    std::size_t encodings = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + r.index(12);
        for (auto kind : all_kinds) {
            auto cfg = small_config(kind);
            cfg.readout = all_readouts[static_cast<std::size_t>(trial) % 4];
            const auto g = random_graph(r, n, cfg.in_dim, cfg, true);
            const auto ps = random_params(cfg, r);
            std::vector<int> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            r.shuffle(perm);
            worst = std::max(worst, max_abs_diff(*encode(ps, cfg, g), *encode(ps, cfg, permute_graph(g, perm))));
            ++encodings;
        }
    }
    return {worst < 1e-6, "max-norm change " + fmt("%.3g", worst) + " over " + std::to_string(encodings) + " encodings"};
}

// --- 2 ----------------------------------------------------------------------

/// h_i <- h_i + Σ_{j ∈ N(i)} h_j, written against an edge list.
std::vector<vec> neighbour_sum(const std::vector<vec>& h, const std::vector<std::pair<int, int>>& edges) {
    auto out = h;
    for (const auto& [a, b] : edges)
        for (std::size_t c = 0; c < h[0].size(); ++c) {
            out[static_cast<std::size_t>(a)][c] += h[static_cast<std::size_t>(b)][c];
            out[static_cast<std::size_t>(b)][c] += h[static_cast<std::size_t>(a)][c];
        }
    return out;
}

verdict gin_oracle() {
    constexpr std::size_t dim = 3;
    rng r(202);
    std::size_t graphs = 0, mismatches = 0;
    for (std::size_t n = 1; n <= 5; ++n) {
        std::vector<std::pair<int, int>> all_pairs;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) all_pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        for (std::size_t mask = 0; mask < (std::size_t{1} << all_pairs.size()); ++mask) {
            std::vector<std::pair<int, int>> edges;
            for (std::size_t e = 0; e < all_pairs.size(); ++e)
                if (mask >> e & 1) edges.push_back(all_pairs[e]);
            // Dyadic features keep every partial sum exact whatever the order.
            std::vector<vec> h(n, vec(dim));
            tensor f(n, dim);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < dim; ++c) f(i, c) = h[i][c] = (static_cast<double>(r.index(33)) - 16.0) / 4.0;
            const auto g = make_graph_input(f, edges);
            for (int k_max = 1; k_max <= 3; ++k_max) {
                gnn_config cfg;
                cfg.kind = model_kind::gin;
                cfg.in_dim = cfg.hidden = cfg.out_dim = dim;
                cfg.layers = k_max;
                cfg.mlp_layers = 1;
                cfg.eps = eps_mode::fixed;
                auto ps = init_params(cfg, 1);
                for (int k = 1; k <= k_max; ++k) {
                    const auto spec = layer_mlp(cfg, k);
                    ps[spec.weight(0)] = tensor::identity(dim);
                    ps[spec.bias(0)] = tensor(1, dim);
                    ps[eps_name(cfg, k)] = tensor(1, 1, 0.0);
                }
                tape t;
                const auto states = message_passing_states(t, ps, cfg, g);
                auto expect = h;
                for (int k = 1; k <= k_max; ++k) {
                    expect = neighbour_sum(expect, edges);
                    const auto& got = states[static_cast<std::size_t>(k)].value();
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t c = 0; c < dim; ++c)
                            if (got[i * dim + c] != expect[i][c]) ++mismatches;
                }
            }
            ++graphs;
        }
    }
    return {mismatches == 0, std::to_string(graphs) + " graphs x K in {1,2,3}, " + std::to_string(mismatches) + " mismatching entries"};
}

// --- 3 ----------------------------------------------------------------------

verdict gradient_checks() {
    std::size_t checked = 0, retries = 0, failures = 0;
    double worst = 0.0;
    std::string first_failure;
    auto record = [&](const std::string& what, const grad_check_outcome& o) {
        checked += o.checked;
        retries += o.kink_retries;
        worst = std::max(worst, o.worst);
        if (!o.ok) {
            ++failures;
            if (first_failure.empty()) first_failure = what + " " + o.failure;
        }
    };
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        rng r(derive_seed(303, seed));
        for (auto kind : all_kinds) {
            auto cfg = small_config(kind);
            cfg.readout = all_readouts[seed % 4];
            const auto g = random_graph(r, 2 + r.index(5), cfg.in_dim, cfg, true);
            std::vector<double> c(cfg.graph_dim());
            for (auto& x : c) x = r.normal();
            record(to_string(kind), check_gradients(random_params(cfg, r), encoder_loss(cfg, g, c)));
        }
        param_store vecs{{"u", random_tensor(r, 1, 5)}, {"v", random_tensor(r, 1, 5)}, {"w", random_tensor(r, 1, 5)}};
        record("cosine", check_gradients(vecs, [](tape& t, const param_store& p) {
                   return cosine(t.param(p, "u"), t.param(p, "v"));
               }));
        // Full scorer under the triplet loss; margin 3 keeps the hinge active.
        const auto cfg = small_config(all_kinds[seed % 5]);
        const auto gp = random_graph(r, 2 + r.index(4), cfg.in_dim, cfg, true);
        const auto gn = random_graph(r, 2 + r.index(4), cfg.in_dim, cfg, true);
        vec hq(cfg.in_dim);
        for (auto& x : hq) x = r.normal();
        record("triplet", check_gradients(random_params(cfg, r), [&](tape& t, const param_store& p) {
                   const ranker m{cfg, p};
                   return triplet_loss(*relevance_score(t, m, gp, hq), *relevance_score(t, m, gn, hq), 3.0);
               }));
    }
    std::string detail = std::to_string(checked) + " partials, worst relative error " + fmt("%.3g", worst) + ", "
                         + std::to_string(retries) + " kink retries";
    if (failures) detail += ", " + std::to_string(failures) + " failing checks; first: " + first_failure;
    return {failures == 0, detail};
}

// --- 4 ----------------------------------------------------------------------

verdict metric_oracle() {
    rng r(404);
    double worst = 0.0;
    bool structure_ok = true;
    for (int inst = 0; inst < 500; ++inst) {
        const auto n_docs = 1 + r.index(20), n_q = 1 + r.index(5);
        qrels j;
        run_ranking run;
        std::map<std::string, std::map<std::string, int>> grades;
        for (std::size_t q = 0; q < n_q; ++q) {
            const auto qid = "q" + std::to_string(q);
            std::vector<std::string> docs;
            for (std::size_t d = 0; d < n_docs; ++d) docs.push_back("d" + std::to_string(d));
            r.shuffle(docs);
            const auto depth = 1 + r.index(n_docs);
            double s = 100.0;
            for (std::size_t k = 0; k < depth; ++k) run[qid].push_back({docs[k], s -= r.uniform(0.01, 1.0)});
            if (q > 0 && r.bernoulli(0.15)) continue;  // unjudged query
            for (std::size_t d = 0; d < n_docs; ++d)
                if (r.bernoulli(0.6)) {
                    const int g = static_cast<int>(r.index(4));
                    j.add(qid, "d" + std::to_string(d), g);
                    grades[qid]["d" + std::to_string(d)] = g;
                }
            if (grades[qid].empty()) {
                j.add(qid, "d0", 0);
                grades[qid]["d0"] = 0;
            }
        }
        const auto rep = eval_run(run, j, {10, 20});
        std::map<std::string, double> macro;
        std::size_t counted = 0;
        for (const auto& [qid, list] : run) {
            auto it = grades.find(qid);
            if (it == grades.end()) continue;
            ++counted;
            const auto& gq = it->second;
            std::vector<int> sorted;
            int n_rel = 0;
            for (const auto& [_, g] : gq) {
                sorted.push_back(g);
                n_rel += g > 0;
            }
            std::sort(sorted.rbegin(), sorted.rend());
            for (int k : {10, 20}) {
                double dcg = 0.0, idcg = 0.0, hits = 0.0;
                for (std::size_t i = 0; i < list.size() && i < static_cast<std::size_t>(k); ++i) {
                    auto g = gq.count(list[i].doc_id) ? gq.at(list[i].doc_id) : 0;
                    dcg += (std::pow(2.0, g) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
                    hits += g > 0;
                }
                for (std::size_t i = 0; i < sorted.size() && i < static_cast<std::size_t>(k); ++i)
                    idcg += (std::pow(2.0, sorted[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
                const std::map<std::string, double> expect{
                    {"ndcg@" + std::to_string(k), n_rel ? dcg / idcg : 0.0},
                    {"p@" + std::to_string(k), n_rel ? hits / k : 0.0},
                    {"r@" + std::to_string(k), n_rel ? hits / n_rel : 0.0}};
                for (const auto& [name, v] : expect) {
                    if (!rep.per_query.count(qid)) {
                        structure_ok = false;
                        continue;
                    }
                    worst = std::max(worst, std::abs(rep.per_query.at(qid).at(name) - v));
                    macro[name] += v;
                }
            }
        }
        if (rep.per_query.size() != counted) structure_ok = false;
        for (auto& [name, v] : macro) worst = std::max(worst, std::abs(rep.at(name) - v / static_cast<double>(counted)));
    }
    return {structure_ok && worst <= 1e-12, "500 instances, max deviation " + fmt("%.3g", worst)};
}

// --- 5 ----------------------------------------------------------------------

/// Okapi BM25 over raw token lists with the Lucene idf.
double oracle_bm25(const std::vector<std::vector<std::string>>& docs, std::size_t d, const std::vector<std::string>& q) {
    const double k1 = 1.2, b = 0.75, N = static_cast<double>(docs.size());
    double total = 0.0;
    for (const auto& dd : docs) total += static_cast<double>(dd.size());
    const double avgdl = total / N;
    double s = 0.0;
    for (const auto& term : std::set<std::string>(q.begin(), q.end())) {
        double df = 0.0;
        for (const auto& dd : docs) df += std::count(dd.begin(), dd.end(), term) > 0;
        const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), term));
        if (tf == 0.0) continue;
        const double idf = std::log(1.0 + (N - df + 0.5) / (df + 0.5));
        s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * static_cast<double>(docs[d].size()) / avgdl));
    }
    return s;
}

verdict bm25_checks() {
    document_collection one;
    one.add(make_document("d", "", "crime"));
    const double hand = bm25_score(build_index(one), {"crime"}, "d");
    const double hand_err = std::abs(hand - std::log(4.0 / 3.0));

    rng r(505);
    std::size_t mismatched_lists = 0, lists = 0;
    double worst = 0.0;
    for (int corpus = 0; corpus < 20; ++corpus) {
        const auto n = 1 + r.index(200);
        document_collection c;
        std::vector<std::vector<std::string>> toks;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) {
            std::string text;
            for (std::size_t w = 0, len = 1 + r.index(30); w < len; ++w) text += "w" + std::to_string(r.index(40)) + " ";
            auto d = make_document("doc" + std::to_string(r.index(100000)) + "_" + std::to_string(i), "", text);
            toks.push_back(d.tokens());
            ids.push_back(d.id);
            c.add(std::move(d));
        }
        const auto idx = build_index(c);
        for (int qn = 0; qn < 10; ++qn) {
            std::string qt;
            for (std::size_t w = 0, len = 1 + r.index(4); w < len; ++w) qt += "w" + std::to_string(r.index(50)) + " ";
            const auto q = make_query("q", qt);
            const auto k = 1 + r.index(120);
            std::vector<scored_doc> brute;
            for (std::size_t d = 0; d < n; ++d) {
                const double s = oracle_bm25(toks, d, q.tokens);
                if (s > 0.0) brute.push_back({ids[d], s});
            }
            std::sort(brute.begin(), brute.end(), [](const scored_doc& a, const scored_doc& b) {
                return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
            });
            if (brute.size() > k) brute.resize(k);
            const auto got = retrieve_topk(idx, q, k).docs;
            ++lists;
            bool same = got.size() == brute.size();
            for (std::size_t i = 0; same && i < got.size(); ++i) {
                worst = std::max(worst, std::abs(got[i].score - brute[i].score));
                // Scores within rounding of each other may legitimately swap.
                if (got[i].doc_id != brute[i].doc_id && std::abs(got[i].score - brute[i].score) > 1e-9) same = false;
            }
            mismatched_lists += !same;
        }
    }
    const bool pass = hand_err < 1e-9 && mismatched_lists == 0 && worst < 1e-9;
    return {pass, "hand example error " + fmt("%.3g", hand_err) + "; " + std::to_string(lists) + " top-K lists, "
                      + std::to_string(mismatched_lists) + " differ from brute force, max score deviation "
                      + fmt("%.3g", worst)};
}

// --- 6 ----------------------------------------------------------------------

verdict similarity_oracle() {
    rng r(606);
    double worst = 0.0;
    bool uniform_exact = true;
    auto weight = [](const std::string& m, double tf) { return (1.0 + static_cast<double>(m.back() - '0')) * std::log1p(tf); };
    for (int pair = 0; pair < 200; ++pair) {
        auto random_map = [&] {
            std::vector<phrase> ps;
            for (std::size_t i = 0, n = r.index(12); i < n; ++i)
                ps.push_back({"c" + std::to_string(r.index(10)), static_cast<int>(i / 4)});
            return build_concept_map("d", ps, 2 + static_cast<int>(r.index(3)));
        };
        const auto a = random_map(), b = random_map();
        std::map<std::string, double> tfa, tfb;
        for (const auto& n : a.nodes) tfa[n.mention] += n.freq;
        for (const auto& n : b.nodes) tfb[n.mention] += n.freq;
        std::set<std::string> va, vb, vu, vi;
        for (const auto& [m, _] : tfa) va.insert(m);
        for (const auto& [m, _] : tfb) vb.insert(m);
        std::set_union(va.begin(), va.end(), vb.begin(), vb.end(), std::inserter(vu, vu.end()));
        std::set_intersection(va.begin(), va.end(), vb.begin(), vb.end(), std::inserter(vi, vi.end()));
        auto w = [&](const std::string& m) {
            const double fa = tfa.count(m) ? tfa.at(m) : 0.0, fb = tfb.count(m) ? tfb.at(m) : 0.0;
            return weight(m, (fa + fb) / 2.0);
        };
        auto edges = [](const concept_map& m) {
            std::set<std::pair<std::string, std::string>> s;
            for (const auto& [e, _] : m.edges)
                s.insert(std::minmax(m.nodes[static_cast<std::size_t>(e.first)].mention,
                                     m.nodes[static_cast<std::size_t>(e.second)].mention));
            return s;
        };
        const auto ea = edges(a), eb = edges(b);
        std::set<std::pair<std::string, std::string>> eu, ei;
        std::set_union(ea.begin(), ea.end(), eb.begin(), eb.end(), std::inserter(eu, eu.end()));
        std::set_intersection(ea.begin(), ea.end(), eb.begin(), eb.end(), std::inserter(ei, ei.end()));
        auto ratio = [](double x, double y) { return y > 0.0 ? x / y : 0.0; };
        double wi = 0, wu = 0, wei = 0, weu = 0;
        for (const auto& m : vi) wi += w(m);
        for (const auto& m : vu) wu += w(m);
        for (const auto& e : ei) wei += w(e.first) * w(e.second);
        for (const auto& e : eu) weu += w(e.first) * w(e.second);
        const similarity expect{ratio(static_cast<double>(vi.size()), static_cast<double>(vu.size())), ratio(wi, wu),
                                ratio(static_cast<double>(ei.size()), static_cast<double>(eu.size())), ratio(wei, weu)};
        for (const auto& got : {pair_similarity(a, b, weight), pair_similarity(b, a, weight)}) {
            worst = std::max({worst, std::abs(got.ncr - expect.ncr), std::abs(got.ncr_plus - expect.ncr_plus),
                              std::abs(got.ecr - expect.ecr), std::abs(got.ecr_plus - expect.ecr_plus)});
        }
        for (const auto& u : {pair_similarity(a, b), pair_similarity(a, b, [](const std::string&, double) { return 1.0; })})
            if (u.ncr_plus != u.ncr || u.ecr_plus != u.ecr) uniform_exact = false;
    }
    return {worst < 1e-12 && uniform_exact, "200 map pairs, max deviation " + fmt("%.3g", worst)
                                                + (uniform_exact ? ", uniform weights reduce exactly" : ", uniform reduction inexact")};
}

// --- 7 ----------------------------------------------------------------------

verdict t_score_checks() {
    bool ok = std::abs(t_score({1, 2, 3}, {2, 3, 4}) + std::sqrt(1.5)) < 1e-9;
    rng r(707);
    double worst = 0.0;
    bool antisym = true, zero = true;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> a(2 + r.index(30)), b(2 + r.index(30));
        const double shift = r.normal();
        for (auto& x : a) x = r.normal();
        for (auto& x : b) x = shift + 2.0 * r.normal();
        // Welford running moments, independent of the two-pass form.
        auto moments = [](const std::vector<double>& x) {
            double mean = 0.0, m2 = 0.0, n = 0.0;
            for (double v : x) {
                n += 1.0;
                const double d = v - mean;
                mean += d / n;
                m2 += d * (v - mean);
            }
            return std::tuple{mean, m2 / (n - 1.0), n};
        };
        const auto [ma, va, na] = moments(a);
        const auto [mb, vb, nb] = moments(b);
        const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        const double expect = (ma - mb) / std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
        const double got = t_score(a, b);
        worst = std::max(worst, std::abs(got - expect));
        if (t_score(b, a) != -got) antisym = false;
        if (t_score(a, a) != 0.0) zero = false;
    }
    bool rejects = true;
    for (const auto& [a, b] : std::vector<std::pair<vec, vec>>{{{1, 1}, {2, 2}}, {{1}, {1, 2}}, {{}, {}}}) {
        try {
            t_score(a, b);
            rejects = false;
        } catch (const error&) {
        }
    }
    ok = ok && worst < 1e-9 && antisym && zero && rejects;
    return {ok, "hand example and 1000 oracle samples, max deviation " + fmt("%.3g", worst) + (antisym ? "" : ", antisymmetry broken")
                    + (zero ? "" : ", t(A,A) != 0") + (rejects ? "" : ", degenerate input accepted")};
}

// --- 8 and 9 ----------------------------------------------------------------

struct experiment_cache {
    std::map<std::tuple<model_kind, bool, std::uint64_t>, experiment_result> runs;

    const experiment_result& get(model_kind kind, bool adversarial, std::uint64_t seed) {
        const auto key = std::tuple{kind, adversarial, seed};
        if (auto it = runs.find(key); it != runs.end()) return it->second;
        return runs.emplace(key, run_experiment(config(kind, adversarial), seed)).first->second;
    }

    static experiment_config config(model_kind kind, bool adversarial) {
        experiment_config cfg;
        cfg.model.kind = kind;
        cfg.synth.adversarial = adversarial;
        return cfg;
    }
};

constexpr std::uint64_t seeds[] = {1, 2, 3, 4, 5};

verdict planted_concepts(experiment_cache& cache) {
    bool ok = true;
    std::string detail;
    for (auto kind : {model_kind::epool, model_kind::rwpool}) {
        for (bool adversarial : {false, true}) {
            double bm25 = 0.0, untrained = 0.0, trained = 0.0;
            for (auto s : seeds) {
                const auto& res = cache.get(kind, adversarial, s);
                bm25 += res.bm25.at("ndcg@10") / 5.0;
                untrained += res.model.untrained.at("ndcg@10") / 5.0;
                trained += res.model.trained.at("ndcg@10") / 5.0;
            }
            const bool gain = trained >= untrained + 0.15;
            const bool beats = !adversarial || trained >= bm25;
            ok = ok && gain && beats;
            detail += (detail.empty() ? "" : "; ") + to_string(kind) + (adversarial ? "/adversarial" : "/standard")
                      + " bm25 " + fmt("%.4f", bm25) + " untrained " + fmt("%.4f", untrained) + " trained "
                      + fmt("%.4f", trained) + (gain && beats ? "" : " (short)");
        }
    }
    return {ok, "NDCG@10 means over 5 seeds: " + detail};
}

verdict stability(experiment_cache& cache) {
    std::vector<std::pair<std::string, std::map<std::string, metric_summary>>> models;
    bool ok = true, deterministic = true;
    std::string detail;
    for (auto kind : all_kinds) {
        std::vector<metric_report> reports;
        for (auto s : seeds) reports.push_back(cache.get(kind, false, s).model.trained);
        const auto summary = stability_report(reports);
        for (const auto& name : metric_names({10, 20})) {
            auto it = summary.find(name);
            if (it == summary.end() || !std::isfinite(it->second.mean) || !(it->second.stddev >= 0.0) || it->second.n != 5)
                ok = false;
        }
        const auto& first = cache.get(kind, false, 1);
        const auto again = run_experiment(experiment_cache::config(kind, false), 1);
        if (!(again.model.trained == first.model.trained) || again.model.run != first.model.run
            || again.model.training.model.params != first.model.training.model.params)
            deterministic = false;
        const auto& n20 = summary.at("ndcg@20");
        detail += (detail.empty() ? "" : "; ") + to_string(kind) + " ndcg@20 " + fmt("%.4f", n20.mean) + " +/- "
                  + fmt("%.4f", n20.stddev);
        models.emplace_back(to_string(kind), summary);
    }
    const auto csv = stability_csv(models);
    const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
    ok = ok && deterministic && rows == 1 + 5 * metric_names({10, 20}).size();
    return {ok, detail + (deterministic ? "; seed 1 reruns bitwise identical" : "; rerun differs")};
}

}  // namespace

int main() {
    experiment_cache cache;
    struct criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<verdict()> run;
    };
    const std::vector<criterion> criteria{
        {1, "permutation invariance", 30, permutation_invariance},
        {2, "GIN neighbour-sum oracle", 60, gin_oracle},
        {3, "gradient checks", 120, gradient_checks},
        {4, "metric oracle", 0, metric_oracle},
        {5, "BM25 hand example and brute-force top-K", 0, bm25_checks},
        {6, "similarity oracle", 0, similarity_oracle},
        {7, "t-score oracle", 0, t_score_checks},
        {8, "planted-concept re-ranking", 300, [&] { return planted_concepts(cache); }},
        {9, "multi-seed stability and determinism", 0, [&] { return stability(cache); }},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            v.pass = false;
            v.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
        }
        failed += !v.pass;
        std::printf("%s %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
