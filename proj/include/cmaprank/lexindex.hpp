#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmaprank/conceptmap.hpp"
#include "cmaprank/corpus.hpp"
#include "cmaprank/util.hpp"

namespace cmaprank {

struct posting {
    std::uint32_t doc;  // index into inverted_index::doc_ids()
    std::uint32_t tf;

    friend bool operator==(const posting&, const posting&) = default;
};

struct bm25_params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Term postings over a tokenized collection. Documents are numbered in
/// ascending id order, so posting lists sorted by number are sorted by id.
class inverted_index {
public:
    inverted_index() = default;

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avgdl() const { return avgdl_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const { return lengths_; }

    std::optional<std::uint32_t> doc_number(const std::string& id) const {
        auto it = doc_number_.find(id);
        if (it == doc_number_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<posting>& postings(const std::string& term) const {
        static const std::vector<posting> none;
        auto it = postings_.find(term);
        return it == postings_.end() ? none : it->second;
    }

    std::size_t df(const std::string& term) const { return postings(term).size(); }

    std::uint32_t tf(const std::string& term, std::uint32_t doc) const {
        const auto& p = postings(term);
        auto it = std::lower_bound(p.begin(), p.end(), doc, [](const posting& x, std::uint32_t d) { return x.doc < d; });
        return it != p.end() && it->doc == doc ? it->tf : 0;
    }

    std::size_t concept_df(const std::string& mention) const {
        auto it = concept_df_.find(mention);
        return it == concept_df_.end() ? 0 : it->second;
    }

    std::size_t term_count() const { return postings_.size(); }

    friend inverted_index build_index(const document_collection&, const concept_map_store*);
    friend nlohmann::json index_to_json(const inverted_index&);
    friend inverted_index index_from_json(const nlohmann::json&);

    friend bool operator==(const inverted_index& a, const inverted_index& b) {
        return a.doc_ids_ == b.doc_ids_ && a.lengths_ == b.lengths_ && a.postings_ == b.postings_
            && a.concept_df_ == b.concept_df_;
    }

private:
    void finish() {
        doc_number_.clear();
        for (std::size_t i = 0; i < doc_ids_.size(); ++i) doc_number_[doc_ids_[i]] = static_cast<std::uint32_t>(i);
        double total = 0.0;
        for (auto l : lengths_) total += l;
        avgdl_ = doc_ids_.empty() ? 0.0 : total / static_cast<double>(doc_ids_.size());
    }

    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> lengths_;
    std::unordered_map<std::string, std::uint32_t> doc_number_;
    std::unordered_map<std::string, std::vector<posting>> postings_;
    std::map<std::string, std::size_t> concept_df_;
    double avgdl_ = 0.0;
};

/// Concept df counts the maps whose node mentions include each phrase.
inline inverted_index build_index(const document_collection& collection, const concept_map_store* maps = nullptr) {
    if (collection.empty()) throw error("cannot index an empty collection");
    inverted_index idx;
    std::vector<const document*> docs;
    for (const auto& d : collection) docs.push_back(&d);
    std::sort(docs.begin(), docs.end(), [](const document* a, const document* b) { return a->id < b->id; });
    for (std::uint32_t n = 0; n < docs.size(); ++n) {
        const auto& d = *docs[n];
        idx.doc_ids_.push_back(d.id);
        idx.lengths_.push_back(static_cast<std::uint32_t>(d.tokens().size()));
        std::map<std::string, std::uint32_t> counts;
        for (const auto& t : d.tokens()) ++counts[t];
        for (const auto& [t, c] : counts) idx.postings_[t].push_back({n, c});
    }
    if (maps) {
        for (const auto& [_, m] : *maps)
            for (const auto& node : m.nodes) ++idx.concept_df_[node.mention];
    }
    idx.finish();
    return idx;
}

inline double bm25_idf(std::size_t n_docs, std::size_t df) {
    const double N = static_cast<double>(n_docs), d = static_cast<double>(df);
    return std::log(1.0 + (N - d + 0.5) / (d + 0.5));
}

namespace detail {

/// Distinct query terms in sorted order; every scorer sums in this order.
inline std::vector<std::string> query_terms(const std::vector<std::string>& tokens) {
    std::vector<std::string> t(tokens);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

inline double bm25_term(double idf, double tf, double len, double avgdl, const bm25_params& p) {
    return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * len / avgdl));
}

}  // namespace detail

/// Okapi BM25 over the distinct query terms.
inline double bm25_score(const inverted_index& idx, const std::vector<std::string>& query_tokens,
                         const std::string& doc_id, const bm25_params& p = {}) {
    auto n = idx.doc_number(doc_id);
    if (!n) throw error("bm25_score: unknown document id " + doc_id);
    double score = 0.0;
    for (const auto& t : detail::query_terms(query_tokens)) {
        const auto tf = idx.tf(t, *n);
        if (tf == 0) continue;
        score += detail::bm25_term(bm25_idf(idx.doc_count(), idx.df(t)), tf, idx.doc_lengths()[*n], idx.avgdl(), p);
    }
    return score;
}

struct scored_doc {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const scored_doc&, const scored_doc&) = default;
};

/// Descending score, ties by ascending doc id.
inline bool ranks_before(const scored_doc& a, const scored_doc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

struct candidate_list {
    std::string query_id;
    std::vector<scored_doc> docs;
};

/// Term-at-a-time accumulation; documents scoring zero are left out.
inline candidate_list retrieve_topk(const inverted_index& idx, const query& q, std::size_t k = 100,
                                    const bm25_params& p = {}) {
    if (k == 0) throw error("retrieve_topk: K must be at least 1");
    std::vector<double> acc(idx.doc_count(), 0.0);
    for (const auto& t : detail::query_terms(q.tokens)) {
        const auto& plist = idx.postings(t);
        if (plist.empty()) continue;
        const double idf = bm25_idf(idx.doc_count(), plist.size());
        for (const auto& post : plist)
            acc[post.doc] += detail::bm25_term(idf, post.tf, idx.doc_lengths()[post.doc], idx.avgdl(), p);
    }
    std::vector<scored_doc> all;
    for (std::size_t n = 0; n < acc.size(); ++n)
        if (acc[n] > 0.0) all.push_back({idx.doc_ids()[n], acc[n]});
    const auto keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    return {q.id, std::move(all)};
}

/// f * ln(N / (1 + concept df)), floored at zero.
inline double tfidf_weight(std::size_t n_docs, std::size_t concept_df, double freq) {
    const double w = freq * std::log(static_cast<double>(n_docs) / (1.0 + static_cast<double>(concept_df)));
    return std::max(0.0, w);
}

inline double tfidf_weight(const inverted_index& idx, const std::string& mention, double freq) {
    if (freq < 1.0) throw error("tfidf_weight: frequency must be at least 1");
    return tfidf_weight(idx.doc_count(), idx.concept_df(mention), freq);
}

// --- persistence ------------------------------------------------------------

inline constexpr int index_format_version = 1;

inline nlohmann::json index_to_json(const inverted_index& idx) {
    nlohmann::json j;
    j["format"] = "cmaprank-index";
    j["version"] = index_format_version;
    j["doc_ids"] = idx.doc_ids_;
    j["doc_lengths"] = idx.lengths_;
    nlohmann::json post = nlohmann::json::object();
    for (const auto& [t, plist] : idx.postings_) {
        auto arr = nlohmann::json::array();
        for (const auto& p : plist) arr.push_back({p.doc, p.tf});
        post[t] = std::move(arr);
    }
    j["postings"] = std::move(post);
    j["concept_df"] = idx.concept_df_;
    return j;
}

inline inverted_index index_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "cmaprank-index") throw error("not an index file");
    if (j.value("version", 0) != index_format_version) throw error("unsupported index version");
    inverted_index idx;
    idx.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
    idx.lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
    if (idx.doc_ids_.size() != idx.lengths_.size()) throw error("index: doc id / length count mismatch");
    for (const auto& [t, arr] : j.at("postings").items()) {
        auto& plist = idx.postings_[t];
        for (const auto& p : arr) plist.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
    }
    idx.concept_df_ = j.at("concept_df").get<std::map<std::string, std::size_t>>();
    idx.finish();
    return idx;
}

inline void save_index(const inverted_index& idx, const std::string& path) { write_file(path, index_to_json(idx).dump()); }

inline inverted_index load_index(const std::string& path) {
    try {
        return index_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw error(path + ": " + e.what());
    }
}

// --- TREC run files ---------------------------------------------------------

/// Query id -> ranked documents. Query ids iterate in sorted order.
using run_ranking = std::map<std::string, std::vector<scored_doc>>;

/// Rows "qid Q0 docid rank score tag", rank from 1.
inline std::string serialize_run(const run_ranking& run, const std::string& tag) {
    std::string out;
    for (const auto& [qid, docs] : run) {
        for (std::size_t r = 0; r < docs.size(); ++r) {
            out += qid + " Q0 " + docs[r].doc_id + " " + std::to_string(r + 1) + " " + format_double(docs[r].score)
                 + " " + tag + "\n";
        }
    }
    return out;
}

/// Rows are ordered by rank within each query.
inline run_ranking parse_run(const std::string& content, const std::string& path = "<run>") {
    std::map<std::string, std::vector<std::pair<long, scored_doc>>> rows;
    detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
        std::istringstream in{std::string(line)};
        std::string qid, q0, did, tag;
        long rank = 0;
        double score = 0.0;
        if (!(in >> qid >> q0 >> did >> rank >> score >> tag)) {
            throw error(path + ":" + std::to_string(n) + ": malformed run row");
        }
        rows[qid].push_back({rank, {did, score}});
    });
    run_ranking run;
    for (auto& [qid, list] : rows) {
        std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& dst = run[qid];
        std::set<std::string> seen;
        for (auto& [_, d] : list) {
            if (!seen.insert(d.doc_id).second) throw error(path + ": duplicate doc " + d.doc_id + " for query " + qid);
            dst.push_back(std::move(d));
        }
    }
    return run;
}

}  // namespace cmaprank
