#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmaprank/util.hpp"

namespace cmaprank {

/// Tokens plus a parallel flag marking the last token of each sentence.
struct token_stream {
    std::vector<std::string> tokens;
    std::vector<bool> sentence_end;

    /// Sentence index of every token, non-decreasing from 0.
    std::vector<int> sentence_ids() const {
        std::vector<int> ids(tokens.size());
        int s = 0;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            ids[i] = s;
            if (sentence_end[i]) ++s;
        }
        return ids;
    }
};

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline bool is_sentence_terminator(char c) { return c == '.' || c == '!' || c == '?' || c == ';'; }

}  // namespace detail

/// Splits text into lowercased words (alphanumeric runs, with internal
/// hyphens and apostrophes kept) and records sentence ends at . ! ? ; and at
/// end of text. Bytes >= 0x80 count as word characters so UTF-8 sequences
/// stay intact.
inline token_stream tokenize_stream(std::string_view text) {
    token_stream out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.tokens.push_back(std::move(cur));
            out.sentence_end.push_back(false);
            cur.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (detail::is_word_byte(c)) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
            continue;
        }
        if ((c == '-' || c == '\'') && !cur.empty() && i + 1 < text.size()
            && detail::is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
            cur.push_back(static_cast<char>(c));
            continue;
        }
        flush();
        if (detail::is_sentence_terminator(static_cast<char>(c)) && !out.tokens.empty()) {
            out.sentence_end.back() = true;
        }
    }
    flush();
    if (!out.tokens.empty()) out.sentence_end.back() = true;
    return out;
}

inline std::vector<std::string> tokenize(std::string_view text) { return tokenize_stream(text).tokens; }

struct document {
    std::string id;
    std::string title;
    std::string body;
    token_stream stream;

    const std::vector<std::string>& tokens() const { return stream.tokens; }

    friend bool operator==(const document& a, const document& b) {
        return a.id == b.id && a.title == b.title && a.body == b.body && a.stream.tokens == b.stream.tokens
            && a.stream.sentence_end == b.stream.sentence_end;
    }
};

/// Title and body are tokenized as two consecutive sentences.
inline document make_document(std::string id, std::string title, std::string body) {
    document d{std::move(id), std::move(title), std::move(body), {}};
    d.stream = tokenize_stream(d.title);
    auto rest = tokenize_stream(d.body);
    d.stream.tokens.insert(d.stream.tokens.end(), rest.tokens.begin(), rest.tokens.end());
    d.stream.sentence_end.insert(d.stream.sentence_end.end(), rest.sentence_end.begin(), rest.sentence_end.end());
    return d;
}

class document_collection {
public:
    document_collection() = default;

    void add(document doc) {
        if (doc.id.empty()) throw error("document id must be non-empty");
        if (by_id_.count(doc.id)) throw error("duplicate document id: " + doc.id);
        by_id_.emplace(doc.id, docs_.size());
        total_tokens_ += doc.tokens().size();
        docs_.push_back(std::move(doc));
    }

    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }
    std::size_t total_tokens() const { return total_tokens_; }
    double average_length() const {
        return docs_.empty() ? 0.0 : static_cast<double>(total_tokens_) / static_cast<double>(docs_.size());
    }

    const std::vector<document>& documents() const { return docs_; }
    auto begin() const { return docs_.begin(); }
    auto end() const { return docs_.end(); }

    bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
    const document& at(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw error("unknown document id: " + id);
        return docs_[it->second];
    }

    friend bool operator==(const document_collection& a, const document_collection& b) { return a.docs_ == b.docs_; }

private:
    std::vector<document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::size_t total_tokens_ = 0;
};

struct query {
    std::string id;
    std::string text;
    std::vector<std::string> tokens;
};

inline query make_query(std::string id, std::string text) {
    query q{std::move(id), std::move(text), {}};
    q.tokens = tokenize(q.text);
    return q;
}

/// Graded relevance judgments keyed by (query id, doc id).
class qrels {
public:
    void add(const std::string& qid, const std::string& did, int grade) {
        if (grade < 0) throw error("negative relevance grade for (" + qid + ", " + did + ")");
        if (!judgments_.emplace(std::make_pair(qid, did), grade).second) {
            throw error("duplicate judgment for (" + qid + ", " + did + ")");
        }
        by_query_[qid].emplace(did, grade);
    }

    std::size_t size() const { return judgments_.size(); }
    bool empty() const { return judgments_.empty(); }

    std::optional<int> grade(const std::string& qid, const std::string& did) const {
        auto it = judgments_.find({qid, did});
        if (it == judgments_.end()) return std::nullopt;
        return it->second;
    }

    bool has_query(const std::string& qid) const { return by_query_.count(qid) > 0; }

    /// Judgments for one query, ordered by doc id.
    const std::map<std::string, int>& for_query(const std::string& qid) const {
        static const std::map<std::string, int> none;
        auto it = by_query_.find(qid);
        return it == by_query_.end() ? none : it->second;
    }

    std::vector<std::string> positives(const std::string& qid) const {
        std::vector<std::string> out;
        for (const auto& [d, g] : for_query(qid))
            if (g > 0) out.push_back(d);
        return out;
    }

    std::vector<std::string> negatives(const std::string& qid) const {
        std::vector<std::string> out;
        for (const auto& [d, g] : for_query(qid))
            if (g == 0) out.push_back(d);
        return out;
    }

    std::vector<std::string> query_ids() const {
        std::vector<std::string> out;
        for (const auto& [q, _] : by_query_) out.push_back(q);
        return out;
    }

    const std::map<std::pair<std::string, std::string>, int>& judgments() const { return judgments_; }

    friend bool operator==(const qrels& a, const qrels& b) { return a.judgments_ == b.judgments_; }

private:
    std::map<std::pair<std::string, std::string>, int> judgments_;
    std::map<std::string, std::map<std::string, int>> by_query_;
};

namespace detail {

template <typename Fn>
void for_each_line(const std::string& content, Fn&& fn) {
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string::npos) nl = content.size();
        std::string_view line(content.data() + pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line_no, line);
        pos = nl + 1;
    }
}

inline nlohmann::json parse_json_line(std::string_view line, std::size_t line_no, const std::string& path) {
    try {
        auto j = nlohmann::json::parse(line);
        if (!j.is_object()) throw error("not a JSON object");
        return j;
    } catch (const std::exception& e) {
        throw error(path + ":" + std::to_string(line_no) + ": malformed line: " + e.what());
    }
}

inline std::string string_field(const nlohmann::json& j, const char* key, bool required, std::size_t line_no,
                                const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) {
        if (required) throw error(path + ":" + std::to_string(line_no) + ": missing field \"" + key + "\"");
        return {};
    }
    if (!it->is_string()) throw error(path + ":" + std::to_string(line_no) + ": field \"" + key + "\" must be a string");
    return it->get<std::string>();
}

}  // namespace detail

inline document_collection parse_collection(const std::string& content, const std::string& path = "<corpus>") {
    document_collection out;
    detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
        auto j = detail::parse_json_line(line, n, path);
        auto id = detail::string_field(j, "id", true, n, path);
        if (id.empty()) throw error(path + ":" + std::to_string(n) + ": empty document id");
        if (out.contains(id)) throw error(path + ":" + std::to_string(n) + ": duplicate document id: " + id);
        out.add(make_document(std::move(id), detail::string_field(j, "title", false, n, path),
                              detail::string_field(j, "text", false, n, path)));
    });
    return out;
}

inline document_collection load_collection(const std::string& path) { return parse_collection(read_file(path), path); }

inline std::string serialize_collection(const document_collection& c) {
    std::string out;
    for (const auto& d : c) {
        nlohmann::ordered_json j;
        j["id"] = d.id;
        j["title"] = d.title;
        j["text"] = d.body;
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline void write_collection(const document_collection& c, const std::string& path) {
    write_file(path, serialize_collection(c));
}

inline std::vector<query> parse_queries(const std::string& content, const std::string& path = "<queries>") {
    std::vector<query> out;
    std::set<std::string> seen;
    detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
        auto j = detail::parse_json_line(line, n, path);
        auto q = make_query(detail::string_field(j, "id", true, n, path), detail::string_field(j, "text", true, n, path));
        const auto where = path + ":" + std::to_string(n) + ": ";
        if (q.id.empty()) throw error(where + "empty query id");
        if (!seen.insert(q.id).second) throw error(where + "duplicate query id: " + q.id);
        if (q.tokens.empty()) throw error(where + "query " + q.id + " has no tokens");
        out.push_back(std::move(q));
    });
    return out;
}

inline std::string serialize_queries(const std::vector<query>& qs) {
    std::string out;
    for (const auto& q : qs) {
        nlohmann::ordered_json j;
        j["id"] = q.id;
        j["text"] = q.text;
        out += j.dump();
        out += '\n';
    }
    return out;
}

/// TREC qrels rows "qid iteration docid grade". Query ids must be in
/// `known_queries` when that set is non-empty.
inline qrels parse_qrels(const std::string& content, const std::set<std::string>& known_queries,
                         const std::string& path = "<qrels>") {
    qrels out;
    detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
        std::istringstream in{std::string(line)};
        std::string qid, iter, did, grade_text, extra;
        const auto where = path + ":" + std::to_string(n) + ": ";
        if (!(in >> qid >> iter >> did >> grade_text) || (in >> extra)) {
            throw error(where + "malformed qrels row, expected \"qid iteration docid grade\"");
        }
        long grade = 0;
        try {
            std::size_t used = 0;
            grade = std::stol(grade_text, &used);
            if (used != grade_text.size()) throw error("trailing characters");
        } catch (const std::exception&) {
            throw error(where + "grade is not an integer: " + grade_text);
        }
        if (grade < 0) throw error(where + "negative grade " + grade_text);
        if (!known_queries.empty() && !known_queries.count(qid)) throw error(where + "unknown query id: " + qid);
        try {
            out.add(qid, did, static_cast<int>(grade));
        } catch (const error& e) {
            throw error(where + e.what());
        }
    });
    return out;
}

inline std::string serialize_qrels(const qrels& q) {
    std::string out;
    for (const auto& [key, grade] : q.judgments()) {
        out += key.first + " 0 " + key.second + " " + std::to_string(grade) + "\n";
    }
    return out;
}

struct topic_set {
    std::vector<query> queries;
    qrels judgments;
    /// Judgments whose doc id is absent from the collection (reported, not fatal).
    std::size_t unknown_doc_judgments = 0;
};

inline topic_set load_topics(const std::string& queries_path, const std::string& qrels_path,
                             const document_collection* collection = nullptr) {
    topic_set t;
    t.queries = parse_queries(read_file(queries_path), queries_path);
    std::set<std::string> ids;
    for (const auto& q : t.queries) ids.insert(q.id);
    const auto content = read_file(qrels_path);
    if (ids.empty() && content.find_first_not_of(" \t\r\n") != std::string::npos) {
        throw error(qrels_path + ": judgments present but no queries loaded");
    }
    t.judgments = parse_qrels(content, ids, qrels_path);
    if (collection) {
        for (const auto& [key, _] : t.judgments.judgments())
            if (!collection->contains(key.second)) ++t.unknown_doc_judgments;
    }
    return t;
}

// --- synthetic fixtures -----------------------------------------------------

struct synth_config {
    std::size_t n_docs = 200;
    std::size_t n_queries = 10;
    std::size_t vocab_size = 400;
    std::size_t concepts_per_query = 3;
    double noise_rate = 0.1;
    /// Hard negatives carry every planted token but never a planted phrase.
    bool adversarial = false;
};

struct synthetic_set {
    document_collection collection;
    std::vector<query> queries;
    qrels judgments;
    /// Planted concept phrases per query id.
    std::map<std::string, std::vector<std::string>> planted;
};

namespace detail {

class word_factory {
public:
    explicit word_factory(rng& r) : rng_(r) {}

    /// Pronounceable stem ending in a consonant that no tagger suffix rule
    /// or lemmatizer rule reacts to.
    std::string stem() {
        static constexpr std::string_view onset = "bdfgkmnprtvz";
        static constexpr std::string_view vowel = "aeiou";
        static constexpr std::string_view coda = "kmnprtxz";
        for (;;) {
            std::string w;
            const auto syllables = 2 + rng_.index(2);
            for (std::size_t s = 0; s < syllables; ++s) {
                w.push_back(onset[rng_.index(onset.size())]);
                w.push_back(vowel[rng_.index(vowel.size())]);
            }
            w.push_back(coda[rng_.index(coda.size())]);
            if (used_.insert(w).second) return w;
        }
    }

private:
    rng& rng_;
    std::set<std::string> used_;
};

}  // namespace detail

/// Deterministic planted-concept corpus. Relevant documents (grade 2) hold
/// every planted phrase of their query with planted pairs sharing a
/// sentence; grade 1 documents hold two planted phrases; judged negatives
/// (grade 0) share surface material with the query without its concept pairs.
inline synthetic_set generate_synthetic(const synth_config& cfg, std::uint64_t seed) {
    if (cfg.n_queries == 0) throw error("synthetic config: n_queries must be positive");
    if (cfg.n_docs < 2 * cfg.n_queries) throw error("synthetic config: n_docs must be at least 2 * n_queries");
    if (cfg.concepts_per_query < 2) throw error("synthetic config: need at least 2 planted concepts per query");
    if (cfg.noise_rate < 0.0 || cfg.noise_rate > 1.0) throw error("synthetic config: noise_rate must lie in [0, 1]");
    const std::size_t planted_nouns = cfg.n_queries * cfg.concepts_per_query;
    if (cfg.vocab_size < planted_nouns + 30) {
        throw error("synthetic config: vocab_size must be at least " + std::to_string(planted_nouns + 30));
    }

    rng r(seed);
    detail::word_factory words(r);
    static constexpr std::string_view adj_suffix[] = {"ous", "al", "ive", "ic"};

    std::vector<std::string> nouns, adjs, verbs;
    for (std::size_t i = 0; i < cfg.vocab_size; ++i) nouns.push_back(words.stem());
    const std::size_t n_adj = std::max(planted_nouns + 10, cfg.vocab_size / 3);
    for (std::size_t i = 0; i < n_adj; ++i) adjs.push_back(words.stem() + std::string(adj_suffix[i % 4]));
    for (std::size_t i = 0; i < std::max<std::size_t>(10, cfg.vocab_size / 4); ++i) verbs.push_back(words.stem() + "ed");

    // Planted words come off the front of each pool; filler never uses them.
    struct concept_phrase {
        std::string adj, noun;
        std::string text() const { return adj + " " + noun; }
    };
    std::vector<std::vector<concept_phrase>> planted(cfg.n_queries);
    for (std::size_t q = 0; q < cfg.n_queries; ++q)
        for (std::size_t c = 0; c < cfg.concepts_per_query; ++c) {
            const auto k = q * cfg.concepts_per_query + c;
            planted[q].push_back({adjs[k], nouns[k]});
        }
    const std::vector<std::string> filler_nouns(nouns.begin() + static_cast<std::ptrdiff_t>(planted_nouns), nouns.end());
    const std::vector<std::string> filler_adjs(adjs.begin() + static_cast<std::ptrdiff_t>(planted_nouns), adjs.end());

    auto filler_np = [&](std::size_t owner) {
        if (cfg.n_queries > 1 && r.bernoulli(cfg.noise_rate)) {
            auto other = r.index(cfg.n_queries - 1);
            if (other >= owner) ++other;
            return planted[other][r.index(cfg.concepts_per_query)].text();
        }
        std::string np;
        if (r.bernoulli(0.6)) np = filler_adjs[r.index(filler_adjs.size())] + " ";
        return np + filler_nouns[r.index(filler_nouns.size())];
    };
    auto verb = [&] { return verbs[r.index(verbs.size())]; };
    auto sentence = [&](const std::string& a, const std::string& b, const std::string& c) {
        return "The " + a + " " + verb() + " a " + b + " with " + c + ".";
    };

    enum class kind { grade2, grade1, negative, background };
    struct draft {
        kind k;
        std::size_t q;
    };
    std::vector<draft> drafts;
    const std::size_t per_query = cfg.n_docs / cfg.n_queries;
    const std::size_t n2 = std::max<std::size_t>(1, per_query / 6);
    const std::size_t n1 = per_query >= 10 ? per_query / 10 : 0;
    const std::size_t nneg = std::max<std::size_t>(1, per_query / 4);
    for (std::size_t q = 0; q < cfg.n_queries; ++q) {
        for (std::size_t i = 0; i < n2; ++i) drafts.push_back({kind::grade2, q});
        for (std::size_t i = 0; i < n1 && n2 + n1 + nneg <= per_query; ++i) drafts.push_back({kind::grade1, q});
        for (std::size_t i = 0; i < nneg; ++i) drafts.push_back({kind::negative, q});
    }
    while (drafts.size() < cfg.n_docs) drafts.push_back({kind::background, drafts.size() % cfg.n_queries});
    r.shuffle(drafts);

    synthetic_set out;
    for (std::size_t i = 0; i < drafts.size(); ++i) {
        const auto& dr = drafts[i];
        const auto& pl = planted[dr.q];
        std::vector<std::string> sentences;
        const bool dense = cfg.adversarial && dr.k == kind::negative;
        const std::size_t n_filler = dense ? 1 + r.index(2) : 3 + r.index(4);
        for (std::size_t s = 0; s < n_filler; ++s) sentences.push_back(sentence(filler_np(dr.q), filler_np(dr.q), filler_np(dr.q)));

        int grade = -1;
        switch (dr.k) {
        case kind::grade2: {
            grade = 2;
            for (std::size_t c = 0; c < pl.size(); ++c) {
                const auto& next = pl[(c + 1) % pl.size()];
                sentences.push_back(sentence(pl[c].text(), next.text(), filler_np(dr.q)));
            }
            break;
        }
        case kind::grade1: {
            grade = 1;
            const auto a = r.index(pl.size());
            const auto b = (a + 1 + r.index(pl.size() - 1)) % pl.size();
            sentences.push_back(sentence(pl[a].text(), pl[b].text(), filler_np(dr.q)));
            break;
        }
        case kind::negative: {
            grade = 0;
            if (cfg.adversarial) {
                // Every planted token three times, always in a foreign phrase,
                // packed densely so the surface match beats the relevant docs.
                std::vector<std::string> nps;
                for (int rep = 0; rep < 3; ++rep)
                    for (const auto& c : pl) {
                        nps.push_back(c.adj + " " + filler_nouns[r.index(filler_nouns.size())]);
                        nps.push_back(filler_adjs[r.index(filler_adjs.size())] + " " + c.noun);
                    }
                r.shuffle(nps);
                while (nps.size() % 3) nps.push_back(filler_np(dr.q));
                for (std::size_t k = 0; k < nps.size(); k += 3) sentences.push_back(sentence(nps[k], nps[k + 1], nps[k + 2]));
            } else {
                sentences.push_back(sentence(pl[r.index(pl.size())].text(), filler_np(dr.q), filler_np(dr.q)));
            }
            break;
        }
        case kind::background:
            break;
        }
        r.shuffle(sentences);
        std::string body;
        for (const auto& s : sentences) {
            if (!body.empty()) body += ' ';
            body += s;
        }
        char id[32];
        std::snprintf(id, sizeof id, "d%04zu", i + 1);
        const auto title = "Notes on " + filler_nouns[r.index(filler_nouns.size())];
        out.collection.add(make_document(id, title, body));
        if (grade >= 0) {
            char qid[32];
            std::snprintf(qid, sizeof qid, "q%02zu", dr.q + 1);
            out.judgments.add(qid, id, grade);
        }
    }
    for (std::size_t q = 0; q < cfg.n_queries; ++q) {
        char qid[32];
        std::snprintf(qid, sizeof qid, "q%02zu", q + 1);
        std::string text;
        auto& names = out.planted[qid];
        for (const auto& c : planted[q]) {
            if (!text.empty()) text += ' ';
            text += c.text();
            names.push_back(c.text());
        }
        out.queries.push_back(make_query(qid, text));
    }
    return out;
}

}  // namespace cmaprank
