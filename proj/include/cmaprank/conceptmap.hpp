#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmaprank/corpus.hpp"
#include "cmaprank/util.hpp"

namespace cmaprank {

enum class pos_tag : std::uint8_t { noun, verb, adj, det, other };

inline std::string_view to_string(pos_tag t) {
    switch (t) {
    case pos_tag::noun: return "NOUN";
    case pos_tag::verb: return "VERB";
    case pos_tag::adj: return "ADJ";
    case pos_tag::det: return "DET";
    case pos_tag::other: return "OTHER";
    }
    return "OTHER";
}

inline pos_tag parse_pos_tag(std::string_view s) {
    if (s == "NOUN") return pos_tag::noun;
    if (s == "VERB") return pos_tag::verb;
    if (s == "ADJ") return pos_tag::adj;
    if (s == "DET") return pos_tag::det;
    if (s == "OTHER") return pos_tag::other;
    throw error("unknown POS tag: " + std::string(s));
}

struct tagged_token {
    std::string token;
    pos_tag tag;
    int sentence;

    friend bool operator==(const tagged_token&, const tagged_token&) = default;
};

/// Token -> tag lookup. A token listed under several tags resolves by
/// priority NOUN > VERB > ADJ > DET > OTHER.
class lexicon {
public:
    void add(const std::string& token, pos_tag tag) {
        auto& cur = entries_.try_emplace(token, tag).first->second;
        if (static_cast<int>(tag) < static_cast<int>(cur)) cur = tag;
    }

    std::optional<pos_tag> find(const std::string& token) const {
        auto it = entries_.find(token);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }

    /// Closed-class words plus a few common content words.
    static lexicon english() {
        lexicon lx;
        auto add_all = [&](pos_tag t, std::initializer_list<const char*> words) {
            for (const char* w : words) lx.add(w, t);
        };
        add_all(pos_tag::det, {"a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every",
                               "no", "all", "both", "either", "neither", "another", "such", "its", "their", "our",
                               "his", "her", "my", "your"});
        add_all(pos_tag::other,
                {"i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them", "who", "whom", "which",
                 "what", "whose", "in", "on", "at", "of", "for", "with", "by", "from", "to", "into", "onto", "about",
                 "over", "under", "between", "among", "through", "during", "before", "after", "against", "without",
                 "within", "across", "via", "per", "than", "as", "like", "and", "or", "but", "nor", "so", "yet", "if",
                 "because", "while", "although", "though", "whereas", "whether", "not", "very", "also", "only",
                 "just", "more", "most", "less", "least", "too", "here", "there", "then", "now", "however", "thus",
                 "therefore", "how", "when", "where", "why"});
        add_all(pos_tag::verb, {"is", "are", "was", "were", "be", "been", "being", "am", "have", "has", "had", "do",
                                "does", "did", "will", "would", "can", "could", "should", "may", "might", "must",
                                "shall", "prevent", "reduce", "cause", "increase", "show", "report", "find"});
        add_all(pos_tag::adj, {"violent", "new", "high", "low", "severe", "novel", "large", "small", "good", "bad",
                               "early", "late", "public", "viral", "human", "armed"});
        add_all(pos_tag::noun, {"crime", "robbery", "citizen", "mask", "infection", "vaccine", "virus", "society",
                                "prevention", "challenge", "patient", "disease", "use"});
        return lx;
    }

    /// Reads "token<TAB>TAG" lines on top of the built-in entries.
    static lexicon from_tsv(const std::string& content, lexicon base = english()) {
        detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
            std::istringstream in{std::string(line)};
            std::string tok, tag;
            if (!(in >> tok >> tag)) throw error("lexicon line " + std::to_string(n) + ": expected \"token TAG\"");
            base.add(tokenize(tok).empty() ? tok : tokenize(tok).front(), parse_pos_tag(tag));
        });
        return base;
    }

private:
    std::unordered_map<std::string, pos_tag> entries_;
};

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

inline pos_tag suffix_tag(const std::string& token) {
    if (std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return pos_tag::other;
    }
    struct rule {
        std::string_view suffix;
        pos_tag tag;
    };
    // Longest suffix wins; the stem must keep at least three characters.
    static constexpr std::array<rule, 22> rules{{
        {"able", pos_tag::adj}, {"ible", pos_tag::adj}, {"less", pos_tag::adj}, {"tion", pos_tag::noun},
        {"sion", pos_tag::noun}, {"ment", pos_tag::noun}, {"ness", pos_tag::noun}, {"ship", pos_tag::noun},
        {"ance", pos_tag::noun}, {"ence", pos_tag::noun}, {"ous", pos_tag::adj}, {"ful", pos_tag::adj},
        {"ive", pos_tag::adj}, {"ish", pos_tag::adj}, {"ing", pos_tag::verb}, {"ize", pos_tag::verb},
        {"ise", pos_tag::verb}, {"ify", pos_tag::verb}, {"ity", pos_tag::noun}, {"ism", pos_tag::noun},
        {"al", pos_tag::adj}, {"ic", pos_tag::adj},
    }};
    static constexpr std::array<rule, 2> short_rules{{{"ed", pos_tag::verb}, {"ly", pos_tag::other}}};
    const rule* best = nullptr;
    for (const auto& r : rules)
        if (token.size() >= r.suffix.size() + 3 && ends_with(token, r.suffix)
            && (!best || r.suffix.size() > best->suffix.size()))
            best = &r;
    if (!best)
        for (const auto& r : short_rules)
            if (token.size() >= r.suffix.size() + 3 && ends_with(token, r.suffix)) best = &r;
    return best ? best->tag : pos_tag::noun;
}

inline const std::set<std::string, std::less<>>& stop_tokens() {
    static const std::set<std::string, std::less<>> s{
        "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "am", "have", "has", "had", "do",
        "does", "did", "will", "would", "can", "could", "should", "may", "might", "must", "shall", "i", "you",
        "he", "she", "it", "we", "they", "me", "him", "us", "them", "who", "whom", "which", "what", "whose"};
    return s;
}

}  // namespace detail

/// Lexicon lookup first, then the suffix table; unmatched tokens are nouns.
inline std::vector<tagged_token> tag_tokens(const std::vector<std::string>& tokens,
                                            const std::vector<bool>& sentence_end, const lexicon& lx) {
    if (sentence_end.size() != tokens.size()) throw error("tag_tokens: boundary list must parallel the tokens");
    std::vector<tagged_token> out;
    out.reserve(tokens.size());
    int sentence = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        auto tag = lx.find(tokens[i]);
        out.push_back({tokens[i], tag ? *tag : detail::suffix_tag(tokens[i]), sentence});
        if (sentence_end[i]) ++sentence;
    }
    return out;
}

inline std::vector<tagged_token> tag_tokens(const token_stream& s, const lexicon& lx) {
    return tag_tokens(s.tokens, s.sentence_end, lx);
}

/// ies->y, ses->s, s->"" (keeping -ss, -us, -is endings).
inline std::string lemmatize_noun(std::string w) {
    using detail::ends_with;
    if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 4 && ends_with(w, "ses")) return w.substr(0, w.size() - 2);
    if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
        w.pop_back();
    }
    return w;
}

/// Strips -ing / -ed, then undoes a doubled final consonant (stopped -> stop).
inline std::string lemmatize_verb(std::string w) {
    using detail::ends_with;
    bool stripped = false;
    if (w.size() >= 6 && ends_with(w, "ing")) {
        w.resize(w.size() - 3);
        stripped = true;
    } else if (w.size() >= 5 && ends_with(w, "ed")) {
        w.resize(w.size() - 2);
        stripped = true;
    }
    if (stripped && w.size() >= 3) {
        const char last = w.back();
        if (last == w[w.size() - 2] && !detail::is_vowel(last) && last != 'l' && last != 's' && last != 'z') w.pop_back();
    }
    return w;
}

struct phrase {
    std::string text;
    int sentence = 0;

    friend bool operator==(const phrase&, const phrase&) = default;
};

/// Noun phrases are maximal in-sentence (ADJ|NOUN)* NOUN runs, verb phrases
/// maximal VERB runs. Tokens are lemmatized by their tag; articles and stop
/// tokens are removed and phrases left empty are dropped.
inline std::vector<phrase> extract_phrases(const std::vector<tagged_token>& tagged) {
    std::vector<phrase> out;
    auto emit = [&](std::size_t from, std::size_t to) {
        std::string text;
        for (std::size_t k = from; k < to; ++k) {
            const auto& t = tagged[k];
            if (detail::stop_tokens().count(t.token)) continue;
            std::string lemma = t.tag == pos_tag::noun   ? lemmatize_noun(t.token)
                                : t.tag == pos_tag::verb ? lemmatize_verb(t.token)
                                                         : t.token;
            if (!text.empty()) text += ' ';
            text += lemma;
        }
        if (!text.empty()) out.push_back({std::move(text), tagged[from].sentence});
    };
    std::size_t i = 0;
    while (i < tagged.size()) {
        const auto tag = tagged[i].tag;
        const int sent = tagged[i].sentence;
        if (tag == pos_tag::adj || tag == pos_tag::noun) {
            std::size_t j = i;
            std::size_t last_noun = tagged.size();
            while (j < tagged.size() && tagged[j].sentence == sent
                   && (tagged[j].tag == pos_tag::adj || tagged[j].tag == pos_tag::noun)) {
                if (tagged[j].tag == pos_tag::noun) last_noun = j;
                ++j;
            }
            if (last_noun != tagged.size()) emit(i, last_noun + 1);
            i = j;
        } else if (tag == pos_tag::verb) {
            std::size_t j = i;
            while (j < tagged.size() && tagged[j].sentence == sent && tagged[j].tag == pos_tag::verb) ++j;
            emit(i, j);
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

struct concept_node {
    int id = 0;
    std::string mention;
    int freq = 0;

    friend bool operator==(const concept_node&, const concept_node&) = default;
};

/// Undirected concept graph of one document. Edge keys are (i, j) with i < j.
struct concept_map {
    std::string doc_id;
    std::vector<concept_node> nodes;
    std::map<std::pair<int, int>, int> edges;
    /// Document-ordered node ids the edges were derived from. Not persisted.
    std::vector<int> sequence;

    bool empty() const { return nodes.empty(); }
    std::size_t node_count() const { return nodes.size(); }
    std::size_t edge_count() const { return edges.size(); }

    std::vector<std::vector<int>> adjacency() const {
        std::vector<std::vector<int>> adj(nodes.size());
        for (const auto& [e, _] : edges) {
            adj[e.first].push_back(e.second);
            adj[e.second].push_back(e.first);
        }
        for (auto& a : adj) std::sort(a.begin(), a.end());
        return adj;
    }

    /// Graph identity: same ids, mentions, frequencies and weighted edges.
    friend bool operator==(const concept_map& a, const concept_map& b) {
        return a.doc_id == b.doc_id && a.nodes == b.nodes && a.edges == b.edges;
    }
};

/// Nodes in first-occurrence order. Windows of `window` consecutive phrases
/// slide within each sentence (a sentence shorter than the window forms one
/// window); every distinct concept pair in a window gains one unit of weight.
inline concept_map build_concept_map(std::string doc_id, const std::vector<phrase>& phrases, int window = 3) {
    if (window < 2) throw error("co-occurrence window must be at least 2");
    concept_map m;
    m.doc_id = std::move(doc_id);
    std::unordered_map<std::string, int> ids;
    for (const auto& p : phrases) {
        auto [it, fresh] = ids.try_emplace(p.text, static_cast<int>(m.nodes.size()));
        if (fresh) m.nodes.push_back({it->second, p.text, 0});
        ++m.nodes[it->second].freq;
        m.sequence.push_back(it->second);
    }
    const auto w = static_cast<std::size_t>(window);
    std::size_t begin = 0;
    while (begin < phrases.size()) {
        std::size_t end = begin;
        while (end < phrases.size() && phrases[end].sentence == phrases[begin].sentence) ++end;
        const std::size_t len = end - begin;
        const std::size_t n_windows = len <= w ? 1 : len - w + 1;
        for (std::size_t s = 0; s < n_windows; ++s) {
            std::vector<int> members(m.sequence.begin() + static_cast<std::ptrdiff_t>(begin + s),
                                     m.sequence.begin() + static_cast<std::ptrdiff_t>(begin + std::min(s + w, len)));
            std::sort(members.begin(), members.end());
            members.erase(std::unique(members.begin(), members.end()), members.end());
            for (std::size_t a = 0; a < members.size(); ++a)
                for (std::size_t b = a + 1; b < members.size(); ++b) ++m.edges[{members[a], members[b]}];
        }
        begin = end;
    }
    return m;
}

/// Single-sentence convenience overload.
inline concept_map build_concept_map(std::string doc_id, const std::vector<std::string>& phrases, int window = 3) {
    std::vector<phrase> ps;
    ps.reserve(phrases.size());
    for (const auto& p : phrases) ps.push_back({p, 0});
    return build_concept_map(std::move(doc_id), ps, window);
}

struct map_stats_t {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double density = 0.0;
    std::size_t isolated = 0;
};

inline map_stats_t map_stats(const concept_map& m) {
    map_stats_t s;
    s.nodes = m.node_count();
    s.edges = m.edge_count();
    if (s.nodes >= 2) {
        const double n = static_cast<double>(s.nodes);
        s.density = 2.0 * static_cast<double>(s.edges) / (n * (n - 1.0));
    }
    for (const auto& a : m.adjacency())
        if (a.empty()) ++s.isolated;
    return s;
}

struct concept_map_options {
    int window = 3;
};

inline concept_map concept_map_for(const document& doc, const lexicon& lx, const concept_map_options& opt = {}) {
    return build_concept_map(doc.id, extract_phrases(tag_tokens(doc.stream, lx)), opt.window);
}

// --- persistence ------------------------------------------------------------

/// Maps keyed by doc id.
using concept_map_store = std::map<std::string, concept_map>;

inline nlohmann::ordered_json to_json(const concept_map& m) {
    nlohmann::ordered_json j;
    j["doc_id"] = m.doc_id;
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : m.nodes) {
        nlohmann::ordered_json jn;
        jn["id"] = n.id;
        jn["mention"] = n.mention;
        jn["freq"] = n.freq;
        nodes.push_back(std::move(jn));
    }
    j["nodes"] = std::move(nodes);
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [e, w] : m.edges) edges.push_back({e.first, e.second, w});
    j["edges"] = std::move(edges);
    return j;
}

inline concept_map concept_map_from_json(const nlohmann::json& j) {
    concept_map m;
    m.doc_id = j.at("doc_id").get<std::string>();
    for (const auto& jn : j.at("nodes")) {
        concept_node n{jn.at("id").get<int>(), jn.at("mention").get<std::string>(), jn.at("freq").get<int>()};
        if (n.id != static_cast<int>(m.nodes.size())) throw error("node ids must be dense and ordered");
        if (n.freq < 1 || n.mention.empty()) throw error("node " + std::to_string(n.id) + " has invalid mention/freq");
        m.nodes.push_back(std::move(n));
    }
    const int n = static_cast<int>(m.nodes.size());
    for (const auto& je : j.at("edges")) {
        if (!je.is_array() || je.size() != 3) throw error("edges must be [i, j, w] triples");
        int a = je[0].get<int>(), b = je[1].get<int>(), w = je[2].get<int>();
        if (a > b) std::swap(a, b);
        if (a == b || a < 0 || b >= n || w < 1) throw error("invalid edge in map " + m.doc_id);
        m.edges[{a, b}] = w;
    }
    return m;
}

inline std::string serialize_concept_maps(const concept_map_store& store) {
    std::string out;
    for (const auto& [_, m] : store) {
        out += to_json(m).dump();
        out += '\n';
    }
    return out;
}

inline concept_map_store parse_concept_maps(const std::string& content, const std::string& path = "<graphs>") {
    concept_map_store store;
    detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
        try {
            auto m = concept_map_from_json(detail::parse_json_line(line, n, path));
            auto id = m.doc_id;
            if (!store.emplace(id, std::move(m)).second) throw error("duplicate doc_id " + id);
        } catch (const error&) {
            throw;
        } catch (const std::exception& e) {
            throw error(path + ":" + std::to_string(n) + ": " + e.what());
        }
    });
    return store;
}

/// Pre-tagged input: {"doc_id", "tagged": [[token, tag, sentence_idx], ...]}.
inline std::map<std::string, std::vector<tagged_token>> parse_pretagged(const std::string& content,
                                                                       const std::string& path = "<tagged>") {
    std::map<std::string, std::vector<tagged_token>> out;
    detail::for_each_line(content, [&](std::size_t n, std::string_view line) {
        auto j = detail::parse_json_line(line, n, path);
        try {
            auto& dst = out[j.at("doc_id").get<std::string>()];
            int prev = 0;
            for (const auto& t : j.at("tagged")) {
                tagged_token tt{t.at(0).get<std::string>(), parse_pos_tag(t.at(1).get<std::string>()), t.at(2).get<int>()};
                if (tt.sentence < prev) throw error("sentence indices must be non-decreasing");
                prev = tt.sentence;
                tt.token = tokenize(tt.token).empty() ? tt.token : tokenize(tt.token).front();
                dst.push_back(std::move(tt));
            }
        } catch (const std::exception& e) {
            throw error(path + ":" + std::to_string(n) + ": " + e.what());
        }
    });
    return out;
}

}  // namespace cmaprank
