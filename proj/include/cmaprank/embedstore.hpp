#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmaprank/conceptmap.hpp"
#include "cmaprank/corpus.hpp"
#include "cmaprank/util.hpp"

namespace cmaprank {

using vec = std::vector<double>;

/// Word vectors with a hashed fallback for out-of-vocabulary tokens.
class embedding_table {
public:
    explicit embedding_table(std::size_t dim = 50, std::uint64_t fallback_seed = 0x5eedULL)
        : dim_(dim), seed_(fallback_seed) {
        if (dim == 0) throw error("embedding dimension must be positive");
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    std::uint64_t fallback_seed() const { return seed_; }
    void set_fallback_seed(std::uint64_t s) { seed_ = s; }

    /// Returns true when an existing entry was replaced.
    bool insert(const std::string& token, vec v) {
        if (v.size() != dim_) throw error("embedding for '" + token + "' has wrong dimension");
        auto [it, fresh] = vectors_.insert_or_assign(token, std::move(v));
        if (fresh) order_.push_back(token);
        return !fresh;
    }

    const vec* find(const std::string& token) const {
        auto it = vectors_.find(token);
        return it == vectors_.end() ? nullptr : &it->second;
    }

    /// Insertion order, used when writing the table back out.
    const std::vector<std::string>& tokens() const { return order_; }

    /// Stored vector, or a unit-norm Gaussian direction seeded by
    /// hash(token) and the fallback seed.
    vec embed(const std::string& token) const {
        if (const auto* v = find(token)) return *v;
        rng r(splitmix64(fnv1a(token) ^ splitmix64(seed_)));
        vec out(dim_);
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& x : out) {
                x = r.normal();
                norm2 += x * x;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& x : out) x *= inv;
        return out;
    }

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::unordered_map<std::string, vec> vectors_;
    std::vector<std::string> order_;
};

struct embedding_load_result {
    embedding_table table;
    std::size_t duplicates = 0;
};

/// word2vec text format: "count dim" header, then "token v1 ... vdim" rows.
inline embedding_load_result parse_embeddings(const std::string& content, std::uint64_t fallback_seed = 0x5eedULL,
                                              const std::string& path = "<embeddings>") {
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    std::size_t count = 0, dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    {
        std::istringstream h(line);
        if (!(h >> count >> dim) || dim == 0) throw error(path + ":" + std::to_string(line_no) + ": bad header, expected \"count dim\"");
    }
    embedding_load_result res{embedding_table(dim, fallback_seed), 0};
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        std::string token;
        row >> token;
        vec v;
        double x;
        while (row >> x) v.push_back(x);
        if (!row.eof()) throw error(path + ":" + std::to_string(line_no) + ": non-numeric value");
        if (v.size() != dim) {
            throw error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values, got "
                        + std::to_string(v.size()));
        }
        if (res.table.insert(token, std::move(v))) ++res.duplicates;
        ++rows;
    }
    if (rows != count) {
        throw error(path + ": header declares " + std::to_string(count) + " rows but file has " + std::to_string(rows));
    }
    return res;
}

inline embedding_load_result load_embeddings(const std::string& path, std::uint64_t fallback_seed = 0x5eedULL) {
    return parse_embeddings(read_file(path), fallback_seed, path);
}

inline std::string serialize_embeddings(const embedding_table& t) {
    std::string out = std::to_string(t.size()) + " " + std::to_string(t.dim()) + "\n";
    for (const auto& tok : t.tokens()) {
        out += tok;
        for (double x : *t.find(tok)) {
            out += ' ';
            out += exact_double(x);
        }
        out += '\n';
    }
    return out;
}

inline vec embed_token(const embedding_table& t, const std::string& token) { return t.embed(token); }

inline vec mean_embedding(const embedding_table& t, const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw error("cannot embed an empty token list");
    vec out(t.dim(), 0.0);
    for (const auto& tok : tokens) {
        const auto v = t.embed(tok);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    }
    for (auto& x : out) x /= static_cast<double>(tokens.size());
    return out;
}

/// Mean of the mention's token vectors.
inline vec node_features(const embedding_table& t, const concept_node& c) {
    if (c.mention.empty()) throw error("concept mention must be non-empty");
    std::vector<std::string> toks;
    std::istringstream in(c.mention);
    for (std::string w; in >> w;) toks.push_back(w);
    return mean_embedding(t, toks);
}

/// Token-mean query vector, before the model's learned projection.
inline vec query_embedding(const embedding_table& t, const query& q) {
    if (q.tokens.empty()) throw error("query " + q.id + " has no tokens");
    return mean_embedding(t, q.tokens);
}

}  // namespace cmaprank
