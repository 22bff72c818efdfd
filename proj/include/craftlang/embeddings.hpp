#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "craftlang/env.hpp"
#include "craftlang/recipes.hpp"
#include "craftlang/rng.hpp"
#include "craftlang/text.hpp"

namespace craftlang {

inline constexpr int kEmbeddingDim = 300;

/// Frozen word vectors. Lookups of unknown words give the zero vector.
class EmbeddingTable {
public:
    using Vector = std::vector<float>;

    EmbeddingTable() = default;

    /// Reads "word v1 ... v300" lines. When `keep` is non-empty only those
    /// words are retained (full GloVe files are several GB).
    static EmbeddingTable load_text(const std::filesystem::path& path, const std::set<std::string>& keep = {}) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
        EmbeddingTable t;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string word;
            ss >> word;
            if (!keep.empty() && !keep.count(word)) continue;
            Vector v;
            v.reserve(kEmbeddingDim);
            float x;
            while (ss >> x) v.push_back(x);
            if (v.size() != static_cast<std::size_t>(kEmbeddingDim))
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                         std::to_string(kEmbeddingDim) + " values, got " + std::to_string(v.size()));
            t.vectors_[word] = std::move(v);
        }
        t.source_ = "file:" + path.filename().string();
        return t;
    }

    /// Deterministic pseudo-embeddings: one seeded Gaussian direction per
    /// word, scaled to unit norm.
    static EmbeddingTable pseudo(const std::set<std::string>& words, std::uint64_t seed = 0) {
        EmbeddingTable t;
        for (const auto& w : words) {
            Rng rng(mix64(seed, fnv1a(w)));
            Vector v(kEmbeddingDim);
            double norm = 0;
            for (auto& x : v) {
                x = static_cast<float>(rng.normal());
                norm += static_cast<double>(x) * x;
            }
            const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
            for (auto& x : v) x *= inv;
            t.vectors_[w] = std::move(v);
        }
        t.source_ = "pseudo:" + std::to_string(seed);
        return t;
    }

    const Vector& lookup(std::string_view word) const {
        auto it = vectors_.find(std::string(word));
        return it == vectors_.end() ? zero() : it->second;
    }

    bool contains(std::string_view word) const { return vectors_.count(std::string(word)) > 0; }

    /// Sum of the word vectors of a multi-word name ("Iron Ore Vein").
    Vector phrase(std::string_view text) const {
        Vector out(kEmbeddingDim, 0.0f);
        for (const auto& tok : tokenize(text)) {
            const auto& v = lookup(tok);
            for (int i = 0; i < kEmbeddingDim; ++i) out[static_cast<std::size_t>(i)] += v[static_cast<std::size_t>(i)];
        }
        return out;
    }

    std::size_t size() const { return vectors_.size(); }
    const std::string& source() const { return source_; }

    friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) { return a.vectors_ == b.vectors_; }

private:
    static const Vector& zero() {
        static const Vector z(kEmbeddingDim, 0.0f);
        return z;
    }

    std::unordered_map<std::string, Vector> vectors_;
    std::string source_ = "empty";
};

/// Every word appearing in an item, node or bench name.
inline std::set<std::string> recipe_words(const RecipeGraph& g) {
    std::set<std::string> out;
    auto add = [&](std::string_view s) {
        for (auto& t : tokenize(s)) out.insert(t);
    };
    for (std::size_t i = 0; i < g.item_count(); ++i) add(g.item_name(static_cast<ItemId>(i)));
    for (const auto& m : g.mine_rules()) add(m.node);
    for (const auto& b : g.benches()) add(b);
    return out;
}

/// GloVe vectors from the data directory when present, otherwise the
/// pseudo-embedding fallback over `words`.
inline EmbeddingTable default_embeddings(const std::set<std::string>& words, std::uint64_t seed = 0) {
    const auto glove = data_dir() / "glove.300d.txt";
    if (std::filesystem::exists(glove)) return EmbeddingTable::load_text(glove, words);
    return EmbeddingTable::pseudo(words, seed);
}

}  // namespace craftlang
