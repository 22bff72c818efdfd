#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace craftlang {

/// Lowercased, punctuation-stripped whitespace tokenization.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '\'') {
            continue;  // "don't" -> "dont"
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string join(std::span<const std::string> tokens, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

/// Hook for instruction cleanup before tokenization. Currently whitespace
/// collapsing only; there is no spell correction.
inline std::string normalize_instruction(std::string_view text) { return join(tokenize(text)); }

using TokenId = int;

/// Token <-> id mapping with four reserved ids.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kStart = 1;
    static constexpr TokenId kEnd = 2;
    static constexpr TokenId kUnk = 3;

    Vocabulary() { add_specials(); }

    /// Ids ordered by descending frequency, then alphabetically; tokens seen
    /// fewer than `min_count` times are left out and map to <unk>.
    static Vocabulary build(std::span<const std::string> texts, int min_count = 5) {
        std::map<std::string, int> freq;
        for (const auto& t : texts)
            for (auto& tok : tokenize(t)) ++freq[tok];
        std::vector<std::pair<std::string, int>> kept;
        for (auto& [tok, n] : freq)
            if (n >= min_count) kept.emplace_back(tok, n);
        std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        Vocabulary v;
        v.min_count_ = min_count;
        for (auto& [tok, n] : kept) v.add(tok);
        return v;
    }

    TokenId id(std::string_view token) const {
        auto it = index_.find(std::string(token));
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens_.size(); }
    int min_count() const { return min_count_; }
    bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

    /// Token ids of `text` without start/end markers.
    std::vector<TokenId> encode(std::string_view text) const {
        std::vector<TokenId> out;
        for (const auto& tok : tokenize(text)) out.push_back(id(tok));
        return out;
    }

    /// Text of `ids`, stopping at <end> and skipping <pad>/<start>.
    std::string decode(std::span<const TokenId> ids) const {
        std::vector<std::string> words;
        for (TokenId t : ids) {
            if (t == kEnd) break;
            if (t == kPad || t == kStart) continue;
            words.push_back(token(t));
        }
        return join(words);
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    nlohmann::json to_json() const { return {{"min_count", min_count_}, {"tokens", tokens_}}; }

    static Vocabulary from_json(const nlohmann::json& j) {
        Vocabulary v;
        v.tokens_.clear();
        v.index_.clear();
        v.min_count_ = j.at("min_count").get<int>();
        for (const auto& t : j.at("tokens")) v.add(t.get<std::string>());
        if (v.size() < 4 || v.token(kPad) != "<pad>" || v.token(kStart) != "<start>" || v.token(kEnd) != "<end>" ||
            v.token(kUnk) != "<unk>")
            throw std::invalid_argument("vocabulary: missing special tokens");
        return v;
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    void add_specials() {
        for (const char* s : {"<pad>", "<start>", "<end>", "<unk>"}) add(s);
    }

    void add(const std::string& tok) {
        index_.emplace(tok, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(tok);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    int min_count_ = 5;
};

}  // namespace craftlang
