#ifndef KDNLI_VOCAB_HPP_
#define KDNLI_VOCAB_HPP_

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kdnli/error.hpp"

namespace kdnli {

/// 64-bit FNV-1a. Stable across builds and platforms, unlike std::hash.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) words.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return words;
}

inline std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

/// Token <-> id map. Ids 0-3 are reserved for PAD, UNK, BOS and EOS; every
/// other token gets the next contiguous id.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kBos = 2;
    static constexpr std::size_t kEos = 3;
    static constexpr std::size_t kReserved = 4;

    Vocabulary() : tokens_{"<pad>", "<unk>", "<bos>", "<eos>"} {
        for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
    }

    explicit Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
        for (const auto& t : tokens) {
            if (index_.count(t)) {
                throw DataError("duplicate vocabulary token '" + t + "'");
            }
            add(t);
        }
    }

    /// Id of `token`, inserting it when absent.
    std::size_t add(const std::string& token) {
        if (token.empty() || split_whitespace(token).size() != 1 || split_whitespace(token)[0] != token) {
            throw DataError("vocabulary tokens must be non-empty and whitespace-free");
        }
        auto [it, inserted] = index_.emplace(token, tokens_.size());
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    std::optional<std::size_t> find(const std::string& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t id_or_unk(const std::string& token) const { return find(token).value_or(kUnk); }

    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    std::size_t size() const { return tokens_.size(); }

    /// Non-reserved tokens in id order.
    std::vector<std::string> words() const { return {tokens_.begin() + kReserved, tokens_.end()}; }

    std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a64("");
        for (const auto& t : tokens_) h = fnv1a64(t + "\n", h);
        return h;
    }

    /// One token per line; the token on line k (0-based) has id k + 4.
    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open vocabulary file " + path.string());
        std::vector<std::string> tokens;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty vocabulary line");
            }
            tokens.push_back(line);
        }
        return Vocabulary(tokens);
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write vocabulary file " + path.string());
        for (std::size_t i = kReserved; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
    }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Cuts `text` to at most `max_chars` bytes without splitting a UTF-8 sequence.
inline std::string_view truncate_utf8(std::string_view text, std::size_t max_chars) {
    if (text.size() <= max_chars) return text;
    std::size_t cut = max_chars;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return text.substr(0, cut);
}

/// Lowercases, splits on whitespace and maps words to ids wrapped in BOS/EOS.
/// The text is first cut to max_sentence_length characters, and the id
/// sequence (including BOS/EOS) to max_tokens_length.
inline std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab,
                                         std::size_t max_tokens_length,
                                         std::size_t max_sentence_length = 256) {
    if (max_tokens_length < 3) {
        throw ArgumentError("max_tokens_length must leave room for BOS, EOS and one word");
    }
    const auto words = split_whitespace(to_lower_ascii(truncate_utf8(text, max_sentence_length)));
    if (words.empty()) {
        throw EmptyInputError("cannot tokenize empty or whitespace-only text");
    }
    const std::size_t kept = std::min(words.size(), max_tokens_length - 2);
    std::vector<std::size_t> ids;
    ids.reserve(kept + 2);
    ids.push_back(Vocabulary::kBos);
    for (std::size_t i = 0; i < kept; ++i) ids.push_back(vocab.id_or_unk(words[i]));
    ids.push_back(Vocabulary::kEos);
    return ids;
}

}  // namespace kdnli

#endif  // KDNLI_VOCAB_HPP_
