#include "s2s/vocab.hpp"

#include "s2s/corpus.hpp"

#include <algorithm>
#include <map>

namespace s2s {
namespace {

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> tokens{"<pad>", "<sos>", "<eos>", "<unk>"};
    return tokens;
}

bool is_detached(char c) {
    switch (c) {
    case '.': case ',': case '!': case '?': case '"': case '(': case ')':
        return true;
    default:
        return false;
    }
}

bool attaches_left(const std::string& token) {
    return token == "." || token == "," || token == "!" || token == "?";
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

std::vector<std::string> normalize_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (char c : text) {
        if (is_space(c)) {
            flush();
        } else if (is_detached(c)) {
            flush();
            out.emplace_back(1, c);
        } else {
            // Bytes >= 0x80 are UTF-8 continuation data; only ASCII is folded.
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        }
    }
    flush();
    return out;
}

Vocab::Vocab() : id_to_token_(special_tokens()) {
    for (std::size_t i = 0; i < id_to_token_.size(); ++i)
        token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
}

Vocab Vocab::from_tokens(std::vector<std::string> id_to_token) {
    const auto& specials = special_tokens();
    if (id_to_token.size() < specials.size() ||
        !std::equal(specials.begin(), specials.end(), id_to_token.begin()))
        fail(ErrorKind::format, "vocabulary must start with <pad> <sos> <eos> <unk>");
    Vocab v;
    v.token_to_id_.clear();
    v.id_to_token_ = std::move(id_to_token);
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
        auto [it, inserted] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i));
        if (!inserted) fail(ErrorKind::format, "duplicate vocabulary token '" + v.id_to_token_[i] + "'");
    }
    return v;
}

bool Vocab::contains(std::string_view token) const {
    return token_to_id_.find(std::string(token)) != token_to_id_.end();
}

TokenId Vocab::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? special::unk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        fail(ErrorKind::argument, "token id " + std::to_string(id) + " outside vocabulary of size " +
                                      std::to_string(id_to_token_.size()));
    return id_to_token_[static_cast<std::size_t>(id)];
}

Vocab build_vocab(const Corpus& corpus, std::size_t min_count) {
    if (corpus.pairs.empty()) fail(ErrorKind::argument, "cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& pair : corpus.pairs) {
        for (auto& t : normalize_tokenize(pair.question)) ++counts[t];
        for (auto& t : normalize_tokenize(pair.answer)) ++counts[t];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [token, n] : counts) {
        if (n >= min_count && std::find(special_tokens().begin(), special_tokens().end(), token) ==
                                  special_tokens().end())
            kept.emplace_back(token, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens = special_tokens();
    for (auto& [token, n] : kept) tokens.push_back(token);
    return Vocab::from_tokens(std::move(tokens));
}

std::vector<TokenId> encode(std::span<const std::string> tokens, const Vocab& vocab, SequenceRole role,
                            std::size_t max_seq_len) {
    const std::size_t n = std::min(tokens.size(), max_seq_len);
    std::vector<TokenId> ids;
    ids.reserve(n + 2);
    if (role == SequenceRole::target) ids.push_back(special::sos);
    for (std::size_t i = 0; i < n; ++i) ids.push_back(vocab.id(tokens[i]));
    ids.push_back(special::eos);
    return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab) {
    std::string out;
    for (TokenId id : ids) {
        const std::string& token = vocab.token(id);
        if (id == special::pad || id == special::sos || id == special::eos) continue;
        if (!out.empty() && !attaches_left(token)) out.push_back(' ');
        out += token;
    }
    return out;
}

} // namespace s2s
