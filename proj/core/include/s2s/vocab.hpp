#pragma once

#include "s2s/tensor.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace s2s {

struct Corpus;

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId sos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId unk = 3;
inline constexpr std::size_t count = 4;
} // namespace special

inline constexpr std::size_t default_max_seq_len = 30;

/// Lowercase, split on whitespace, detach . , ! ? " ( ) as standalone tokens.
/// Apostrophes stay inside words, so contractions remain single tokens.
std::vector<std::string> normalize_tokenize(std::string_view text);

/// Token <-> id mapping. Ids 0..3 are always <pad>, <sos>, <eos>, <unk>.
class Vocab {
public:
    /// Vocabulary holding only the special tokens.
    Vocab();

    /// Builds from an id-ordered token list whose first four entries must be
    /// the special tokens. Duplicates are a format error.
    static Vocab from_tokens(std::vector<std::string> id_to_token);

    std::size_t size() const noexcept { return id_to_token_.size(); }
    bool contains(std::string_view token) const;
    /// Id of `token`, or UNK when absent.
    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.id_to_token_ == b.id_to_token_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
};

/// Ids ordered by descending frequency, ties lexicographic; tokens seen fewer
/// than `min_count` times are left out and later encode to UNK.
Vocab build_vocab(const Corpus& corpus, std::size_t min_count = 1);

enum class SequenceRole { source, target };

/// Source: tokens + EOS. Target: SOS + tokens + EOS. Tokens are truncated to
/// `max_seq_len` before the markers are added.
std::vector<TokenId> encode(std::span<const std::string> tokens, const Vocab& vocab, SequenceRole role,
                            std::size_t max_seq_len = default_max_seq_len);

/// Drops PAD/SOS/EOS and joins with spaces, with no space before . , ! ?
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

} // namespace s2s
