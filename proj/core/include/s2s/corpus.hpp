#pragma once

#include "s2s/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace s2s {

struct ExchangePair {
    std::string question;
    std::string answer;

    friend bool operator==(const ExchangePair&, const ExchangePair&) = default;
};

struct Corpus {
    std::vector<ExchangePair> pairs;
    std::string source_tag;
};

/// Reads JSONL, one {"q": ..., "a": ...} object per line. Blank lines are
/// skipped; every malformed line is collected into a single parse error.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Word lists the synthetic generator draws from.
struct PhraseBank {
    std::vector<std::string> question_frames;  ///< contain "{}" for the topic
    std::vector<std::string> topics;
    std::vector<std::string> open_questions;
    std::vector<std::string> positive_verbs;
    std::vector<std::string> negative_situations;
    std::vector<std::string> fillers;

    /// The lists compiled in from core/data.
    static const PhraseBank& builtin();
};

/// Share of generated answers that are non-sarcastic fillers.
inline constexpr double filler_fraction = 0.25;

/// Deterministic in `seed`. Sarcastic answers are "i <positive verb> <negative
/// situation>" with the verb fixed by the question frame and the situation by the
/// topic; round(n * filler_fraction) answers are fillers instead. Questions are
/// distinct until the question pool is exhausted.
Corpus generate_sarcasm_corpus(std::size_t n_pairs, std::uint64_t seed,
                               const PhraseBank& bank = PhraseBank::builtin());

struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<float>> vectors;
};

struct GloveLoad {
    EmbeddingTable table;
    double coverage = 0.0;  ///< matched tokens / non-special vocabulary size
};

/// Parses the GloVe text format, keeping only tokens present in `vocab`.
/// Every line must carry exactly `embed_dim` values.
GloveLoad load_glove(const std::filesystem::path& path, const Vocab& vocab, std::size_t embed_dim);

/// Dimension of the first vector line in a GloVe file.
std::size_t sniff_glove_dim(const std::filesystem::path& path);

} // namespace s2s
