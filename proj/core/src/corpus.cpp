#include "s2s/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace s2s {

namespace phrase_data {
std::string_view lookup(std::string_view name);
}

namespace {

std::vector<std::string> read_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> builtin_list(std::string_view name) {
    auto lines = read_lines(phrase_data::lookup(name));
    if (lines.empty()) fail(ErrorKind::format, "phrase list '" + std::string(name) + "' is empty");
    return lines;
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[pick(rng, i)]);
}

std::string fill_frame(const std::string& frame, const std::string& topic) {
    std::string out = frame;
    if (auto at = out.find("{}"); at != std::string::npos) out.replace(at, 2, topic);
    return out;
}

std::string trim_copy(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

} // namespace

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read corpus file " + path.string());

    Corpus corpus;
    corpus.source_tag = path.filename().string();
    std::vector<std::string> problems;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            problems.push_back(where + ": not a JSON object");
            continue;
        }
        auto q = obj.find("q");
        auto a = obj.find("a");
        if (q == obj.end() || !q->is_string()) {
            problems.push_back(where + ": missing string field \"q\"");
            continue;
        }
        if (a == obj.end() || !a->is_string()) {
            problems.push_back(where + ": missing string field \"a\"");
            continue;
        }
        ExchangePair pair{q->get<std::string>(), a->get<std::string>()};
        if (normalize_tokenize(pair.question).empty() || normalize_tokenize(pair.answer).empty()) {
            problems.push_back(where + ": question and answer must contain at least one token");
            continue;
        }
        corpus.pairs.push_back(std::move(pair));
    }
    if (!problems.empty()) {
        std::string msg = "malformed corpus " + path.string() + ":";
        for (auto& p : problems) msg += "\n  " + p;
        fail(ErrorKind::parse, msg);
    }
    if (corpus.pairs.empty()) fail(ErrorKind::parse, "empty corpus: " + path.string());
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write corpus file " + path.string());
    for (const auto& pair : corpus.pairs) {
        nlohmann::ordered_json obj;
        obj["q"] = pair.question;
        obj["a"] = pair.answer;
        out << obj.dump() << '\n';
    }
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

const PhraseBank& PhraseBank::builtin() {
    static const PhraseBank bank = [] {
        PhraseBank b;
        b.question_frames = builtin_list("question_frames");
        b.topics = builtin_list("topics");
        b.open_questions = builtin_list("open_questions");
        b.positive_verbs = builtin_list("positive_verbs");
        b.negative_situations = builtin_list("negative_situations");
        b.fillers = builtin_list("fillers");
        return b;
    }();
    return bank;
}

Corpus generate_sarcasm_corpus(std::size_t n_pairs, std::uint64_t seed, const PhraseBank& bank) {
    if (n_pairs < 1) fail(ErrorKind::argument, "generate_sarcasm_corpus needs n_pairs >= 1");
    if (bank.positive_verbs.empty() || bank.negative_situations.empty() || bank.fillers.empty() ||
        (bank.open_questions.empty() && (bank.question_frames.empty() || bank.topics.empty())))
        fail(ErrorKind::argument, "phrase bank is missing a required list");

    std::mt19937_64 rng(seed);

    // Each question carries fixed answer choices: the verb follows the frame, the
    // situation and filler follow the topic. Only the filler/sarcastic split is random.
    struct Prompt {
        std::string text;
        std::size_t verb, situation, filler;
    };
    const std::size_t nv = bank.positive_verbs.size(), ns = bank.negative_situations.size(), nf = bank.fillers.size();
    std::vector<Prompt> pool;
    for (std::size_t fi = 0; fi < bank.question_frames.size(); ++fi)
        for (std::size_t ti = 0; ti < bank.topics.size(); ++ti)
            pool.push_back({fill_frame(bank.question_frames[fi], bank.topics[ti]), fi % nv, ti % ns, ti % nf});
    for (std::size_t oi = 0; oi < bank.open_questions.size(); ++oi) {
        const std::size_t k = bank.topics.size() + oi;
        pool.push_back({bank.open_questions[oi], oi % nv, k % ns, k % nf});
    }

    std::vector<Prompt> prompts;
    prompts.reserve(n_pairs);
    while (prompts.size() < n_pairs) {
        shuffle(pool, rng);
        const std::size_t take = std::min(pool.size(), n_pairs - prompts.size());
        prompts.insert(prompts.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    }

    const auto n_fillers = static_cast<std::size_t>(std::llround(static_cast<double>(n_pairs) * filler_fraction));
    std::vector<std::size_t> order(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
    shuffle(order, rng);
    std::vector<bool> is_filler(n_pairs, false);
    for (std::size_t i = 0; i < n_fillers; ++i) is_filler[order[i]] = true;

    Corpus corpus;
    corpus.source_tag = "generated:sarcasm:n=" + std::to_string(n_pairs) + ":seed=" + std::to_string(seed);
    corpus.pairs.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        auto& p = prompts[i];
        std::string answer = is_filler[i] ? bank.fillers[p.filler]
                                          : "i " + bank.positive_verbs[p.verb] + " " + bank.negative_situations[p.situation];
        corpus.pairs.push_back({std::move(p.text), std::move(answer)});
    }
    return corpus;
}

GloveLoad load_glove(const std::filesystem::path& path, const Vocab& vocab, std::size_t embed_dim) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read embedding file " + path.string());

    GloveLoad out;
    out.table.dim = embed_dim;
    std::string line;
    std::size_t line_no = 0;
    std::vector<float> values;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_copy(line).empty()) continue;
        std::istringstream fields(line);
        std::string token;
        fields >> token;
        values.clear();
        std::string number;
        while (fields >> number) {
            char* end = nullptr;
            const float v = std::strtof(number.c_str(), &end);
            if (end != number.c_str() + number.size() || !std::isfinite(v))
                fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": bad value '" + number + "'");
            values.push_back(v);
        }
        if (values.size() != embed_dim)
            fail(ErrorKind::format, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(embed_dim) + " values, found " + std::to_string(values.size()));
        if (vocab.contains(token) && vocab.id(token) >= static_cast<TokenId>(special::count))
            out.table.vectors[token] = values;
    }
    const std::size_t non_special = vocab.size() - special::count;
    out.coverage = non_special == 0 ? 0.0 : static_cast<double>(out.table.vectors.size()) / static_cast<double>(non_special);
    return out;
}

std::size_t sniff_glove_dim(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read embedding file " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string tok;
        if (!(fields >> tok)) continue;
        std::size_t n = 0;
        while (fields >> tok) ++n;
        return n;
    }
    fail(ErrorKind::format, "embedding file " + path.string() + " has no vectors");
}

} // namespace s2s
