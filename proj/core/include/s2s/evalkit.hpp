#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace s2s::eval {

enum class Speaker { user, bot };
enum class Label { match, ambiguous, nonsense };

inline constexpr std::array<std::string_view, 9> categories{
    "coherence", "adequacy", "context_awareness", "creativity", "lexical_variation",
    "sarcasm",   "personality", "humor",          "emotion"};

struct Turn {
    Speaker speaker = Speaker::user;
    std::string text;
    std::optional<Label> label;  ///< present iff speaker == bot
};

/// One rater's documented conversation. A rater may submit several records;
/// they are averaged per rater before averaging across raters.
struct EvalRecord {
    std::string rater_id;
    std::vector<Turn> turns;
    std::array<int, categories.size()> scores{};  ///< indexed like `categories`, each 1..10
};

struct LabelTally {
    std::size_t count = 0;
    double percent = 0.0;
};

struct EvalReport {
    std::size_t n_raters = 0;
    std::size_t n_responses = 0;
    std::array<double, categories.size()> category_percent{};
    LabelTally match, ambiguous, nonsense;

    double percent_for(std::string_view category) const;
    std::string to_json() const;
    /// Aligned plain-text table.
    std::string to_table() const;
};

std::string_view to_string(Label label) noexcept;
std::string_view to_string(Speaker speaker) noexcept;

/// Validates one JSON document. `source` names the file in error messages.
EvalRecord parse_record(std::string_view json_text, const std::string& source);

/// Accepts files and directories (every *.json inside, sorted by name).
/// All schema violations across all files are reported in one validation error.
std::vector<EvalRecord> parse_records(std::span<const std::filesystem::path> paths);

std::string record_to_json(const EvalRecord& record);

/// Per-category percent = mean over raters of score x 10, half-up to 1 decimal.
EvalReport aggregate_scores(std::span<const EvalRecord> records);

/// Match / ambiguous / nonsense counts over every bot turn, percents to 1 decimal.
EvalReport tally_labels(std::span<const EvalRecord> records);

/// Both halves in one report.
EvalReport build_report(std::span<const EvalRecord> records);

} // namespace s2s::eval
