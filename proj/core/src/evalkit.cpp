#include "s2s/evalkit.hpp"

#include "s2s/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace s2s::eval {
namespace {

using json = nlohmann::ordered_json;

// Round num / den (both positive) half-up to an integer.
std::uint64_t round_ratio(std::uint64_t num, std::uint64_t den) { return (2 * num + den) / (2 * den); }

void check_record(const json& doc, std::vector<std::string>& errors, EvalRecord& out) {
    auto err = [&](const std::string& path, const std::string& what) { errors.push_back(path + " " + what); };
    if (!doc.is_object()) {
        err("$", "must be an object");
        return;
    }
    if (auto it = doc.find("rater_id"); it == doc.end() || !it->is_string())
        err("rater_id", "missing or not a string");
    else
        out.rater_id = it->get<std::string>();

    if (auto it = doc.find("turns"); it == doc.end() || !it->is_array()) {
        err("turns", "missing or not an array");
    } else {
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json& t = (*it)[i];
            const std::string at = "turns[" + std::to_string(i) + "]";
            if (!t.is_object()) {
                err(at, "must be an object");
                continue;
            }
            Turn turn;
            const auto speaker = t.find("speaker");
            if (speaker == t.end() || !speaker->is_string() || (*speaker != "user" && *speaker != "bot")) {
                err(at + ".speaker", "must be \"user\" or \"bot\"");
                continue;
            }
            turn.speaker = *speaker == "bot" ? Speaker::bot : Speaker::user;
            if (auto text = t.find("text"); text == t.end() || !text->is_string())
                err(at + ".text", "missing or not a string");
            else
                turn.text = text->get<std::string>();
            const auto label = t.find("label");
            if (turn.speaker == Speaker::user) {
                if (label != t.end()) err(at + ".label", "not allowed on user turns");
            } else if (label == t.end()) {
                err(at + ".label", "missing on bot turn");
            } else if (*label == "match") {
                turn.label = Label::match;
            } else if (*label == "ambiguous") {
                turn.label = Label::ambiguous;
            } else if (*label == "nonsense") {
                turn.label = Label::nonsense;
            } else {
                err(at + ".label", "must be match, ambiguous or nonsense");
            }
            out.turns.push_back(std::move(turn));
        }
    }

    const auto scores = doc.find("scores");
    if (scores == doc.end() || !scores->is_object()) {
        err("scores", "missing or not an object");
        return;
    }
    for (std::size_t k = 0; k < categories.size(); ++k) {
        const std::string key(categories[k]);
        const std::string at = "scores." + key;
        const auto it = scores->find(key);
        if (it == scores->end()) {
            err(at, "missing");
        } else if (!it->is_number_integer()) {
            err(at, "must be an integer");
        } else if (const auto v = it->get<long long>(); v < 1 || v > 10) {
            err(at, "out of range");
        } else {
            out.scores[k] = static_cast<int>(v);
        }
    }
    for (const auto& [key, value] : scores->items())
        if (std::find(categories.begin(), categories.end(), key) == categories.end())
            err("scores." + key, "is not a known category");
}

std::size_t bot_turns(std::span<const EvalRecord> records) {
    std::size_t n = 0;
    for (const auto& r : records)
        for (const auto& t : r.turns) n += t.speaker == Speaker::bot ? 1 : 0;
    return n;
}

std::string fixed1(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << v;
    return os.str();
}

} // namespace

std::string_view to_string(Label label) noexcept {
    switch (label) {
    case Label::match: return "match";
    case Label::ambiguous: return "ambiguous";
    case Label::nonsense: return "nonsense";
    }
    return "";
}

std::string_view to_string(Speaker speaker) noexcept { return speaker == Speaker::bot ? "bot" : "user"; }

EvalRecord parse_record(std::string_view json_text, const std::string& source) {
    const json doc = json::parse(json_text.begin(), json_text.end(), nullptr, false);
    if (doc.is_discarded()) fail(ErrorKind::validation, source + ": not valid JSON");
    EvalRecord record;
    std::vector<std::string> errors;
    check_record(doc, errors, record);
    if (!errors.empty()) {
        std::string msg = source + ":";
        for (auto& e : errors) msg += "\n  " + e;
        fail(ErrorKind::validation, msg);
    }
    return record;
}

std::vector<EvalRecord> parse_records(std::span<const std::filesystem::path> paths) {
    std::vector<std::filesystem::path> files;
    for (const auto& p : paths) {
        if (std::filesystem::is_directory(p)) {
            std::vector<std::filesystem::path> found;
            for (const auto& entry : std::filesystem::directory_iterator(p))
                if (entry.is_regular_file() && entry.path().extension() == ".json") found.push_back(entry.path());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }
    std::vector<EvalRecord> records;
    std::vector<std::string> problems;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) fail(ErrorKind::io, "cannot read " + f.string());
        const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        try {
            records.push_back(parse_record(text, f.string()));
        } catch (const Error& e) {
            problems.push_back(e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg;
        for (auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
        fail(ErrorKind::validation, msg);
    }
    return records;
}

std::string record_to_json(const EvalRecord& record) {
    json doc;
    doc["rater_id"] = record.rater_id;
    doc["turns"] = json::array();
    for (const auto& t : record.turns) {
        json turn;
        turn["speaker"] = to_string(t.speaker);
        turn["text"] = t.text;
        if (t.label) turn["label"] = to_string(*t.label);
        doc["turns"].push_back(std::move(turn));
    }
    json scores;
    for (std::size_t k = 0; k < categories.size(); ++k) scores[std::string(categories[k])] = record.scores[k];
    doc["scores"] = std::move(scores);
    return doc.dump(2) + "\n";
}

EvalReport aggregate_scores(std::span<const EvalRecord> records) {
    if (records.empty()) fail(ErrorKind::argument, "no evaluation records to aggregate");

    struct Rater {
        std::uint64_t n = 0;
        std::array<std::uint64_t, categories.size()> sums{};
    };
    std::map<std::string, Rater> raters;
    for (const auto& r : records) {
        auto& rater = raters[r.rater_id];
        ++rater.n;
        for (std::size_t k = 0; k < categories.size(); ++k) rater.sums[k] += static_cast<std::uint64_t>(r.scores[k]);
    }

    // mean over raters of (rater sum / rater count), kept exact over a common denominator
    std::uint64_t common = 1;
    for (const auto& [id, rater] : raters) common = std::lcm(common, rater.n);
    const std::uint64_t n_raters = raters.size();

    EvalReport report;
    report.n_raters = raters.size();
    for (std::size_t k = 0; k < categories.size(); ++k) {
        std::uint64_t numerator = 0;
        for (const auto& [id, rater] : raters) numerator += rater.sums[k] * (common / rater.n);
        // percent = 10 * numerator / (common * n_raters); work in tenths of a percent
        const std::uint64_t tenths = round_ratio(100 * numerator, common * n_raters);
        report.category_percent[k] = static_cast<double>(tenths) / 10.0;
    }
    return report;
}

EvalReport tally_labels(std::span<const EvalRecord> records) {
    const std::size_t total = bot_turns(records);
    if (total == 0) fail(ErrorKind::argument, "no bot responses to tally");
    EvalReport report;
    report.n_responses = total;
    for (const auto& r : records)
        for (const auto& t : r.turns) {
            if (t.speaker != Speaker::bot || !t.label) continue;
            switch (*t.label) {
            case Label::match: ++report.match.count; break;
            case Label::ambiguous: ++report.ambiguous.count; break;
            case Label::nonsense: ++report.nonsense.count; break;
            }
        }
    for (auto* tally : {&report.match, &report.ambiguous, &report.nonsense})
        tally->percent = static_cast<double>(round_ratio(1000 * tally->count, total)) / 10.0;
    return report;
}

EvalReport build_report(std::span<const EvalRecord> records) {
    EvalReport report = aggregate_scores(records);
    const EvalReport labels = tally_labels(records);
    report.n_responses = labels.n_responses;
    report.match = labels.match;
    report.ambiguous = labels.ambiguous;
    report.nonsense = labels.nonsense;
    return report;
}

double EvalReport::percent_for(std::string_view category) const {
    const auto it = std::find(categories.begin(), categories.end(), category);
    if (it == categories.end()) fail(ErrorKind::argument, "unknown category '" + std::string(category) + "'");
    return category_percent[static_cast<std::size_t>(it - categories.begin())];
}

std::string EvalReport::to_json() const {
    json doc;
    doc["n_raters"] = n_raters;
    doc["n_responses"] = n_responses;
    json scores;
    for (std::size_t k = 0; k < categories.size(); ++k) scores[std::string(categories[k])] = category_percent[k];
    doc["scores"] = std::move(scores);
    json labels;
    labels["match"] = {{"count", match.count}, {"percent", match.percent}};
    labels["ambiguous"] = {{"count", ambiguous.count}, {"percent", ambiguous.percent}};
    labels["nonsense"] = {{"count", nonsense.count}, {"percent", nonsense.percent}};
    doc["labels"] = std::move(labels);
    return doc.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(20) << "category" << std::right << std::setw(8) << "score %" << '\n';
    for (std::size_t k = 0; k < categories.size(); ++k)
        os << std::left << std::setw(20) << categories[k] << std::right << std::setw(8) << fixed1(category_percent[k])
           << '\n';
    os << '\n' << std::left << std::setw(20) << "label" << std::right << std::setw(8) << "count" << std::setw(8)
       << "%" << '\n';
    const std::pair<const char*, const LabelTally*> rows[] = {
        {"match", &match}, {"ambiguous", &ambiguous}, {"nonsense", &nonsense}};
    for (const auto& [name, tally] : rows)
        os << std::left << std::setw(20) << name << std::right << std::setw(8) << tally->count << std::setw(8)
           << fixed1(tally->percent) << '\n';
    os << '\n' << "raters: " << n_raters << "  responses: " << n_responses << '\n';
    return os.str();
}

} // namespace s2s::eval
