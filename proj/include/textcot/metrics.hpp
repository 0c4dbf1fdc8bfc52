#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "textcot/error.hpp"

namespace textcot {

namespace detail {

inline bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII punctuation/symbols. Bytes >= 0x80 (UTF-8 sequences) count as word characters.
inline bool is_ascii_symbol(unsigned char c) {
    return c < 0x80 && c > ' ' && c != 0x7F && !std::isalnum(c);
}

}  // namespace detail

/// Matching normalization: ASCII case-fold, trim, collapse whitespace runs to one space, then
/// drop any space that touches a punctuation/symbol character ("$ 5.00" -> "$5.00").
inline std::string normalize_for_match(std::string_view s) {
    std::string collapsed;
    collapsed.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (detail::is_ascii_space(c)) {
            pending_space = !collapsed.empty();
            continue;
        }
        if (pending_space) collapsed.push_back(' ');
        pending_space = false;
        collapsed.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
    std::string out;
    out.reserve(collapsed.size());
    for (std::size_t i = 0; i < collapsed.size(); ++i) {
        if (collapsed[i] == ' ') {
            const auto prev = static_cast<unsigned char>(collapsed[i - 1]);
            const auto next = static_cast<unsigned char>(collapsed[i + 1]);
            if (detail::is_ascii_symbol(prev) || detail::is_ascii_symbol(next)) continue;
        }
        out.push_back(collapsed[i]);
    }
    return out;
}

struct EvalResult {
    std::string sample_id;
    bool correct = false;
    std::optional<std::string> matched_answer;
    std::string final_answer;
    // grouping labels
    std::string dataset;
    std::string strategy;

    friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// Correct iff some ground-truth answer is contained in the response, after normalizing both.
/// matched_answer is the first such answer in list order.
inline EvalResult contains_correct(std::string_view response, const std::vector<std::string>& answers) {
    if (answers.empty()) throw Error(ErrorKind::EmptyAnswerList, "no ground-truth answers");
    EvalResult r;
    r.final_answer = std::string(response);
    const std::string haystack = normalize_for_match(response);
    for (const auto& a : answers) {
        const std::string needle = normalize_for_match(a);
        if (needle.empty()) continue;
        if (haystack.find(needle) != std::string::npos) {
            r.correct = true;
            r.matched_answer = a;
            break;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// aggregation

/// Percent with two decimals, held as hundredths of a percent (4608 == 46.08%).
using Centipercent = std::int64_t;

/// 100 * correct / total, rounded half-up to two decimals.
inline Centipercent accuracy_centi(std::size_t correct, std::size_t total) {
    const auto c = static_cast<std::int64_t>(correct), t = static_cast<std::int64_t>(total);
    return (2 * 10000 * c + t) / (2 * t);
}

/// Arithmetic mean of already-rounded accuracies, rounded half-up.
inline Centipercent mean_centi(const std::vector<Centipercent>& values) {
    std::int64_t sum = 0;
    for (auto v : values) sum += v;
    const auto n = static_cast<std::int64_t>(values.size());
    return (2 * sum + n) / (2 * n);
}

inline std::string format_centi(Centipercent v) {
    std::ostringstream os;
    os << v / 100 << '.' << (v % 100 < 10 ? "0" : "") << v % 100;
    return os.str();
}

struct ReportCell {
    std::size_t correct = 0;
    std::size_t total = 0;
    Centipercent accuracy = 0;

    friend bool operator==(const ReportCell&, const ReportCell&) = default;
};

struct ReportRow {
    std::string strategy;
    std::vector<std::optional<ReportCell>> cells;  // aligned with Report::datasets
    std::optional<Centipercent> average;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Report {
    std::vector<std::string> datasets;
    std::vector<ReportRow> rows;
    std::vector<std::string> warnings;

    const ReportRow* row(std::string_view strategy) const {
        for (const auto& r : rows)
            if (r.strategy == strategy) return &r;
        return nullptr;
    }

    friend bool operator==(const Report&, const Report&) = default;
};

/// Row/column order. Empty lists mean "first-seen order in the results".
struct Grouping {
    std::vector<std::string> strategies;
    std::vector<std::string> datasets;
};

inline Report aggregate(std::vector<EvalResult> results, Grouping grouping = {}) {
    std::stable_sort(results.begin(), results.end(), [](const EvalResult& a, const EvalResult& b) {
        return std::tie(a.strategy, a.dataset, a.sample_id) < std::tie(b.strategy, b.dataset, b.sample_id);
    });
    const auto remember = [](std::vector<std::string>& order, const std::string& v) {
        if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
    };
    const bool derive_strategies = grouping.strategies.empty();
    const bool derive_datasets = grouping.datasets.empty();
    std::map<std::pair<std::string, std::string>, ReportCell> counts;
    for (const auto& r : results) {
        if (derive_strategies) remember(grouping.strategies, r.strategy);
        if (derive_datasets) remember(grouping.datasets, r.dataset);
        auto& cell = counts[{r.strategy, r.dataset}];
        ++cell.total;
        if (r.correct) ++cell.correct;
    }

    Report report;
    report.datasets = grouping.datasets;
    for (const auto& strategy : grouping.strategies) {
        ReportRow row;
        row.strategy = strategy;
        std::vector<Centipercent> present;
        for (const auto& dataset : grouping.datasets) {
            const auto it = counts.find({strategy, dataset});
            if (it == counts.end() || it->second.total == 0) {
                row.cells.emplace_back();
                report.warnings.push_back("no results for strategy '" + strategy + "' on dataset '" + dataset +
                                          "'; cell omitted");
                continue;
            }
            ReportCell cell = it->second;
            cell.accuracy = accuracy_centi(cell.correct, cell.total);
            present.push_back(cell.accuracy);
            row.cells.emplace_back(cell);
        }
        if (!present.empty()) row.average = mean_centi(present);
        report.rows.push_back(std::move(row));
    }
    return report;
}

inline std::string to_markdown(const Report& report) {
    std::ostringstream os;
    os << "| Strategy |";
    for (const auto& d : report.datasets) os << ' ' << d << " |";
    os << " Average |\n|---|";
    for (std::size_t i = 0; i < report.datasets.size(); ++i) os << "---:|";
    os << "---:|\n";
    for (const auto& row : report.rows) {
        os << "| " << row.strategy << " |";
        for (const auto& cell : row.cells) os << ' ' << (cell ? format_centi(cell->accuracy) : "-") << " |";
        os << ' ' << (row.average ? format_centi(*row.average) : "-") << " |\n";
    }
    for (const auto& w : report.warnings) os << "\n> warning: " << w << '\n';
    return os.str();
}

inline std::string to_csv(const Report& report) {
    std::ostringstream os;
    os << "strategy";
    for (const auto& d : report.datasets) os << ',' << d;
    os << ",average\n";
    for (const auto& row : report.rows) {
        os << row.strategy;
        for (const auto& cell : row.cells) os << ',' << (cell ? format_centi(cell->accuracy) : "");
        os << ',' << (row.average ? format_centi(*row.average) : "") << '\n';
    }
    return os.str();
}

inline void to_json(nlohmann::json& j, const EvalResult& r) {
    j = nlohmann::json{{"sample_id", r.sample_id},  {"dataset", r.dataset},
                       {"strategy", r.strategy},    {"correct", r.correct},
                       {"final_answer", r.final_answer}};
    j["matched_answer"] = r.matched_answer ? nlohmann::json(*r.matched_answer) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, EvalResult& r) {
    r.sample_id = j.at("sample_id").get<std::string>();
    r.dataset = j.value("dataset", std::string{});
    r.strategy = j.value("strategy", std::string{});
    r.correct = j.at("correct").get<bool>();
    r.final_answer = j.value("final_answer", std::string{});
    r.matched_answer.reset();
    if (j.contains("matched_answer") && j.at("matched_answer").is_string())
        r.matched_answer = j.at("matched_answer").get<std::string>();
}

}  // namespace textcot
