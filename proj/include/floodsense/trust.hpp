#pragma once

// Malicious-contributor detection for one (region, period) window.
//
// Each user is first reduced to one value per question (the mean of their
// submissions in the window). Per question, the population mean and
// population standard deviation over those per-user values define the valid
// interval [mean - 2 sd, mean + 2 sd]. A user's outlier ratio is the share of
// their answered questions that fall outside it; a ratio above one half marks
// the user malicious. Windows with fewer than five participants are not
// judged at all.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "floodsense/domain.hpp"
#include "floodsense/errors.hpp"

namespace floodsense {

inline constexpr double kIntervalHalfWidthInSd = 2.0;
inline constexpr double kMaliciousRatio = 0.5;
inline constexpr double kMembershipTolerance = 1e-9;
inline constexpr std::size_t kMinParticipants = 5;

enum class Verdict { NonMalicious, Malicious, Unvetted };

inline std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::NonMalicious: return "NonMalicious";
        case Verdict::Malicious: return "Malicious";
        case Verdict::Unvetted: return "Unvetted";
    }
    return "?";
}

inline std::optional<Verdict> parse_verdict(std::string_view s) {
    if (s == "NonMalicious") return Verdict::NonMalicious;
    if (s == "Malicious") return Verdict::Malicious;
    if (s == "Unvetted") return Verdict::Unvetted;
    return std::nullopt;
}

/// One user's contribution to a window. Holds an entry for every scored
/// question; the entry is empty when the user skipped it in every submission.
struct ConsolidatedRow {
    std::string user_id;
    std::map<QuestionId, std::optional<double>> values;

    std::size_t answered() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(values.begin(), values.end(), [](const auto& kv) { return kv.second.has_value(); }));
    }

    friend bool operator==(const ConsolidatedRow&, const ConsolidatedRow&) = default;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    /// Inclusive, with kMembershipTolerance of slack on both ends.
    bool contains(double x) const noexcept {
        return x >= lo - kMembershipTolerance && x <= hi + kMembershipTolerance;
    }
};

struct QuestionStats {
    QuestionId question_id = 0;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    Interval interval() const noexcept { return {lo, hi}; }

    friend bool operator==(const QuestionStats&, const QuestionStats&) = default;
};

struct Assessment {
    std::string user_id;
    std::size_t answered = 0;
    std::size_t outliers = 0;
    double ratio = 0.0;
    Verdict verdict = Verdict::Unvetted;

    std::size_t valid() const noexcept { return answered - outliers; }

    friend bool operator==(const Assessment&, const Assessment&) = default;
};

struct DetectionWindow {
    RegionIndex region = 0;
    PeriodIndex period = 0;
    std::vector<ConsolidatedRow> rows;
    bool executed = false;
    std::vector<QuestionStats> stats;
    std::vector<Assessment> assessments;

    const Assessment* assessment_of(const std::string& user_id) const {
        auto it = std::lower_bound(assessments.begin(), assessments.end(), user_id,
                                   [](const Assessment& a, const std::string& id) { return a.user_id < id; });
        return it != assessments.end() && it->user_id == user_id ? &*it : nullptr;
    }

    friend bool operator==(const DetectionWindow&, const DetectionWindow&) = default;
};

struct DetectionOptions {
    std::size_t min_participants = kMinParticipants;
    /// Re-run statistics without flagged users until no new user is flagged.
    bool iterative = false;
};

/// Collapses one user's submissions in a window to a single value per scored
/// question: the mean of the non-skipped encoded answers.
inline ConsolidatedRow consolidate(std::span<const Report> reports, const QuestionnaireSchema& schema) {
    if (reports.empty()) throw Error(ErrorCode::EmptyInput, "no reports to consolidate");
    ConsolidatedRow row;
    row.user_id = reports.front().user_id;
    for (const auto& r : reports) {
        if (r.user_id != row.user_id) {
            throw Error(ErrorCode::InvariantViolation, "reports of different users passed to consolidate");
        }
        if (r.answers.size() != schema.size()) {
            throw Error(ErrorCode::InvalidReport, "report " + r.report_id + " does not match the schema length");
        }
    }
    for (const auto& q : schema.questions()) {
        if (!q.scored()) continue;
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& r : reports) {
            if (auto v = encode_answer(q, r.answers[static_cast<std::size_t>(q.id - 1)])) {
                sum += *v;
                ++count;
            }
        }
        row.values[q.id] = count == 0 ? std::nullopt : std::optional<double>(sum / static_cast<double>(count));
    }
    return row;
}

/// Population mean and standard deviation (divide by N, no Bessel correction).
inline MeanSd question_stats(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "statistics need at least one value");
    const auto n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / n;
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / n)};
}

inline Interval valid_interval(double mean, double sd) {
    return {mean - kIntervalHalfWidthInSd * sd, mean + kIntervalHalfWidthInSd * sd};
}

inline Verdict classify(std::size_t answered, double ratio) noexcept {
    if (answered == 0) return Verdict::Unvetted;
    return ratio > kMaliciousRatio ? Verdict::Malicious : Verdict::NonMalicious;
}

inline Assessment assess(const ConsolidatedRow& row, const std::map<QuestionId, QuestionStats>& stats) {
    Assessment a;
    a.user_id = row.user_id;
    for (const auto& [qid, value] : row.values) {
        if (!value) continue;
        auto it = stats.find(qid);
        if (it == stats.end()) {
            throw Error(ErrorCode::MissingStats, "no statistics for question " + std::to_string(qid));
        }
        ++a.answered;
        if (!it->second.interval().contains(*value)) ++a.outliers;
    }
    a.ratio = a.answered == 0 ? 0.0 : static_cast<double>(a.outliers) / static_cast<double>(a.answered);
    a.verdict = classify(a.answered, a.ratio);
    return a;
}

namespace detail {

inline std::map<QuestionId, QuestionStats> window_stats(const std::vector<const ConsolidatedRow*>& rows) {
    std::map<QuestionId, std::vector<double>> columns;
    for (const auto* row : rows) {
        for (const auto& [qid, value] : row->values) {
            if (value) columns[qid].push_back(*value);
        }
    }
    std::map<QuestionId, QuestionStats> out;
    for (const auto& [qid, values] : columns) {
        const auto ms = question_stats(values);
        const auto iv = valid_interval(ms.mean, ms.sd);
        out[qid] = QuestionStats{qid, values.size(), ms.mean, ms.sd, iv.lo, iv.hi};
    }
    return out;
}

}  // namespace detail

/// Judges every user in the window. Rows are processed in user_id order, so
/// the result does not depend on the order rows were supplied in.
inline DetectionWindow run_detection(DetectionWindow window, const DetectionOptions& opts = {}) {
    std::sort(window.rows.begin(), window.rows.end(),
              [](const ConsolidatedRow& a, const ConsolidatedRow& b) { return a.user_id < b.user_id; });
    for (std::size_t i = 1; i < window.rows.size(); ++i) {
        if (window.rows[i].user_id == window.rows[i - 1].user_id) {
            throw Error(ErrorCode::InvariantViolation, "user " + window.rows[i].user_id + " has two rows in one window");
        }
    }
    window.stats.clear();
    window.assessments.clear();
    window.executed = window.rows.size() >= opts.min_participants && !window.rows.empty();

    if (!window.executed) {
        for (const auto& row : window.rows) {
            window.assessments.push_back(Assessment{row.user_id, row.answered(), 0, 0.0, Verdict::Unvetted});
        }
        return window;
    }

    std::vector<const ConsolidatedRow*> active;
    for (const auto& row : window.rows) active.push_back(&row);

    std::map<std::string, Assessment> final_assessments;
    std::map<QuestionId, QuestionStats> stats;
    while (true) {
        stats = detail::window_stats(active);
        std::vector<const ConsolidatedRow*> survivors;
        for (const auto* row : active) {
            auto a = assess(*row, stats);
            if (a.verdict != Verdict::Malicious) survivors.push_back(row);
            final_assessments[row->user_id] = std::move(a);
        }
        if (!opts.iterative || survivors.size() == active.size() || survivors.size() < opts.min_participants) break;
        active = std::move(survivors);
    }

    for (auto& [id, a] : final_assessments) window.assessments.push_back(std::move(a));
    for (auto& [qid, s] : stats) window.stats.push_back(s);
    return window;
}

}  // namespace floodsense
