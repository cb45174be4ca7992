#pragma once

// Offline detection over a file: either a captured event log (first line is
// the format header) or plain JSON Lines of reports.

#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "floodsense/domain.hpp"
#include "floodsense/events.hpp"
#include "floodsense/ledger.hpp"
#include "floodsense/serialization.hpp"
#include "floodsense/store.hpp"
#include "floodsense/trust.hpp"

namespace floodsense {

/// Assessment records of every judged window, ordered by (period, region, user_id).
inline std::vector<json> assessment_records(const std::vector<DetectionWindow>& windows) {
    std::vector<const DetectionWindow*> ordered;
    for (const auto& w : windows) ordered.push_back(&w);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return std::tie(a->period, a->region) < std::tie(b->period, b->region);
    });
    std::vector<json> out;
    for (const auto* w : ordered) {
        for (const auto& a : w->assessments) out.push_back(assessment_record(w->region, w->period, a));
    }
    return out;
}

inline std::vector<json> assessment_records(const Ledger& ledger) {
    std::vector<DetectionWindow> windows;
    for (const auto& [key, w] : ledger.windows()) windows.push_back(w);
    return assessment_records(windows);
}

/// What the live service recorded: assessments carried by DetectionRun events.
inline std::vector<json> recorded_assessments(const std::vector<Event>& log) {
    std::vector<DetectionWindow> windows;
    for (const auto& e : log) {
        if (const auto* run = std::get_if<DetectionRun>(&e.body)) windows.push_back(run->window);
    }
    return assessment_records(windows);
}

struct BatchOutcome {
    std::vector<json> assessments;
    std::vector<std::string> warnings;
};

/// Judges every populated window in (period, region) order, letting each
/// blacklisting purge the user before later windows are evaluated.
inline void judge_all(Ledger& ledger, const QuestionnaireSchema& schema, const DetectionOptions& opts) {
    std::uint64_t seq = ledger.last_seq();
    auto apply = [&](EventBody body) { ledger.apply(Event{++seq, 0, std::move(body)}); };
    for (const auto& key : ledger.populated_windows()) {
        if (ledger.window_judged(key)) continue;
        // windows are enumerated up front; a purge may have emptied this one
        detect_window(ledger, schema, key, opts, apply);
    }
}

/// Rebuilds the accepted submissions of an event log (registrations and
/// reports, with the region/period the service assigned) and judges them
/// afresh. Recorded detection outcomes in the log are ignored.
inline BatchOutcome detect_from_log(const std::vector<Event>& log, const QuestionnaireSchema& schema,
                                    const DetectionOptions& opts = {}) {
    Ledger ledger;
    std::uint64_t seq = 0;
    for (const auto& e : log) {
        if (std::holds_alternative<UserRegistered>(e.body) || std::holds_alternative<ReportSubmitted>(e.body)) {
            ledger.apply(Event{++seq, e.ts, e.body});
        }
    }
    judge_all(ledger, schema, opts);
    return {assessment_records(ledger), {}};
}

/// Plain report lines: users are registered implicitly, region and period
/// come from the grid and period settings. Invalid reports are skipped with a
/// warning; unparseable lines throw CorruptLogError.
inline BatchOutcome detect_from_reports(std::istream& in, const QuestionnaireSchema& schema, const RegionGrid& grid,
                                        const PeriodConfig& period, const DetectionOptions& opts = {}) {
    BatchOutcome out;
    Ledger ledger;
    std::uint64_t seq = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Report r;
        try {
            r = report_from_json(json::parse(line));
        } catch (const json::parse_error&) {
            throw CorruptLogError(lineno, "malformed JSON");
        } catch (const Error& e) {
            throw CorruptLogError(lineno, e.what());
        }
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (auto v = validate_report(r, schema); !v.empty()) {
            out.warnings.push_back(where + "rejected (" + std::string(to_string(v.front().kind)) + ": " +
                                   v.front().detail + ")");
            continue;
        }
        if (ledger.report(r.report_id)) {
            out.warnings.push_back(where + "duplicate report id " + r.report_id);
            continue;
        }
        RegionIndex region = 0;
        PeriodIndex p = 0;
        try {
            region = region_of(r.latitude, r.longitude, grid);
            p = period_of(r.timestamp, period);
        } catch (const Error& e) {
            out.warnings.push_back(where + "rejected (" + e.what() + ")");
            continue;
        }
        if (!ledger.has_user(r.user_id)) {
            ledger.apply(Event{++seq, 0, UserRegistered{UserProfile{r.user_id, r.user_id, "", {}, "", {}}}});
        }
        ledger.apply(Event{++seq, r.timestamp, ReportSubmitted{std::move(r), region, p, false}});
    }
    judge_all(ledger, schema, opts);
    out.assessments = assessment_records(ledger);
    return out;
}

/// Dispatches on the first line: a format header means an event log.
inline BatchOutcome detect_offline(std::istream& in, const QuestionnaireSchema& schema, const RegionGrid& grid,
                                   const PeriodConfig& period, const DetectionOptions& opts = {}) {
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();
    const auto first_end = content.find('\n');
    const auto first = content.substr(0, first_end);
    bool is_log = false;
    try {
        const auto j = json::parse(first);
        is_log = j.is_object() && j.contains("format_version");
    } catch (const json::parse_error&) {
    }
    std::istringstream body(content);
    if (is_log) return detect_from_log(read_log(body), schema, opts);
    return detect_from_reports(body, schema, grid, period, opts);
}

}  // namespace floodsense
