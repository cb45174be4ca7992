#pragma once

// Event vocabulary of the append-only log and its JSON encoding:
//   {"seq":int,"ts":int,"kind":string,"body":{...}}
// docs/log-format.md lists every field.

#include <charconv>
#include <cstdint>
#include <string>
#include <variant>

#include "floodsense/domain.hpp"
#include "floodsense/serialization.hpp"
#include "floodsense/trust.hpp"

namespace floodsense {

inline constexpr int kLogFormatVersion = 1;

struct UserRegistered {
    UserProfile profile;
    friend bool operator==(const UserRegistered&, const UserRegistered&) = default;
};

struct ReportSubmitted {
    Report report;
    RegionIndex region = 0;
    PeriodIndex period = 0;
    /// Set when the report's own period had already been judged and it was
    /// moved into the next open one.
    bool late = false;
    friend bool operator==(const ReportSubmitted&, const ReportSubmitted&) = default;
};

struct DetectionRun {
    DetectionWindow window;
    friend bool operator==(const DetectionRun&, const DetectionRun&) = default;
};

struct UserBlacklisted {
    std::string user_id;
    RegionIndex region = 0;
    PeriodIndex period = 0;
    friend bool operator==(const UserBlacklisted&, const UserBlacklisted&) = default;
};

/// Left in place of a purged user's ReportSubmitted by log compaction.
struct ReportTombstone {
    std::string report_id;
    std::string user_id;
    RegionIndex region = 0;
    PeriodIndex period = 0;
    friend bool operator==(const ReportTombstone&, const ReportTombstone&) = default;
};

struct UserPurged {
    std::string user_id;
    friend bool operator==(const UserPurged&, const UserPurged&) = default;
};

using EventBody =
    std::variant<UserRegistered, ReportSubmitted, DetectionRun, UserBlacklisted, ReportTombstone, UserPurged>;

struct Event {
    std::uint64_t seq = 0;
    Timestamp ts = 0;
    EventBody body;
    friend bool operator==(const Event&, const Event&) = default;
};

inline std::string_view kind_of(const EventBody& body) {
    return std::visit(
        [](const auto& b) -> std::string_view {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, UserRegistered>) return "UserRegistered";
            else if constexpr (std::is_same_v<T, ReportSubmitted>) return "ReportSubmitted";
            else if constexpr (std::is_same_v<T, DetectionRun>) return "DetectionRun";
            else if constexpr (std::is_same_v<T, UserBlacklisted>) return "UserBlacklisted";
            else if constexpr (std::is_same_v<T, ReportTombstone>) return "ReportTombstone";
            else return "UserPurged";
        },
        body);
}

// --- detection results ------------------------------------------------------

inline json to_json(const Assessment& a) {
    return json{{"user_id", a.user_id},
                {"answered", a.answered},
                {"outliers", a.outliers},
                {"ratio", a.ratio},
                {"verdict", to_string(a.verdict)}};
}

inline Assessment assessment_from_json(const json& j) {
    constexpr auto E = ErrorCode::CorruptLog;
    Assessment a;
    a.user_id = detail::required<std::string>(j, "user_id", E);
    a.answered = detail::required<std::size_t>(j, "answered", E);
    a.outliers = detail::required<std::size_t>(j, "outliers", E);
    a.ratio = detail::required<double>(j, "ratio", E);
    const auto v = detail::required<std::string>(j, "verdict", E);
    auto verdict = parse_verdict(v);
    if (!verdict) throw Error(E, "unknown verdict '" + v + "'");
    a.verdict = *verdict;
    return a;
}

inline json to_json(const DetectionWindow& w) {
    json rows = json::array();
    for (const auto& r : w.rows) {
        json values = json::object();
        for (const auto& [qid, v] : r.values) {
            values[std::to_string(qid)] = v ? json(*v) : json(nullptr);
        }
        rows.push_back(json{{"user_id", r.user_id}, {"values", std::move(values)}});
    }
    json stats = json::array();
    for (const auto& s : w.stats) {
        stats.push_back(json{{"question_id", s.question_id},
                             {"n", s.n},
                             {"mean", s.mean},
                             {"sd", s.sd},
                             {"lo", s.lo},
                             {"hi", s.hi}});
    }
    json assessments = json::array();
    for (const auto& a : w.assessments) assessments.push_back(to_json(a));
    return json{{"region", w.region},      {"period", w.period},           {"executed", w.executed},
                {"rows", std::move(rows)}, {"stats", std::move(stats)}, {"assessments", std::move(assessments)}};
}

inline DetectionWindow window_from_json(const json& j) {
    constexpr auto E = ErrorCode::CorruptLog;
    DetectionWindow w;
    w.region = detail::required<RegionIndex>(j, "region", E);
    w.period = detail::required<PeriodIndex>(j, "period", E);
    w.executed = detail::required<bool>(j, "executed", E);
    for (const auto& r : detail::required<json>(j, "rows", E)) {
        ConsolidatedRow row;
        row.user_id = detail::required<std::string>(r, "user_id", E);
        const auto values = detail::required<json>(r, "values", E);
        if (!values.is_object()) throw Error(E, "row values must be an object");
        for (const auto& [key, v] : values.items()) {
            QuestionId qid = 0;
            const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), qid);
            if (ec != std::errc{} || end != key.data() + key.size()) throw Error(E, "bad question id '" + key + "'");
            if (!v.is_null() && !v.is_number()) throw Error(E, "row value must be a number or null");
            row.values[qid] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        }
        w.rows.push_back(std::move(row));
    }
    for (const auto& s : detail::required<json>(j, "stats", E)) {
        w.stats.push_back(QuestionStats{detail::required<QuestionId>(s, "question_id", E),
                                        detail::required<std::size_t>(s, "n", E), detail::required<double>(s, "mean", E),
                                        detail::required<double>(s, "sd", E), detail::required<double>(s, "lo", E),
                                        detail::required<double>(s, "hi", E)});
    }
    for (const auto& a : detail::required<json>(j, "assessments", E)) w.assessments.push_back(assessment_from_json(a));
    return w;
}

// --- events -----------------------------------------------------------------

inline json body_to_json(const EventBody& body) {
    return std::visit(
        [](const auto& b) -> json {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, UserRegistered>) {
                return to_json(b.profile);
            } else if constexpr (std::is_same_v<T, ReportSubmitted>) {
                return json{{"report", to_json(b.report)}, {"region", b.region}, {"period", b.period}, {"late", b.late}};
            } else if constexpr (std::is_same_v<T, DetectionRun>) {
                return to_json(b.window);
            } else if constexpr (std::is_same_v<T, UserBlacklisted>) {
                return json{{"user_id", b.user_id}, {"region", b.region}, {"period", b.period}};
            } else if constexpr (std::is_same_v<T, ReportTombstone>) {
                return json{{"report_id", b.report_id}, {"user_id", b.user_id}, {"region", b.region}, {"period", b.period}};
            } else {
                return json{{"user_id", b.user_id}};
            }
        },
        body);
}

inline json to_json(const Event& e) {
    return json{{"seq", e.seq}, {"ts", e.ts}, {"kind", kind_of(e.body)}, {"body", body_to_json(e.body)}};
}

/// Throws Error(CorruptLog) on any structural problem; the caller adds the line.
inline Event event_from_json(const json& j) {
    constexpr auto E = ErrorCode::CorruptLog;
    if (!j.is_object()) throw Error(E, "event must be a JSON object");
    Event e;
    e.seq = detail::required<std::uint64_t>(j, "seq", E);
    e.ts = detail::required<Timestamp>(j, "ts", E);
    const auto kind = detail::required<std::string>(j, "kind", E);
    const auto body = detail::required<json>(j, "body", E);
    try {
        if (kind == "UserRegistered") {
            e.body = UserRegistered{profile_from_json(body)};
        } else if (kind == "ReportSubmitted") {
            e.body = ReportSubmitted{report_from_json(detail::required<json>(body, "report", E)),
                                     detail::required<RegionIndex>(body, "region", E),
                                     detail::required<PeriodIndex>(body, "period", E),
                                     detail::required<bool>(body, "late", E)};
        } else if (kind == "DetectionRun") {
            e.body = DetectionRun{window_from_json(body)};
        } else if (kind == "UserBlacklisted") {
            e.body = UserBlacklisted{detail::required<std::string>(body, "user_id", E),
                                     detail::required<RegionIndex>(body, "region", E),
                                     detail::required<PeriodIndex>(body, "period", E)};
        } else if (kind == "ReportTombstone") {
            e.body = ReportTombstone{detail::required<std::string>(body, "report_id", E),
                                     detail::required<std::string>(body, "user_id", E),
                                     detail::required<RegionIndex>(body, "region", E),
                                     detail::required<PeriodIndex>(body, "period", E)};
        } else if (kind == "UserPurged") {
            e.body = UserPurged{detail::required<std::string>(body, "user_id", E)};
        } else {
            throw Error(E, "unknown event kind '" + kind + "'");
        }
    } catch (const Error& err) {
        if (err.code() == E) throw;
        throw Error(E, err.what());
    } catch (const std::exception& ex) {
        throw Error(E, ex.what());
    }
    return e;
}

/// One assessment export record: {region, period, user_id, answered, outliers, ratio, verdict}.
inline json assessment_record(RegionIndex region, PeriodIndex period, const Assessment& a) {
    auto j = to_json(a);
    j["region"] = region;
    j["period"] = period;
    return j;
}

}  // namespace floodsense
