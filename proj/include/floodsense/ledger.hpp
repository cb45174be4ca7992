#pragma once

// In-memory state rebuilt from the event log: users, accepted reports,
// judged windows and the blacklist. Live ingestion and replay both mutate it
// only through Ledger::apply, so the two can never diverge.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "floodsense/domain.hpp"
#include "floodsense/errors.hpp"
#include "floodsense/events.hpp"
#include "floodsense/trust.hpp"

namespace floodsense {

struct WindowKey {
    RegionIndex region = 0;
    PeriodIndex period = 0;
    friend auto operator<=>(const WindowKey&, const WindowKey&) = default;
};

struct StoredReport {
    Report report;
    RegionIndex region = 0;
    PeriodIndex period = 0;
    bool late = false;
    std::uint64_t seq = 0;
    friend bool operator==(const StoredReport&, const StoredReport&) = default;
};

/// Window that triggered a blacklisting; empty for an administrative purge.
using BlacklistCause = std::optional<WindowKey>;

class Ledger {
public:
    const std::map<std::string, UserProfile>& users() const noexcept { return users_; }
    const std::map<std::string, StoredReport>& reports() const noexcept { return reports_; }
    const std::map<WindowKey, DetectionWindow>& windows() const noexcept { return windows_; }
    const std::map<std::string, BlacklistCause>& blacklist() const noexcept { return blacklist_; }
    std::uint64_t last_seq() const noexcept { return last_seq_; }

    bool has_user(const std::string& id) const { return users_.count(id) != 0; }
    bool is_blacklisted(const std::string& id) const { return blacklist_.count(id) != 0; }
    bool window_judged(WindowKey key) const { return windows_.count(key) != 0; }

    const DetectionWindow* window(WindowKey key) const {
        auto it = windows_.find(key);
        return it == windows_.end() ? nullptr : &it->second;
    }

    const StoredReport* report(const std::string& report_id) const {
        auto it = reports_.find(report_id);
        return it == reports_.end() ? nullptr : &it->second;
    }

    /// Reports of non-blacklisted users assigned to the window, grouped by user
    /// (map order) and by ingestion order within a user.
    std::map<std::string, std::vector<const StoredReport*>> window_reports(WindowKey key) const {
        std::map<std::string, std::vector<const StoredReport*>> out;
        for (const auto& [id, sr] : reports_) {
            if (sr.region != key.region || sr.period != key.period) continue;
            if (is_blacklisted(sr.report.user_id)) continue;
            out[sr.report.user_id].push_back(&sr);
        }
        for (auto& [user, list] : out) {
            std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) { return a->seq < b->seq; });
        }
        return out;
    }

    /// All windows that hold at least one report, in (period, region) order.
    std::vector<WindowKey> populated_windows() const {
        std::set<std::pair<PeriodIndex, RegionIndex>> keys;
        for (const auto& [id, sr] : reports_) keys.insert({sr.period, sr.region});
        std::vector<WindowKey> out;
        for (const auto& [p, r] : keys) out.push_back({r, p});
        return out;
    }

    /// Throws InvariantViolation if the event may not follow the current state.
    void check(const EventBody& body) const {
        std::visit([this](const auto& b) { check_one(b); }, body);
    }

    void apply(const Event& event) {
        if (event.seq <= last_seq_) {
            throw Error(ErrorCode::InvariantViolation, "sequence number " + std::to_string(event.seq) +
                                                           " does not follow " + std::to_string(last_seq_));
        }
        check(event.body);
        std::visit([&](const auto& b) { apply_one(b, event.seq); }, event.body);
        last_seq_ = event.seq;
    }

    /// Blacklists the user and drops every report they ever sent. Idempotent.
    void purge(const std::string& user_id, BlacklistCause cause) {
        auto it = users_.find(user_id);
        if (it == users_.end()) throw Error(ErrorCode::UnknownUser, user_id);
        it->second.status = UserStatus::Blacklisted;
        blacklist_.try_emplace(user_id, cause);
        std::erase_if(reports_, [&](const auto& kv) { return kv.second.report.user_id == user_id; });
    }

    /// Content equality; the sequence counter is bookkeeping and not compared.
    friend bool operator==(const Ledger& a, const Ledger& b) {
        return a.users_ == b.users_ && a.reports_ == b.reports_ && a.windows_ == b.windows_ &&
               a.blacklist_ == b.blacklist_;
    }

private:
    static void violation(const std::string& msg) { throw Error(ErrorCode::InvariantViolation, msg); }

    void check_one(const UserRegistered& e) const {
        if (e.profile.user_id.empty()) violation("user id is empty");
        if (has_user(e.profile.user_id)) violation("user " + e.profile.user_id + " already registered");
    }
    void check_one(const ReportSubmitted& e) const {
        const auto& uid = e.report.user_id;
        if (!has_user(uid)) violation("report from unregistered user " + uid);
        if (is_blacklisted(uid)) violation("report from blacklisted user " + uid);
        if (reports_.count(e.report.report_id)) violation("duplicate report id " + e.report.report_id);
        if (window_judged({e.region, e.period})) {
            violation("window (" + std::to_string(e.region) + ", " + std::to_string(e.period) + ") already judged");
        }
    }
    void check_one(const DetectionRun& e) const {
        if (window_judged({e.window.region, e.window.period})) violation("window judged twice");
    }
    void check_one(const UserBlacklisted& e) const {
        if (!has_user(e.user_id)) violation("blacklisting unknown user " + e.user_id);
    }
    void check_one(const ReportTombstone&) const {}
    void check_one(const UserPurged& e) const {
        if (!has_user(e.user_id)) violation("purging unknown user " + e.user_id);
    }

    void apply_one(const UserRegistered& e, std::uint64_t) {
        auto profile = e.profile;
        profile.status = UserStatus::Active;
        users_.emplace(profile.user_id, std::move(profile));
    }
    void apply_one(const ReportSubmitted& e, std::uint64_t seq) {
        reports_.emplace(e.report.report_id, StoredReport{e.report, e.region, e.period, e.late, seq});
    }
    void apply_one(const DetectionRun& e, std::uint64_t) {
        windows_.emplace(WindowKey{e.window.region, e.window.period}, e.window);
    }
    void apply_one(const UserBlacklisted& e, std::uint64_t) { purge(e.user_id, WindowKey{e.region, e.period}); }
    void apply_one(const ReportTombstone&, std::uint64_t) {}
    void apply_one(const UserPurged& e, std::uint64_t) { purge(e.user_id, std::nullopt); }

    std::map<std::string, UserProfile> users_;
    std::map<std::string, StoredReport> reports_;
    std::map<WindowKey, DetectionWindow> windows_;
    std::map<std::string, BlacklistCause> blacklist_;
    std::uint64_t last_seq_ = 0;
};

/// Removes a user from the system: status Blacklisted, all their reports
/// excluded from every later statistic and aggregate, future submissions refused.
inline void purge_user(Ledger& ledger, const std::string& user_id) { ledger.purge(user_id, std::nullopt); }

/// Builds and judges the (region, period) window from the ledger.
///
/// `emit` receives the events that record the outcome: one DetectionRun and a
/// UserBlacklisted per malicious user, in that order. A window that was judged
/// before is returned as stored and emits nothing, as does a window with no
/// reports at all.
template <class Emit>
DetectionWindow detect_window(const Ledger& ledger, const QuestionnaireSchema& schema, WindowKey key,
                              const DetectionOptions& opts, Emit&& emit) {
    if (const auto* judged = ledger.window(key)) return *judged;

    DetectionWindow window;
    window.region = key.region;
    window.period = key.period;
    const auto grouped = ledger.window_reports(key);
    if (grouped.empty()) return run_detection(std::move(window), opts);

    for (const auto& [user, stored] : grouped) {
        std::vector<Report> reports;
        reports.reserve(stored.size());
        for (const auto* sr : stored) reports.push_back(sr->report);
        window.rows.push_back(consolidate(reports, schema));
    }
    window = run_detection(std::move(window), opts);

    emit(EventBody{DetectionRun{window}});
    for (const auto& a : window.assessments) {
        if (a.verdict == Verdict::Malicious && !ledger.is_blacklisted(a.user_id)) {
            emit(EventBody{UserBlacklisted{a.user_id, key.region, key.period}});
        }
    }
    return window;
}

}  // namespace floodsense
