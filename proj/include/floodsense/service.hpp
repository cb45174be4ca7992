#pragma once

// Ingestion and query service. `Service` holds the request logic and is
// usable without a network; `HttpFrontend` maps it onto HTTP routes and
// `DetectionTimer` fires detection for closed periods.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "floodsense/aggregation.hpp"
#include "floodsense/config.hpp"
#include "floodsense/domain.hpp"
#include "floodsense/events.hpp"
#include "floodsense/ledger.hpp"
#include "floodsense/serialization.hpp"
#include "floodsense/store.hpp"
#include "floodsense/trust.hpp"

namespace floodsense {

struct ApiResponse {
    int status = 200;
    json body;
};

using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

/// Summary returned by /admin/detect; a pure function of the judged window.
inline json window_summary(const DetectionWindow& w) {
    json blacklisted = json::array();
    json assessments = json::array();
    for (const auto& a : w.assessments) {
        assessments.push_back(to_json(a));
        if (a.verdict == Verdict::Malicious) blacklisted.push_back(a.user_id);
    }
    json stats = json::array();
    for (const auto& s : w.stats) {
        stats.push_back(json{{"question_id", s.question_id}, {"n", s.n}, {"mean", s.mean}, {"sd", s.sd},
                             {"lo", s.lo}, {"hi", s.hi}});
    }
    return json{{"region", w.region},
                {"period", w.period},
                {"executed", w.executed},
                {"participants", w.rows.size()},
                {"stats", std::move(stats)},
                {"assessments", std::move(assessments)},
                {"blacklisted", std::move(blacklisted)}};
}

class Service {
public:
    explicit Service(ServiceConfig cfg, Clock clock = system_now)
        : cfg_(std::move(cfg)),
          clock_(std::move(clock)),
          schema_(cfg_.schema_path.empty() ? default_schema() : load_schema(cfg_.schema_path)),
          store_(cfg_.log_path) {
        detection_.iterative = cfg_.iterative_detection;
    }

    const ServiceConfig& config() const noexcept { return cfg_; }
    const QuestionnaireSchema& schema() const noexcept { return schema_; }

    /// Consistent copy of the current state.
    Ledger snapshot() const {
        std::shared_lock lock(mutex_);
        return store_.ledger();
    }

    // POST /users
    ApiResponse register_user(const std::string& body) {
        UserProfile profile;
        try {
            profile = profile_from_json(json::parse(body));
        } catch (const json::parse_error& e) {
            return error(422, "Malformed", e.what());
        } catch (const Error& e) {
            return error(422, "Malformed", e.what());
        }
        std::unique_lock lock(mutex_);
        const auto& ledger = store_.ledger();
        if (profile.user_id.empty()) {
            std::size_t n = ledger.users().size();
            do {
                profile.user_id = "user-" + std::to_string(++n);
            } while (ledger.has_user(profile.user_id));
        } else if (ledger.has_user(profile.user_id)) {
            return error(409, "DuplicateUser", "user " + profile.user_id + " already exists");
        }
        profile.status = UserStatus::Active;
        store_.append(UserRegistered{profile}, clock_());
        return {201, json{{"user_id", profile.user_id}}};
    }

    // POST /reports
    ApiResponse submit_report(const std::string& body) {
        Report report;
        try {
            report = report_from_json(json::parse(body));
        } catch (const json::parse_error& e) {
            return error(422, "Malformed", e.what());
        } catch (const Error& e) {
            return error(422, "Malformed", e.what());
        }
        std::unique_lock lock(mutex_);
        const auto& ledger = store_.ledger();
        if (const auto* prior = ledger.report(report.report_id)) {
            if (prior->report == report) return {200, acknowledgment(*prior)};
            return error(409, "DuplicateReportId", "report id " + report.report_id + " was used for different content");
        }
        if (!ledger.has_user(report.user_id)) return error(404, "UnknownUser", report.user_id);
        if (ledger.is_blacklisted(report.user_id)) {
            return error(403, "BlacklistedUser", "user " + report.user_id + " is blacklisted");
        }
        if (auto violations = validate_report(report, schema_); !violations.empty()) {
            json list = json::array();
            for (const auto& v : violations) list.push_back(json{{"kind", to_string(v.kind)}, {"detail", v.detail}});
            auto resp = error(422, "InvalidReport", "report failed validation");
            resp.body["violations"] = std::move(list);
            return resp;
        }
        RegionIndex region = 0;
        PeriodIndex period = 0;
        try {
            region = region_of(report.latitude, report.longitude, cfg_.grid);
            period = period_of(report.timestamp, cfg_.period);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::OutsideDisasterArea) return error(400, "OutsideDisasterArea", e.what());
            return error(422, std::string(to_string(e.code())), e.what());
        }
        // A window is closed to new data once judged; late arrivals roll forward.
        bool late = false;
        while (ledger.window_judged({region, period})) {
            ++period;
            late = true;
        }
        const auto id = report.report_id;
        store_.append(ReportSubmitted{std::move(report), region, period, late}, clock_());
        return {202, acknowledgment(*store_.ledger().report(id))};
    }

    // POST /admin/detect?region&period[&force]
    ApiResponse detect(const std::optional<std::string>& region_param, const std::optional<std::string>& period_param,
                       bool force, const std::string& authorization) {
        if (!authorized(authorization)) return error(401, "Unauthorized", "missing or wrong admin token");
        if (!region_param || !period_param) return error(400, "BadRequest", "region and period are required");
        auto region = parse_index(*region_param);
        auto period = parse_index(*period_param);
        if (!region || !period) return error(400, "BadRequest", "region and period must be non-negative integers");
        if (*region >= cfg_.grid.region_count()) return error(404, "UnknownRegion", *region_param);
        const WindowKey key{static_cast<RegionIndex>(*region), static_cast<PeriodIndex>(*period)};
        std::unique_lock lock(mutex_);
        if (!force && !store_.ledger().window_judged(key) && clock_() < cfg_.period.period_end(key.period)) {
            return error(409, "PeriodOpen", "period " + *period_param + " has not closed yet");
        }
        return {200, window_summary(detect_locked(key))};
    }

    // GET /aggregates/{region}?from&to
    ApiResponse aggregates(const std::string& region_param, const std::optional<std::string>& from_param,
                           const std::optional<std::string>& to_param, bool with_provenance = false) const {
        auto region = parse_index(region_param);
        if (!region || *region >= cfg_.grid.region_count()) return error(404, "UnknownRegion", region_param);
        std::optional<long long> from = 0;
        std::optional<long long> to;
        if (from_param) from = parse_index(*from_param);
        if (to_param && !(to = parse_index(*to_param))) from.reset();
        if (!from) return error(400, "BadRequest", "from and to must be non-negative period indices");
        std::shared_lock lock(mutex_);
        if (!to) {
            // default: through the latest period holding data for the region
            to = 0;
            for (const auto& [id, sr] : store_.ledger().reports()) {
                if (sr.region == static_cast<RegionIndex>(*region)) to = std::max<long long>(*to, sr.period);
            }
        }
        const auto report = aggregate_region(static_cast<RegionIndex>(*region), *from, *to, store_.ledger(), schema_,
                                             cfg_.grid, AggregateOptions{with_provenance});
        return {200, to_json(report, with_provenance)};
    }

    // GET /users/{id}/status
    ApiResponse user_status(const std::string& user_id) const {
        std::shared_lock lock(mutex_);
        const auto& ledger = store_.ledger();
        auto it = ledger.users().find(user_id);
        if (it == ledger.users().end()) return error(404, "UnknownUser", user_id);
        std::vector<std::pair<WindowKey, Assessment>> history;
        for (const auto& [key, w] : ledger.windows()) {
            if (const auto* a = w.assessment_of(user_id)) history.emplace_back(key, *a);
        }
        std::sort(history.begin(), history.end(), [](const auto& a, const auto& b) {
            return std::tie(a.first.period, a.first.region) < std::tie(b.first.period, b.first.region);
        });
        json list = json::array();
        for (const auto& [key, a] : history) list.push_back(assessment_record(key.region, key.period, a));
        json cause = nullptr;
        if (auto b = ledger.blacklist().find(user_id); b != ledger.blacklist().end() && b->second) {
            cause = json{{"region", b->second->region}, {"period", b->second->period}};
        }
        return {200, json{{"user_id", user_id},
                          {"status", to_string(it->second.status)},
                          {"assessments", std::move(list)},
                          {"blacklisted_by", std::move(cause)}}};
    }

    /// Judges every populated window whose period closed at least
    /// grace_seconds ago, in (period, region) order. Returns what was judged.
    std::vector<WindowKey> run_due_detections() {
        std::unique_lock lock(mutex_);
        const auto now = clock_();
        std::vector<WindowKey> done;
        for (const auto& key : store_.ledger().populated_windows()) {
            if (store_.ledger().window_judged(key)) continue;
            if (now < cfg_.period.period_end(key.period) + cfg_.grace_seconds) continue;
            detect_locked(key);
            done.push_back(key);
        }
        return done;
    }

    PeriodIndex current_period() const {
        const auto now = clock_();
        return now < cfg_.period.epoch_origin ? 0 : period_of(now, cfg_.period);
    }

private:
    static ApiResponse error(int status, const std::string& code, const std::string& message) {
        return {status, json{{"error", code}, {"message", message}}};
    }

    static std::optional<long long> parse_index(const std::string& s) {
        if (s.empty() || s.size() > 18) return std::nullopt;
        long long v = 0;
        for (char c : s) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    }

    bool authorized(const std::string& header) const {
        return cfg_.admin_token.empty() || header == "Bearer " + cfg_.admin_token;
    }

    static json acknowledgment(const StoredReport& sr) {
        return json{{"report_id", sr.report.report_id}, {"region", sr.region}, {"period", sr.period}, {"late", sr.late}};
    }

    DetectionWindow detect_locked(WindowKey key) {
        const auto ts = clock_();
        return detect_window(store_.ledger(), schema_, key, detection_,
                             [&](EventBody body) { store_.append(std::move(body), ts); });
    }

    ServiceConfig cfg_;
    Clock clock_;
    QuestionnaireSchema schema_;
    DetectionOptions detection_;
    mutable std::shared_mutex mutex_;
    EventStore store_;
};

/// Periodically calls Service::run_due_detections on a background thread.
class DetectionTimer {
public:
    DetectionTimer(Service& service, std::chrono::milliseconds tick)
        : thread_([&service, tick](std::stop_token stop) {
              std::mutex m;
              std::condition_variable_any cv;
              std::unique_lock lock(m);
              while (!stop.stop_requested()) {
                  try {
                      service.run_due_detections();
                  } catch (const std::exception& e) {
                      std::fprintf(stderr, "detection timer: %s\n", e.what());
                  }
                  cv.wait_for(lock, stop, tick, [] { return false; });
              }
          }) {}

private:
    std::jthread thread_;
};

/// HTTP/1.1 routes over a Service.
class HttpFrontend {
public:
    explicit HttpFrontend(Service& service) : service_(service) {
        // SO_REUSEADDR without the library's default SO_REUSEPORT
        server_.set_socket_options([](auto sock) {
            int yes = 1;
            ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
        auto reply = [](httplib::Response& res, const ApiResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server_.Post("/users", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, service_.register_user(req.body));
        });
        server_.Post("/reports", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, service_.submit_report(req.body));
        });
        server_.Post("/admin/detect", [this, reply](const httplib::Request& req, httplib::Response& res) {
            auto param = [&](const char* k) -> std::optional<std::string> {
                return req.has_param(k) ? std::optional<std::string>(req.get_param_value(k)) : std::nullopt;
            };
            const auto force = param("force");
            reply(res, service_.detect(param("region"), param("period"), force && (*force == "1" || *force == "true"),
                                       req.get_header_value("Authorization")));
        });
        server_.Get(R"(/aggregates/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
            auto param = [&](const char* k) -> std::optional<std::string> {
                return req.has_param(k) ? std::optional<std::string>(req.get_param_value(k)) : std::nullopt;
            };
            const auto provenance = param("provenance");
            reply(res, service_.aggregates(req.matches[1], param("from"), param("to"),
                                           provenance && (*provenance == "1" || *provenance == "true")));
        });
        server_.Get(R"(/users/([^/]+)/status)", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, service_.user_status(req.matches[1]));
        });
    }

    /// Returns the bound port, or -1 if the address is unavailable.
    int bind(const std::string& host, int port) {
        if (port == 0) return server_.bind_to_any_port(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }

    /// Blocks until stop().
    bool serve() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    Service& service_;
    httplib::Server server_;
};

}  // namespace floodsense
