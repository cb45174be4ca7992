#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "floodsense/service.hpp"

using namespace floodsense;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("floodsense_service_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

std::size_t line_count(const std::string& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

/// 2x2 grid over [0,10]^2, hourly periods from t=0, token "s3cret".
ServiceConfig test_config(const std::string& log_path) {
    ServiceConfig cfg;
    cfg.log_path = log_path;
    cfg.grid = RegionGrid(0, 10, 0, 10, 2, 2);
    cfg.admin_token = "s3cret";
    cfg.grace_seconds = 60;
    return cfg;
}

struct FakeClock {
    std::shared_ptr<std::atomic<Timestamp>> now = std::make_shared<std::atomic<Timestamp>>(0);
    Clock clock() const {
        return [n = now] { return n->load(); };
    }
    void set(Timestamp t) { now->store(t); }
};

const std::string kAuth = "Bearer s3cret";

/// Report for the built-in schema: every scored question gets `option`
/// (clamped to its scale), descriptive questions are skipped.
json report_json(const std::string& id, const std::string& user, int option, Timestamp ts, double lat = 2.0,
                 double lon = 2.0) {
    static const auto schema = default_schema();
    json answers = json::array();
    for (const auto& q : schema.questions()) {
        answers.push_back(q.scored() ? json(std::min(option, q.option_count)) : json(nullptr));
    }
    return json{{"report_id", id}, {"user_id", user}, {"latitude", lat}, {"longitude", lon},
                {"timestamp", ts},  {"answers", answers}, {"attachments", json::array()}};
}

void register_users(Service& s, const std::vector<std::string>& ids) {
    for (const auto& id : ids) ASSERT_EQ(s.register_user(json{{"user_id", id}, {"identity", id}}.dump()).status, 201);
}

std::vector<std::string> ids(const std::string& prefix, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

/// Six users in region 0, period 0: five agree on option 1, "bad" picks 10.
void populate_window(Service& s, PeriodIndex period = 0) {
    const Timestamp ts = period * 3600 + 10;
    for (const auto& u : ids("h", 5)) {
        s.submit_report(report_json(u + "-p" + std::to_string(period), u, 1, ts).dump());
    }
    s.submit_report(report_json("bad-p" + std::to_string(period), "bad", 10, ts).dump());
}

}  // namespace

TEST(ServiceUsers, RegisterAndConflicts) {
    TempDir dir;
    Service s(test_config(dir.file("log")));
    auto r = s.register_user(R"({"user_id":"a","identity":"Ana","education_level":"BSc"})");
    EXPECT_EQ(r.status, 201);
    EXPECT_EQ(r.body.at("user_id"), "a");
    EXPECT_EQ(s.register_user(R"({"user_id":"a","identity":"Ana"})").status, 409);
    EXPECT_EQ(s.register_user(R"({"user_id":"b"})").status, 422);
    EXPECT_EQ(s.register_user("{").status, 422);
    r = s.register_user(R"({"identity":"Nameless"})");
    EXPECT_EQ(r.status, 201);
    const std::string generated = r.body.at("user_id");
    EXPECT_FALSE(generated.empty());
    EXPECT_TRUE(s.snapshot().has_user(generated));
}

TEST(ServiceReports, AcceptanceAndRejections) {
    TempDir dir;
    auto cfg = test_config(dir.file("log"));
    cfg.period.epoch_origin = 100;
    Service s(cfg);
    register_users(s, {"a"});

    auto r = s.submit_report(report_json("r1", "a", 2, 3700 + 100, 7.0, 2.0).dump());
    EXPECT_EQ(r.status, 202);
    EXPECT_EQ(r.body.at("region"), 2);
    EXPECT_EQ(r.body.at("period"), 1);
    EXPECT_EQ(r.body.at("late"), false);

    // idempotent re-post, conflicting re-use of the id
    EXPECT_EQ(s.submit_report(report_json("r1", "a", 2, 3800, 7.0, 2.0).dump()).status, 200);
    EXPECT_EQ(s.submit_report(report_json("r1", "a", 3, 3800, 7.0, 2.0).dump()).status, 409);

    EXPECT_EQ(s.submit_report(report_json("r2", "ghost", 2, 500).dump()).status, 404);
    EXPECT_EQ(s.submit_report(report_json("r3", "a", 2, 500, 11.0, 2.0).dump()).status, 400);
    EXPECT_EQ(s.submit_report(report_json("r4", "a", 2, 50).dump()).status, 422);
    EXPECT_EQ(s.submit_report("not json").status, 422);

    auto bad = report_json("r5", "a", 2, 500);
    bad["answers"][0] = 11;
    bad["answers"].erase(16);
    r = s.submit_report(bad.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(r.body.at("violations").size(), 2u);
    EXPECT_EQ(s.snapshot().reports().size(), 1u);
}

TEST(ServiceReports, BlacklistedUserIsRefusedWithoutNewEvents) {
    TempDir dir;
    const auto log = dir.file("log");
    FakeClock clock;
    Service s(test_config(log), clock.clock());
    register_users(s, ids("h", 5));
    register_users(s, {"bad"});
    populate_window(s);
    clock.set(4000);
    const auto d = s.detect("0", "0", false, kAuth);
    ASSERT_EQ(d.status, 200);
    EXPECT_EQ(d.body.at("blacklisted"), json::array({"bad"}));
    const auto lines = line_count(log);
    const auto r = s.submit_report(report_json("again", "bad", 1, 4000).dump());
    EXPECT_EQ(r.status, 403);
    EXPECT_EQ(line_count(log), lines);
}

TEST(ServiceDetect, ParametersAndAuthorization) {
    TempDir dir;
    FakeClock clock;
    Service s(test_config(dir.file("log")), clock.clock());
    EXPECT_EQ(s.detect("0", "0", false, "").status, 401);
    EXPECT_EQ(s.detect("0", "0", false, "Bearer nope").status, 401);
    EXPECT_EQ(s.detect(std::nullopt, "0", false, kAuth).status, 400);
    EXPECT_EQ(s.detect("0", "-1", false, kAuth).status, 400);
    EXPECT_EQ(s.detect("x", "0", false, kAuth).status, 400);
    EXPECT_EQ(s.detect("4", "0", false, kAuth).status, 404);
    clock.set(100);
    EXPECT_EQ(s.detect("0", "0", false, kAuth).status, 409);
    const auto forced = s.detect("0", "0", true, kAuth);
    EXPECT_EQ(forced.status, 200);
    EXPECT_EQ(forced.body.at("participants"), 0);
    EXPECT_EQ(forced.body.at("executed"), false);
}

TEST(ServiceDetect, EmptyTokenDisablesAuthorization) {
    TempDir dir;
    auto cfg = test_config(dir.file("log"));
    cfg.admin_token.clear();
    FakeClock clock;
    clock.set(1'000'000);
    Service s(cfg, clock.clock());
    EXPECT_EQ(s.detect("0", "0", false, "").status, 200);
}

TEST(ServiceDetect, RepeatedDetectionReturnsTheRecordedWindow) {
    TempDir dir;
    const auto log = dir.file("log");
    FakeClock clock;
    Service s(test_config(log), clock.clock());
    register_users(s, ids("h", 5));
    register_users(s, {"bad"});
    populate_window(s);
    clock.set(3600);
    const auto first = s.detect("0", "0", false, kAuth);
    ASSERT_EQ(first.status, 200);
    EXPECT_EQ(first.body.at("participants"), 6);
    EXPECT_EQ(first.body.at("executed"), true);
    const auto lines = line_count(log);
    clock.set(99999);
    EXPECT_EQ(s.detect("0", "0", false, kAuth).body, first.body);
    EXPECT_EQ(line_count(log), lines);

    const auto status = s.user_status("bad");
    EXPECT_EQ(status.body.at("status"), "Blacklisted");
    EXPECT_EQ(status.body.at("blacklisted_by"), (json{{"region", 0}, {"period", 0}}));
    EXPECT_EQ(status.body.at("assessments").at(0).at("verdict"), "Malicious");
    EXPECT_EQ(s.user_status("h0").body.at("assessments").at(0).at("verdict"), "NonMalicious");
    EXPECT_EQ(s.user_status("h0").body.at("blacklisted_by"), nullptr);
    EXPECT_EQ(s.user_status("nobody").status, 404);
}

TEST(ServiceReports, LateReportsRollIntoTheNextOpenPeriod) {
    TempDir dir;
    FakeClock clock;
    Service s(test_config(dir.file("log")), clock.clock());
    register_users(s, {"a"});
    clock.set(100);
    ASSERT_EQ(s.detect("0", "0", true, kAuth).status, 200);  // empty window
    auto r = s.submit_report(report_json("r1", "a", 1, 50).dump());
    EXPECT_EQ(r.body.at("period"), 0);  // an empty judgement leaves nothing to close
    ASSERT_EQ(s.detect("0", "0", true, kAuth).status, 200);
    r = s.submit_report(report_json("r2", "a", 1, 60).dump());
    EXPECT_EQ(r.status, 202);
    EXPECT_EQ(r.body.at("period"), 1);
    EXPECT_EQ(r.body.at("late"), true);
    EXPECT_TRUE(s.snapshot().report("r2")->late);
}

TEST(ServiceAggregates, TrustedHistogramsAndErrors) {
    TempDir dir;
    FakeClock clock;
    Service s(test_config(dir.file("log")), clock.clock());
    register_users(s, ids("h", 5));
    register_users(s, {"bad"});
    populate_window(s);
    auto agg = s.aggregates("0", std::nullopt, std::nullopt);
    ASSERT_EQ(agg.status, 200);
    EXPECT_EQ(agg.body.at("unvetted_users"), 6);
    clock.set(3700);
    s.detect("0", "0", false, kAuth);
    agg = s.aggregates("0", std::nullopt, std::nullopt);
    EXPECT_EQ(agg.body.at("unvetted_users"), 0);
    const auto& q1 = agg.body.at("questions").at(0);
    EXPECT_EQ(q1.at("respondents"), 5);
    EXPECT_EQ(q1.at("histogram").at(0), 5);
    EXPECT_EQ(q1.at("mode"), 1);
    EXPECT_EQ(s.aggregates("4", std::nullopt, std::nullopt).status, 404);
    EXPECT_EQ(s.aggregates("zero", std::nullopt, std::nullopt).status, 404);
    EXPECT_EQ(s.aggregates("0", "x", std::nullopt).status, 400);
    EXPECT_EQ(s.aggregates("0", "0", "-2").status, 400);
    EXPECT_EQ(s.aggregates("0", "1", "3").body.at("questions").at(0).at("respondents"), 0);
}

TEST(ServiceRestart, StateSurvivesReopening) {
    TempDir dir;
    const auto log = dir.file("log");
    FakeClock clock;
    json before;
    {
        Service s(test_config(log), clock.clock());
        register_users(s, ids("h", 5));
        register_users(s, {"bad"});
        populate_window(s);
        clock.set(4000);
        s.run_due_detections();
        before = s.aggregates("0", std::nullopt, std::nullopt).body;
    }
    Service s(test_config(log), clock.clock());
    EXPECT_EQ(s.aggregates("0", std::nullopt, std::nullopt).body, before);
    EXPECT_EQ(s.submit_report(report_json("x", "bad", 1, 4000).dump()).status, 403);
}

TEST(ServiceTimer, DueDetectionsRespectGraceAndOrder) {
    TempDir dir;
    FakeClock clock;
    Service s(test_config(dir.file("log")), clock.clock());
    register_users(s, ids("h", 5));
    register_users(s, {"bad"});
    populate_window(s, 0);
    s.submit_report(report_json("far", "h0", 1, 20, 8.0, 8.0).dump());
    clock.set(3600 + 59);
    EXPECT_TRUE(s.run_due_detections().empty());
    clock.set(3600 + 60);
    const auto done = s.run_due_detections();
    ASSERT_EQ(done.size(), 2u);
    EXPECT_EQ(done[0].region, 0u);
    EXPECT_EQ(done[1].region, 3u);
    EXPECT_TRUE(s.run_due_detections().empty());
}

TEST(ServiceTimer, TimerAndManualDetectionAgree) {
    TempDir dir;
    FakeClock timer_clock, manual_clock;
    Service timed(test_config(dir.file("timed")), timer_clock.clock());
    Service manual(test_config(dir.file("manual")), manual_clock.clock());
    for (Service* s : {&timed, &manual}) {
        register_users(*s, ids("h", 5));
        register_users(*s, {"bad"});
        for (PeriodIndex p = 0; p < 3; ++p) populate_window(*s, p);
    }
    timer_clock.set(3 * 3600 + 60);
    {
        DetectionTimer timer(timed, std::chrono::milliseconds(5));
        for (int i = 0; i < 400 && timed.snapshot().windows().size() < 3; ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    manual_clock.set(3 * 3600);
    for (PeriodIndex p = 0; p < 3; ++p) ASSERT_EQ(manual.detect("0", std::to_string(p), false, kAuth).status, 200);
    EXPECT_EQ(timed.snapshot(), manual.snapshot());
    EXPECT_EQ(timed.aggregates("0", std::nullopt, std::nullopt).body,
              manual.aggregates("0", std::nullopt, std::nullopt).body);
}

TEST(ServiceConfigFile, EnvironmentOverridesAndValidation) {
    TempDir dir;
    const auto path = dir.file("service.json");
    {
        std::ofstream out(path);
        out << R"({"addr":"127.0.0.1:9000","log_path":"a.log","grid":"0,1,0,1,2,2","period_seconds":600})";
    }
    auto env = [](const char* name) -> std::optional<std::string> {
        if (std::string(name) == "FLOODSENSE_ADDR") return ":7000";
        if (std::string(name) == "FLOODSENSE_LOG_PATH") return "b.log";
        return std::nullopt;
    };
    const auto cfg = load_service_config(path, env);
    EXPECT_EQ(cfg.port, 7000);
    EXPECT_EQ(cfg.log_path, "b.log");
    EXPECT_EQ(cfg.period.period_length_seconds, 600);
    EXPECT_EQ(cfg.grid.region_count(), 4u);
    const auto plain = load_service_config(path, [](const char*) { return std::optional<std::string>{}; });
    EXPECT_EQ(plain.port, 9000);
    {
        std::ofstream out(path);
        out << R"({"addr":"127.0.0.1:9000"})";
    }
    try {
        load_service_config(path, [](const char*) { return std::optional<std::string>{}; });
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
    EXPECT_THROW(load_service_config(dir.file("missing.json")), Error);
}

TEST(HttpFrontendTest, RoutesOverTheWire) {
    TempDir dir;
    FakeClock clock;
    Service s(test_config(dir.file("log")), clock.clock());
    HttpFrontend http(s);
    const int port = http.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread server([&] { http.serve(); });
    http.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto res = client.Post("/users", R"({"user_id":"a","identity":"A"})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    res = client.Post("/reports", report_json("r1", "a", 1, 10).dump(), "application/json");
    EXPECT_EQ(res->status, 202);
    EXPECT_EQ(json::parse(res->body).at("period"), 0);
    res = client.Post("/admin/detect?region=0&period=0", "", "application/json");
    EXPECT_EQ(res->status, 401);
    res = client.Post("/admin/detect?region=0&period=0", httplib::Headers{{"Authorization", kAuth}}, "",
                      "application/json");
    EXPECT_EQ(res->status, 409);
    res = client.Post("/admin/detect?region=0&period=0&force=1", httplib::Headers{{"Authorization", kAuth}}, "",
                      "application/json");
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body).at("participants"), 1);
    res = client.Get("/aggregates/0?provenance=1");
    EXPECT_EQ(res->status, 200);
    EXPECT_TRUE(json::parse(res->body).at("questions").at(0).contains("provenance"));
    EXPECT_EQ(client.Get("/aggregates/9")->status, 404);
    res = client.Get("/users/a/status");
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body).at("assessments").at(0).at("verdict"), "Unvetted");
    EXPECT_EQ(client.Get("/users/zz/status")->status, 404);

    http.stop();
    server.join();
}
