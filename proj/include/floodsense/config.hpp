#pragma once

#include <cstdlib>
#include <functional>
#include <optional>
#include <string>

#include "floodsense/domain.hpp"
#include "floodsense/errors.hpp"
#include "floodsense/serialization.hpp"

namespace floodsense {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::string log_path;
    PeriodConfig period;
    RegionGrid grid;
    std::string schema_path;  // empty: built-in schema
    std::string admin_token;  // empty: admin routes need no token
    std::int64_t grace_seconds = 60;
    bool iterative_detection = false;
    bool timer_enabled = true;
    int tick_ms = 1000;

    std::string addr() const { return host + ":" + std::to_string(port); }
};

/// "host:port" or ":port".
inline void parse_addr(const std::string& addr, ServiceConfig& cfg) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "addr must be host:port, got '" + addr + "'");
    const auto host = addr.substr(0, colon);
    const auto port = addr.substr(colon + 1);
    try {
        std::size_t used = 0;
        const int p = std::stoi(port, &used);
        if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range(port);
        cfg.port = p;
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidConfig, "bad port in addr '" + addr + "'");
    }
    cfg.host = host.empty() ? "0.0.0.0" : host;
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::optional<std::string>(v) : std::nullopt;
}

inline void apply_env_overrides(ServiceConfig& cfg, const EnvLookup& env = process_env) {
    if (auto v = env("FLOODSENSE_ADDR")) parse_addr(*v, cfg);
    if (auto v = env("FLOODSENSE_LOG_PATH")) cfg.log_path = *v;
    if (auto v = env("FLOODSENSE_PERIOD_SECONDS")) {
        try {
            cfg.period.period_length_seconds = std::stoll(*v);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidConfig, "FLOODSENSE_PERIOD_SECONDS is not an integer");
        }
    }
    if (auto v = env("FLOODSENSE_GRID")) cfg.grid = RegionGrid::parse(*v);
    if (auto v = env("FLOODSENSE_SCHEMA_PATH")) cfg.schema_path = *v;
    if (auto v = env("FLOODSENSE_ADMIN_TOKEN")) cfg.admin_token = *v;
}

inline ServiceConfig service_config_from_json(const json& j) {
    constexpr auto E = ErrorCode::InvalidConfig;
    if (!j.is_object()) throw Error(E, "config must be a JSON object");
    ServiceConfig cfg;
    if (j.contains("addr")) parse_addr(detail::required<std::string>(j, "addr", E), cfg);
    cfg.log_path = detail::optional_field<std::string>(j, "log_path", "", E);
    cfg.period.period_length_seconds = detail::optional_field<std::int64_t>(j, "period_seconds", 3600, E);
    cfg.period.epoch_origin = detail::optional_field<Timestamp>(j, "epoch_origin", 0, E);
    if (j.contains("grid")) cfg.grid = RegionGrid::parse(detail::required<std::string>(j, "grid", E));
    cfg.schema_path = detail::optional_field<std::string>(j, "schema_path", "", E);
    cfg.admin_token = detail::optional_field<std::string>(j, "admin_token", "", E);
    cfg.grace_seconds = detail::optional_field<std::int64_t>(j, "grace_seconds", 60, E);
    cfg.iterative_detection = detail::optional_field<bool>(j, "iterative_detection", false, E);
    cfg.timer_enabled = detail::optional_field<bool>(j, "timer", true, E);
    cfg.tick_ms = detail::optional_field<int>(j, "tick_ms", 1000, E);
    return cfg;
}

inline void validate(const ServiceConfig& cfg) {
    constexpr auto E = ErrorCode::InvalidConfig;
    if (cfg.log_path.empty()) throw Error(E, "log_path is required");
    if (cfg.period.period_length_seconds <= 0) throw Error(E, "period_seconds must be > 0");
    if (cfg.grace_seconds < 0) throw Error(E, "grace_seconds must be >= 0");
    if (cfg.tick_ms <= 0) throw Error(E, "tick_ms must be > 0");
}

/// File settings first, then FLOODSENSE_* environment overrides, then validation.
inline ServiceConfig load_service_config(const std::string& path, const EnvLookup& env = process_env) {
    json j;
    try {
        j = json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
    }
    auto cfg = service_config_from_json(j);
    apply_env_overrides(cfg, env);
    validate(cfg);
    return cfg;
}

}  // namespace floodsense
