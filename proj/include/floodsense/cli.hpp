#pragma once

// `floodsense` command line: serve, simulate, detect, report.
// Exit codes: 0 success, 2 usage/config, 3 environment, 4 data corruption.

#include <pthread.h>
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "floodsense/aggregation.hpp"
#include "floodsense/batch.hpp"
#include "floodsense/config.hpp"
#include "floodsense/service.hpp"
#include "floodsense/simulator.hpp"
#include "floodsense/store.hpp"

namespace floodsense::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kEnvironment = 3, kCorruption = 4 };

inline int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::CorruptLog: return kCorruption;
        case ErrorCode::StorageFailure: return kEnvironment;
        default: return kUsage;
    }
}

namespace detail {

inline bool write_file(const std::filesystem::path& path, const std::string& content, std::ostream& err) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        err << "error: cannot write " << path.string() << "\n";
        return false;
    }
    out << content;
    out.flush();
    if (!out) {
        err << "error: write to " << path.string() << " failed\n";
        return false;
    }
    return true;
}

}  // namespace detail

inline int serve(const std::string& config_path, std::ostream& out, std::ostream& err) {
    ServiceConfig cfg;
    try {
        cfg = load_service_config(config_path);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    // Signals are taken by a dedicated thread, so block them before any other
    // thread exists.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::unique_ptr<Service> service;
    try {
        service = std::make_unique<Service>(cfg);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kEnvironment;
    }

    HttpFrontend http(*service);
    const int port = http.bind(cfg.host, cfg.port);
    if (port < 0) {
        err << "error: cannot bind " << cfg.addr() << "\n";
        return kEnvironment;
    }
    out << "floodsense listening on " << cfg.host << ":" << port << std::endl;

    std::optional<DetectionTimer> timer;
    if (cfg.timer_enabled) timer.emplace(*service, std::chrono::milliseconds(cfg.tick_ms));

    std::jthread signal_waiter([&http, signals](std::stop_token stop) {
        const timespec poll{0, 200'000'000};
        while (!stop.stop_requested()) {
            if (sigtimedwait(&signals, nullptr, &poll) > 0) {
                http.stop();
                return;
            }
        }
    });
    http.serve();
    signal_waiter.request_stop();
    return kOk;
}

struct SimulateArgs {
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string preset;
    std::size_t cohort_size = 10;
};

inline int simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    sim::ScenarioConfig cfg;
    try {
        if (args.preset == "table1") {
            cfg = sim::table1_scenario(args.cohort_size, args.seed.value_or(1));
        } else if (!args.preset.empty()) {
            err << "error: unknown preset '" << args.preset << "'\n";
            return kUsage;
        } else if (args.scenario.empty()) {
            err << "error: --scenario or --preset is required\n";
            return kUsage;
        } else {
            const std::filesystem::path path(args.scenario);
            json j;
            try {
                j = json::parse(floodsense::detail::read_file(path.string()));
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::InvalidScenario, e.what());
            }
            cfg = sim::scenario_from_json(j, path.parent_path());
            if (args.seed) cfg.seed = *args.seed;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    sim::SimulationResult result;
    try {
        result = sim::run_scenario(cfg);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    const std::filesystem::path dir(args.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        err << "error: cannot create " << dir.string() << ": " << ec.message() << "\n";
        return kEnvironment;
    }
    bool ok = detail::write_file(dir / "users.csv", sim::users_csv(result), err) &&
              detail::write_file(dir / "summary.json", sim::summary_json(result).dump(2) + "\n", err);
    if (ok && args.preset == "table1") {
        ok = detail::write_file(dir / "table1.csv", sim::table1_csv(sim::table1_rows(result, cfg.schema)), err);
    }
    if (!ok) return kEnvironment;
    out << "simulated " << result.users.size() << " users (seed " << cfg.seed << ") -> " << dir.string() << "\n";
    return kOk;
}

struct DetectArgs {
    std::string input;
    std::string schema;
    std::string grid = "0,1,0,1,1,1";
    std::string out;
    std::int64_t period_seconds = 3600;
    std::int64_t epoch_origin = 0;
};

inline int detect(const DetectArgs& args, std::ostream& out, std::ostream& err) {
    QuestionnaireSchema schema;
    RegionGrid grid;
    PeriodConfig period{args.period_seconds, args.epoch_origin};
    try {
        schema = args.schema.empty() ? default_schema() : load_schema(args.schema);
        grid = RegionGrid::parse(args.grid);
        if (period.period_length_seconds <= 0) throw Error(ErrorCode::InvalidConfig, "period length must be > 0");
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    std::ifstream in(args.input, std::ios::binary);
    if (!in) {
        err << "error: cannot open " << args.input << "\n";
        return kEnvironment;
    }
    BatchOutcome outcome;
    try {
        outcome = detect_offline(in, schema, grid, period);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    for (const auto& w : outcome.warnings) err << "warning: " << w << "\n";
    std::string text;
    for (const auto& rec : outcome.assessments) text += rec.dump() + "\n";
    if (!detail::write_file(args.out, text, err)) return kEnvironment;
    out << outcome.assessments.size() << " assessments -> " << args.out << "\n";
    return kOk;
}

struct ReportArgs {
    std::string log;
    std::size_t region = 0;
    std::string out;
    std::string schema;
    std::string grid;
    std::optional<PeriodIndex> from;
    std::optional<PeriodIndex> to;
};

inline int report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
    Ledger ledger;
    QuestionnaireSchema schema;
    try {
        schema = args.schema.empty() ? default_schema() : load_schema(args.schema);
        ledger = replay_file(args.log);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    PeriodIndex last = 0;
    RegionIndex widest = args.region;
    for (const auto& [id, sr] : ledger.reports()) {
        widest = std::max(widest, sr.region);
        if (sr.region == args.region) last = std::max(last, sr.period);
    }
    AggregateReport agg;
    try {
        // Without --grid any region index is accepted.
        const RegionGrid grid = args.grid.empty() ? RegionGrid(0, 1, 0, 1, 1, widest + 1) : RegionGrid::parse(args.grid);
        agg = aggregate_region(args.region, args.from.value_or(0), args.to.value_or(last), ledger, schema, grid);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    const bool csv = std::filesystem::path(args.out).extension() == ".csv";
    if (!detail::write_file(args.out, csv ? to_csv(agg) : to_json(agg).dump(2) + "\n", err)) return kEnvironment;
    out << "region " << args.region << " aggregate -> " << args.out << "\n";
    return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"floodsense: trusted crowdsourced flood-needs acquisition"};
    app.require_subcommand(1);

    std::string config_path;
    auto* serve_cmd = app.add_subcommand("serve", "run the ingestion service");
    serve_cmd->add_option("--config", config_path, "service configuration (JSON)")->required();

    SimulateArgs sim_args;
    std::uint64_t seed = 0;
    auto* sim_cmd = app.add_subcommand("simulate", "run a seeded behaviour simulation");
    sim_cmd->add_option("--scenario", sim_args.scenario, "scenario file (JSON)");
    auto* seed_opt = sim_cmd->add_option("--seed", seed, "random seed (overrides the scenario's)");
    sim_cmd->add_option("--out", sim_args.out_dir, "output directory")->required();
    sim_cmd->add_option("--preset", sim_args.preset, "built-in scenario: table1");
    sim_cmd->add_option("--cohort-size", sim_args.cohort_size, "users per behaviour for --preset table1")
        ->check(CLI::PositiveNumber);

    DetectArgs det_args;
    auto* det_cmd = app.add_subcommand("detect", "offline detection over a report file or event log");
    det_cmd->add_option("--input", det_args.input, "reports (JSON Lines) or event log")->required();
    det_cmd->add_option("--schema", det_args.schema, "questionnaire schema (default: built-in)");
    det_cmd->add_option("--grid", det_args.grid, "latmin,latmax,lonmin,lonmax,rows,cols");
    det_cmd->add_option("--out", det_args.out, "assessment output (JSON Lines)")->required();
    det_cmd->add_option("--period-seconds", det_args.period_seconds, "period length for plain report files");
    det_cmd->add_option("--epoch-origin", det_args.epoch_origin, "period origin for plain report files");

    ReportArgs rep_args;
    PeriodIndex from = 0, to = 0;
    auto* rep_cmd = app.add_subcommand("report", "export a region's trusted aggregate");
    rep_cmd->add_option("--log", rep_args.log, "event log")->required();
    rep_cmd->add_option("--region", rep_args.region, "region index")->required();
    rep_cmd->add_option("--out", rep_args.out, "output file (.csv for CSV, JSON otherwise)")->required();
    rep_cmd->add_option("--schema", rep_args.schema, "questionnaire schema (default: built-in)");
    rep_cmd->add_option("--grid", rep_args.grid, "latmin,latmax,lonmin,lonmax,rows,cols");
    auto* from_opt = rep_cmd->add_option("--from", from, "first period (default 0)");
    auto* to_opt = rep_cmd->add_option("--to", to, "last period (default: latest with data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    if (*serve_cmd) return serve(config_path, out, err);
    if (*sim_cmd) {
        if (*seed_opt) sim_args.seed = seed;
        return simulate(sim_args, out, err);
    }
    if (*det_cmd) return detect(det_args, out, err);
    if (*from_opt) rep_args.from = from;
    if (*to_opt) rep_args.to = to;
    return report(rep_args, out, err);
}

}  // namespace floodsense::cli
