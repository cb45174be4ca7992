#pragma once

// Seeded population simulator. Five behaviour models answer the
// questionnaire, reports flow through the same ledger and detection code the
// service uses, and the verdicts are scored against the expected labels.
//
// Randomness (see docs/simulation-formats.md):
//   * user i draws from its own std::mt19937_64, seeded with the (i+1)-th
//     output of SplitMix64 started at the scenario seed;
//   * uniform integers use rejection sampling on the raw 64-bit output;
//   * normal deviates use Box-Muller (cosine branch) over two uniforms in (0,1].
// Draw order within a user is (period, submission, question).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "floodsense/domain.hpp"
#include "floodsense/errors.hpp"
#include "floodsense/ledger.hpp"
#include "floodsense/serialization.hpp"
#include "floodsense/trust.hpp"

namespace floodsense::sim {

enum class BehaviorType { Random, Pattern, Accurate, NormalLow, NormalHigh };

inline constexpr std::array<BehaviorType, 5> kAllBehaviors = {
    BehaviorType::Random, BehaviorType::Pattern, BehaviorType::Accurate, BehaviorType::NormalLow,
    BehaviorType::NormalHigh};

inline constexpr double kNormalLowSd = 0.5;
inline constexpr double kNormalHighSd = 1.5;

inline std::string_view to_string(BehaviorType b) {
    switch (b) {
        case BehaviorType::Random: return "Random";
        case BehaviorType::Pattern: return "Pattern";
        case BehaviorType::Accurate: return "Accurate";
        case BehaviorType::NormalLow: return "NormalLow";
        case BehaviorType::NormalHigh: return "NormalHigh";
    }
    return "?";
}

inline std::optional<BehaviorType> parse_behavior(std::string_view s) {
    for (auto b : kAllBehaviors) {
        if (to_string(b) == s) return b;
    }
    return std::nullopt;
}

/// Long descriptions used in table1.csv.
inline std::string_view describe(BehaviorType b) {
    switch (b) {
        case BehaviorType::Random: return "Random";
        case BehaviorType::Pattern: return "Pattern";
        case BehaviorType::Accurate: return "Accurate";
        case BehaviorType::NormalLow: return "Normal distribution with low variance";
        case BehaviorType::NormalHigh: return "Normal distribution with high variance";
    }
    return "?";
}

/// Expected labels, the ground truth for precision and recall.
inline bool expected_malicious(BehaviorType b) {
    return b == BehaviorType::Random || b == BehaviorType::Pattern || b == BehaviorType::NormalHigh;
}

inline std::size_t behavior_index(BehaviorType b) { return static_cast<std::size_t>(b); }

// --- randomness -------------------------------------------------------------

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) : state_(state) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream for one simulated user.
    static Rng for_user(std::uint64_t scenario_seed, std::uint64_t user_index) {
        SplitMix64 sm(scenario_seed + user_index * 0x9E3779B97F4A7C15ULL);
        return Rng(sm.next());
    }

    /// Uniform over [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    (std::numeric_limits<std::uint64_t>::max() % span + 1) % span;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x > limit);
        return lo + static_cast<int>(x % span);
    }

    /// Uniform over (0, 1].
    double uniform01() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double standard_normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

/// Round half away from zero, then clamp to [1, k].
inline int quantize(double sample, int k) {
    return static_cast<int>(std::clamp(std::round(sample), 1.0, static_cast<double>(k)));
}

/// One scored answer. Normal models round half away from zero and clamp to
/// the option range.
inline int answer(BehaviorType behavior, const QuestionSpec& question, int truth, Rng& rng) {
    const int k = question.option_count;
    switch (behavior) {
        case BehaviorType::Random: return rng.uniform_int(1, k);
        case BehaviorType::Pattern: return ((question.id - 1) % k) + 1;
        case BehaviorType::Accurate: return truth;
        case BehaviorType::NormalLow:
        case BehaviorType::NormalHigh: {
            const double sd = behavior == BehaviorType::NormalLow ? kNormalLowSd : kNormalHighSd;
            const double sample = static_cast<double>(truth) + sd * rng.standard_normal();
            return quantize(sample, k);
        }
    }
    return truth;
}

// --- scenarios --------------------------------------------------------------

inline std::map<QuestionId, int> middle_truth(const QuestionnaireSchema& schema) {
    std::map<QuestionId, int> truth;
    for (const auto& q : schema.questions()) {
        if (q.scored()) truth[q.id] = (q.option_count + 1) / 2;
    }
    return truth;
}

struct ScenarioConfig {
    std::uint64_t seed = 1;
    QuestionnaireSchema schema = default_schema();
    std::map<QuestionId, int> truth = middle_truth(default_schema());
    std::array<std::size_t, 5> counts{};  // indexed by behavior_index()
    std::vector<RegionIndex> regions{0};
    RegionGrid grid;
    PeriodConfig period;
    std::size_t periods = 1;
    std::size_t submissions_per_user_per_period = 1;
    DetectionOptions detection;

    std::size_t total_users() const {
        std::size_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
};

inline void validate(const ScenarioConfig& cfg) {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidScenario, m); };
    for (const auto& q : cfg.schema.questions()) {
        if (!q.scored()) continue;
        auto it = cfg.truth.find(q.id);
        if (it == cfg.truth.end()) fail("no truth for question " + std::to_string(q.id));
        if (it->second < 1 || it->second > q.option_count) {
            fail("truth for question " + std::to_string(q.id) + " is not a valid option");
        }
    }
    for (const auto& [qid, v] : cfg.truth) {
        if (!cfg.schema.has_question(qid) || !cfg.schema.question(qid).scored()) {
            fail("truth given for non-scored question " + std::to_string(qid));
        }
    }
    if (cfg.total_users() < 1) fail("scenario has no users");
    if (cfg.regions.empty()) fail("scenario uses no regions");
    for (auto r : cfg.regions) {
        if (r >= cfg.grid.region_count()) fail("region " + std::to_string(r) + " is outside the grid");
    }
    if (cfg.periods < 1) fail("periods must be >= 1");
    if (cfg.submissions_per_user_per_period < 1) fail("submissions_per_user_per_period must be >= 1");
    if (cfg.period.period_length_seconds <= static_cast<std::int64_t>(cfg.submissions_per_user_per_period)) {
        fail("period too short for the number of submissions");
    }
}

struct UserOutcome {
    std::string user_id;
    BehaviorType behavior = BehaviorType::Accurate;
    RegionIndex region = 0;
    std::size_t answered = 0;
    std::size_t valid = 0;
    std::size_t outliers = 0;
    double ratio = 0.0;
    Verdict verdict = Verdict::Unvetted;
};

struct TypeSummary {
    BehaviorType behavior = BehaviorType::Accurate;
    std::size_t users = 0;
    double mean_answered = 0.0;
    double mean_valid = 0.0;
    double mean_ratio = 0.0;
    std::size_t malicious = 0;
    std::size_t non_malicious = 0;
    std::size_t unvetted = 0;

    double flag_rate() const { return users == 0 ? 0.0 : static_cast<double>(malicious) / static_cast<double>(users); }
};

/// Positive class: malicious. Unvetted users count as not flagged.
struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    // Undefined ratios (empty denominators) are reported as 0.
    double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
    double false_positive_rate() const {
        return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn);
    }
};

struct SimulationResult {
    std::uint64_t seed = 0;
    std::vector<UserOutcome> users;
    std::array<TypeSummary, 5> per_type{};
    Confusion confusion;
    std::size_t windows_executed = 0;
    std::size_t windows_gated = 0;
    std::vector<DetectionWindow> windows;  // every judged window, by (region, period)
};

inline std::string user_id_for(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "u%05zu", index);
    return buf;
}

inline SimulationResult run_scenario(const ScenarioConfig& cfg) {
    validate(cfg);

    struct SimUser {
        std::string id;
        BehaviorType behavior;
        RegionIndex region;
        Rng rng;
    };
    std::vector<SimUser> users;
    for (auto b : kAllBehaviors) {
        for (std::size_t n = 0; n < cfg.counts[behavior_index(b)]; ++n) {
            const auto i = users.size();
            users.push_back({user_id_for(i), b, cfg.regions[i % cfg.regions.size()], Rng::for_user(cfg.seed, i)});
        }
    }

    Ledger ledger;
    std::uint64_t seq = 0;
    auto apply = [&](EventBody body) { ledger.apply(Event{++seq, 0, std::move(body)}); };

    for (const auto& u : users) {
        apply(UserRegistered{UserProfile{u.id, "simulated " + std::string(to_string(u.behavior)), "", {}, "", {}}});
    }

    const std::set<RegionIndex> regions(cfg.regions.begin(), cfg.regions.end());
    std::size_t report_counter = 0;
    for (std::size_t p = 0; p < cfg.periods; ++p) {
        const auto period = static_cast<PeriodIndex>(p);
        for (auto& u : users) {
            if (ledger.is_blacklisted(u.id)) continue;
            const auto where = cfg.grid.cell_center(u.region);
            for (std::size_t s = 0; s < cfg.submissions_per_user_per_period; ++s) {
                Report r;
                r.report_id = "r" + std::to_string(++report_counter);
                r.user_id = u.id;
                r.latitude = where.latitude;
                r.longitude = where.longitude;
                r.timestamp = cfg.period.period_start(period) + static_cast<Timestamp>(s);
                for (const auto& q : cfg.schema.questions()) {
                    if (q.scored()) {
                        r.answers.emplace_back(Chosen{answer(u.behavior, q, cfg.truth.at(q.id), u.rng)});
                    } else {
                        r.answers.emplace_back(Skipped{});
                    }
                }
                apply(ReportSubmitted{std::move(r), u.region, period, false});
            }
        }
        for (auto region : regions) {
            detect_window(ledger, cfg.schema, {region, period}, cfg.detection, apply);
        }
    }

    SimulationResult result;
    result.seed = cfg.seed;
    for (const auto& [key, w] : ledger.windows()) {
        (w.executed ? result.windows_executed : result.windows_gated)++;
        result.windows.push_back(w);
    }

    for (const auto& u : users) {
        UserOutcome o{u.id, u.behavior, u.region};
        bool any_malicious = false, any_clean = false;
        for (const auto& [key, w] : ledger.windows()) {
            const auto* a = w.assessment_of(u.id);
            if (!a) continue;
            o.answered += a->answered;
            o.outliers += a->outliers;
            any_malicious |= a->verdict == Verdict::Malicious;
            any_clean |= a->verdict == Verdict::NonMalicious;
        }
        o.valid = o.answered - o.outliers;
        o.ratio = o.answered == 0 ? 0.0 : static_cast<double>(o.outliers) / static_cast<double>(o.answered);
        o.verdict = any_malicious ? Verdict::Malicious : any_clean ? Verdict::NonMalicious : Verdict::Unvetted;

        auto& t = result.per_type[behavior_index(u.behavior)];
        t.behavior = u.behavior;
        ++t.users;
        t.mean_answered += static_cast<double>(o.answered);
        t.mean_valid += static_cast<double>(o.valid);
        t.mean_ratio += o.ratio;
        if (o.verdict == Verdict::Malicious) ++t.malicious;
        else if (o.verdict == Verdict::NonMalicious) ++t.non_malicious;
        else ++t.unvetted;

        const bool positive = expected_malicious(u.behavior);
        const bool flagged = o.verdict == Verdict::Malicious;
        auto& c = result.confusion;
        (positive ? (flagged ? c.tp : c.fn) : (flagged ? c.fp : c.tn))++;
        result.users.push_back(std::move(o));
    }
    for (auto b : kAllBehaviors) {
        auto& t = result.per_type[behavior_index(b)];
        t.behavior = b;
        if (t.users > 0) {
            const auto n = static_cast<double>(t.users);
            t.mean_answered /= n;
            t.mean_valid /= n;
            t.mean_ratio /= n;
        }
    }
    return result;
}

// --- table1 preset ------------------------------------------------------------

inline ScenarioConfig table1_scenario(std::size_t cohort_size, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.counts.fill(cohort_size);
    return cfg;
}

struct Table1Row {
    std::string user;
    BehaviorType behavior = BehaviorType::Accurate;
    double mean_valid = 0.0;
    std::size_t total_questions = 0;
    Verdict verdict = Verdict::Unvetted;  // modal verdict of the cohort
    Verdict expected = Verdict::Unvetted;
};

inline Verdict modal_verdict(const TypeSummary& t) {
    // ties resolve in enum order
    Verdict best = Verdict::NonMalicious;
    std::size_t count = t.non_malicious;
    if (t.malicious > count) best = Verdict::Malicious, count = t.malicious;
    if (t.unvetted > count) best = Verdict::Unvetted;
    return best;
}

inline std::vector<Table1Row> table1_rows(const SimulationResult& result, const QuestionnaireSchema& schema) {
    std::vector<Table1Row> rows;
    for (auto b : kAllBehaviors) {
        const auto& t = result.per_type[behavior_index(b)];
        rows.push_back(Table1Row{"User" + std::to_string(behavior_index(b) + 1), b, t.mean_valid,
                                 schema.scored_count(), modal_verdict(t),
                                 expected_malicious(b) ? Verdict::Malicious : Verdict::NonMalicious});
    }
    return rows;
}

inline std::vector<Table1Row> table1_experiment(std::size_t cohort_size, std::uint64_t seed) {
    if (cohort_size < 1) throw Error(ErrorCode::InvalidScenario, "cohort_size must be >= 1");
    const auto cfg = table1_scenario(cohort_size, seed);
    return table1_rows(run_scenario(cfg), cfg.schema);
}

inline std::string_view participation_label(Verdict v) {
    switch (v) {
        case Verdict::Malicious: return "Malicious User";
        case Verdict::NonMalicious: return "non-Malicious User";
        case Verdict::Unvetted: return "Unvetted";
    }
    return "?";
}

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string table1_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream out;
    out << "User,User type,Number of valid answers,Total number of questions,participation type,"
           "expected participation type\n";
    for (const auto& r : rows) {
        out << r.user << ',' << describe(r.behavior) << ',' << fixed(r.mean_valid, 2) << ',' << r.total_questions
            << ',' << participation_label(r.verdict) << ',' << participation_label(r.expected) << '\n';
    }
    return out.str();
}

// --- result files -------------------------------------------------------------

inline std::string users_csv(const SimulationResult& r) {
    std::ostringstream out;
    out << "user_id,behavior,region,answered,valid,outliers,ratio,verdict,expected_malicious\n";
    for (const auto& u : r.users) {
        out << u.user_id << ',' << to_string(u.behavior) << ',' << u.region << ',' << u.answered << ',' << u.valid
            << ',' << u.outliers << ',' << fixed(u.ratio, 6) << ',' << to_string(u.verdict) << ','
            << (expected_malicious(u.behavior) ? "true" : "false") << '\n';
    }
    return out.str();
}

/// Ratios are written as fixed 6-digit strings so the file is identical
/// wherever it is produced.
inline json summary_json(const SimulationResult& r) {
    json types = json::array();
    for (const auto& t : r.per_type) {
        types.push_back(json{{"behavior", to_string(t.behavior)},
                             {"users", t.users},
                             {"mean_answered", fixed(t.mean_answered, 6)},
                             {"mean_valid", fixed(t.mean_valid, 6)},
                             {"mean_ratio", fixed(t.mean_ratio, 6)},
                             {"malicious", t.malicious},
                             {"non_malicious", t.non_malicious},
                             {"unvetted", t.unvetted}});
    }
    const auto& c = r.confusion;
    return json{{"seed", r.seed},
                {"users", r.users.size()},
                {"windows_executed", r.windows_executed},
                {"windows_gated", r.windows_gated},
                {"per_type", std::move(types)},
                {"confusion", json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}},
                {"precision", fixed(c.precision(), 6)},
                {"recall", fixed(c.recall(), 6)},
                {"false_positive_rate", fixed(c.false_positive_rate(), 6)}};
}

/// Scenario file (JSON). `truth` is mandatory and must cover every scored
/// question; everything else has a default. A relative `schema_path` is
/// resolved against `base_dir`.
inline ScenarioConfig scenario_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    constexpr auto E = ErrorCode::InvalidScenario;
    if (!j.is_object()) throw Error(E, "scenario must be a JSON object");
    ScenarioConfig cfg;
    cfg.seed = detail::optional_field<std::uint64_t>(j, "seed", 1, E);
    if (j.contains("schema")) {
        cfg.schema = schema_from_json(j.at("schema"));
    } else if (j.contains("schema_path")) {
        std::filesystem::path p = detail::required<std::string>(j, "schema_path", E);
        if (p.is_relative()) p = base_dir / p;
        cfg.schema = load_schema(p.string());
    }
    if (!j.contains("truth") || !j.at("truth").is_object()) throw Error(E, "'truth' object is required");
    cfg.truth.clear();
    for (const auto& [key, v] : j.at("truth").items()) {
        int qid = 0;
        try {
            qid = std::stoi(key);
        } catch (const std::exception&) {
            throw Error(E, "truth key '" + key + "' is not a question id");
        }
        if (!v.is_number_integer()) throw Error(E, "truth for question " + key + " must be an integer option");
        cfg.truth[qid] = v.get<int>();
    }
    if (j.contains("counts")) {
        for (const auto& [key, v] : j.at("counts").items()) {
            auto b = parse_behavior(key);
            if (!b) throw Error(E, "unknown behavior '" + key + "'");
            if (!v.is_number_unsigned()) throw Error(E, "count for " + key + " must be a non-negative integer");
            cfg.counts[behavior_index(*b)] = v.get<std::size_t>();
        }
    }
    cfg.regions = detail::optional_field<std::vector<RegionIndex>>(j, "regions", {0}, E);
    if (j.contains("grid")) cfg.grid = RegionGrid::parse(detail::required<std::string>(j, "grid", E));
    cfg.period.period_length_seconds = detail::optional_field<std::int64_t>(j, "period_seconds", 3600, E);
    cfg.periods = detail::optional_field<std::size_t>(j, "periods", 1, E);
    cfg.submissions_per_user_per_period =
        detail::optional_field<std::size_t>(j, "submissions_per_user_per_period", 1, E);
    cfg.detection.iterative = detail::optional_field<bool>(j, "iterative_detection", false, E);
    validate(cfg);
    return cfg;
}

// --- sweeps -------------------------------------------------------------------

struct SweepCell {
    double honest_fraction = 0.5;
    int option_count = 10;
    std::size_t cohort_size = 50;
    std::uint64_t seed = 1;
};

struct SweepRow {
    SweepCell cell;
    std::size_t honest = 0;
    std::size_t adversarial = 0;
    double precision = 0.0;
    double recall = 0.0;
    double false_positive_rate = 0.0;
};

/// 15 scored questions, all with the same option count.
inline QuestionnaireSchema uniform_schema(int option_count) {
    std::vector<QuestionSpec> qs;
    for (int id = 1; id <= 15; ++id) {
        std::vector<std::string> labels;
        for (int k = 1; k <= option_count; ++k) labels.push_back(std::to_string(k));
        qs.push_back(QuestionSpec{id, kAllCategories[static_cast<std::size_t>(id - 1) % 4], QuestionKind::Scored,
                                  "Q" + std::to_string(id), option_count, std::move(labels)});
    }
    return QuestionnaireSchema("uniform-" + std::to_string(option_count), std::move(qs));
}

/// Honest users alternate Accurate/NormalLow, adversaries cycle
/// Random/Pattern/NormalHigh.
inline ScenarioConfig sweep_scenario(const SweepCell& cell) {
    if (cell.honest_fraction < 0.0 || cell.honest_fraction > 1.0) {
        throw Error(ErrorCode::InvalidScenario, "honest_fraction must lie in [0, 1]");
    }
    ScenarioConfig cfg;
    cfg.seed = cell.seed;
    cfg.schema = uniform_schema(cell.option_count);
    cfg.truth = middle_truth(cfg.schema);
    const auto honest = static_cast<std::size_t>(std::llround(cell.honest_fraction * static_cast<double>(cell.cohort_size)));
    constexpr std::array<BehaviorType, 2> honest_types{BehaviorType::Accurate, BehaviorType::NormalLow};
    constexpr std::array<BehaviorType, 3> adversary_types{BehaviorType::Random, BehaviorType::Pattern,
                                                          BehaviorType::NormalHigh};
    for (std::size_t i = 0; i < honest; ++i) ++cfg.counts[behavior_index(honest_types[i % 2])];
    for (std::size_t i = 0; i < cell.cohort_size - honest; ++i) ++cfg.counts[behavior_index(adversary_types[i % 3])];
    return cfg;
}

inline std::vector<SweepRow> sweep(const std::vector<SweepCell>& grid) {
    std::vector<SweepRow> rows;
    for (const auto& cell : grid) {
        const auto cfg = sweep_scenario(cell);
        const auto result = run_scenario(cfg);
        SweepRow row{cell};
        for (auto b : kAllBehaviors) {
            (expected_malicious(b) ? row.adversarial : row.honest) += cfg.counts[behavior_index(b)];
        }
        row.precision = result.confusion.precision();
        row.recall = result.confusion.recall();
        row.false_positive_rate = result.confusion.false_positive_rate();
        rows.push_back(row);
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "honest_fraction,option_count,cohort_size,seed,honest,adversarial,precision,recall,false_positive_rate\n";
    for (const auto& r : rows) {
        out << fixed(r.cell.honest_fraction, 3) << ',' << r.cell.option_count << ',' << r.cell.cohort_size << ','
            << r.cell.seed << ',' << r.honest << ',' << r.adversarial << ',' << fixed(r.precision, 6) << ','
            << fixed(r.recall, 6) << ',' << fixed(r.false_positive_rate, 6) << '\n';
    }
    return out.str();
}

}  // namespace floodsense::sim
