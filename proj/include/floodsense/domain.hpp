#pragma once

// Questionnaire instrument, answers, reports, users and the space/time
// partition (region grid, detection periods) shared by every other module.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "floodsense/errors.hpp"

namespace floodsense {

enum class Category { Victim, FacilityLivelihood, Medical, Transfer };

inline constexpr std::array<Category, 4> kAllCategories = {
    Category::Victim, Category::FacilityLivelihood, Category::Medical, Category::Transfer};

enum class QuestionKind { Scored, Descriptive };

enum class MediaKind { Audio, Photo, Video };

enum class UserStatus { Active, Blacklisted };

inline std::string_view to_string(Category c) {
    switch (c) {
        case Category::Victim: return "Victim";
        case Category::FacilityLivelihood: return "FacilityLivelihood";
        case Category::Medical: return "Medical";
        case Category::Transfer: return "Transfer";
    }
    return "?";
}

inline std::string_view to_string(QuestionKind k) {
    return k == QuestionKind::Scored ? "Scored" : "Descriptive";
}

inline std::string_view to_string(MediaKind m) {
    switch (m) {
        case MediaKind::Audio: return "audio";
        case MediaKind::Photo: return "photo";
        case MediaKind::Video: return "video";
    }
    return "?";
}

inline std::string_view to_string(UserStatus s) {
    return s == UserStatus::Active ? "Active" : "Blacklisted";
}

inline std::optional<Category> parse_category(std::string_view s) {
    for (auto c : kAllCategories) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

inline std::optional<QuestionKind> parse_question_kind(std::string_view s) {
    if (s == "Scored") return QuestionKind::Scored;
    if (s == "Descriptive") return QuestionKind::Descriptive;
    return std::nullopt;
}

inline std::optional<MediaKind> parse_media_kind(std::string_view s) {
    if (s == "audio") return MediaKind::Audio;
    if (s == "photo") return MediaKind::Photo;
    if (s == "video") return MediaKind::Video;
    return std::nullopt;
}

inline std::optional<UserStatus> parse_user_status(std::string_view s) {
    if (s == "Active") return UserStatus::Active;
    if (s == "Blacklisted") return UserStatus::Blacklisted;
    return std::nullopt;
}

using QuestionId = int;
using RegionIndex = std::size_t;
using PeriodIndex = std::int64_t;
using Timestamp = std::int64_t;

struct QuestionSpec {
    QuestionId id = 0;
    Category category = Category::Victim;
    QuestionKind kind = QuestionKind::Scored;
    std::string text;
    int option_count = 0;
    std::vector<std::string> option_labels;

    bool scored() const noexcept { return kind == QuestionKind::Scored; }

    friend bool operator==(const QuestionSpec&, const QuestionSpec&) = default;
};

class QuestionnaireSchema {
public:
    QuestionnaireSchema() = default;

    /// Throws InvalidSchema unless ids are 1..Q contiguous and every question
    /// is internally consistent (scored: >= 2 labelled options; descriptive: none).
    QuestionnaireSchema(std::string version, std::vector<QuestionSpec> questions)
        : version_(std::move(version)), questions_(std::move(questions)) {
        validate();
    }

    const std::string& version() const noexcept { return version_; }
    const std::vector<QuestionSpec>& questions() const noexcept { return questions_; }
    std::size_t size() const noexcept { return questions_.size(); }

    const QuestionSpec& question(QuestionId id) const {
        if (id < 1 || static_cast<std::size_t>(id) > questions_.size()) {
            throw Error(ErrorCode::InvalidSchema, "no question with id " + std::to_string(id));
        }
        return questions_[static_cast<std::size_t>(id - 1)];
    }

    bool has_question(QuestionId id) const noexcept {
        return id >= 1 && static_cast<std::size_t>(id) <= questions_.size();
    }

    std::size_t scored_count() const noexcept {
        return static_cast<std::size_t>(std::count_if(questions_.begin(), questions_.end(),
                                                      [](const QuestionSpec& q) { return q.scored(); }));
    }

    int max_option_count() const noexcept {
        int m = 0;
        for (const auto& q : questions_) m = std::max(m, q.option_count);
        return m;
    }

    friend bool operator==(const QuestionnaireSchema&, const QuestionnaireSchema&) = default;

private:
    void validate() const {
        if (questions_.empty()) throw Error(ErrorCode::InvalidSchema, "schema has no questions");
        for (std::size_t i = 0; i < questions_.size(); ++i) {
            const auto& q = questions_[i];
            const std::string where = "question " + std::to_string(q.id);
            if (q.id != static_cast<QuestionId>(i + 1)) {
                throw Error(ErrorCode::InvalidSchema,
                            "question ids must be 1..Q in order; position " + std::to_string(i + 1) +
                                " has id " + std::to_string(q.id));
            }
            if (q.scored()) {
                if (q.option_count < 2) throw Error(ErrorCode::InvalidSchema, where + ": scored needs >= 2 options");
            } else if (q.option_count != 0) {
                throw Error(ErrorCode::InvalidSchema, where + ": descriptive question cannot have options");
            }
            if (q.option_labels.size() != static_cast<std::size_t>(q.option_count)) {
                throw Error(ErrorCode::InvalidSchema, where + ": label count differs from option_count");
            }
        }
    }

    std::string version_;
    std::vector<QuestionSpec> questions_;
};

struct Chosen {
    int option = 0;
    friend bool operator==(const Chosen&, const Chosen&) = default;
};

struct Skipped {
    friend bool operator==(const Skipped&, const Skipped&) = default;
};

struct FreeText {
    std::string text;
    friend bool operator==(const FreeText&, const FreeText&) = default;
};

using AnswerValue = std::variant<Chosen, Skipped, FreeText>;

struct Attachment {
    QuestionId question_id = 0;
    MediaKind media_kind = MediaKind::Photo;
    std::uint64_t byte_length = 0;
    std::string blob_ref;

    friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct Report {
    std::string report_id;
    std::string user_id;
    double latitude = 0.0;
    double longitude = 0.0;
    Timestamp timestamp = 0;
    std::vector<AnswerValue> answers;
    std::vector<Attachment> attachments;

    friend bool operator==(const Report&, const Report&) = default;
};

struct UserProfile {
    std::string user_id;
    std::string identity;
    std::string education_level;
    std::vector<std::string> relief_courses;
    std::string prior_participation;
    UserStatus status = UserStatus::Active;

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct GeoPoint {
    double latitude = 0.0;
    double longitude = 0.0;
};

/// Uniform rows x cols partition of a bounding box, cells indexed row-major
/// with rows along latitude and columns along longitude.
class RegionGrid {
public:
    RegionGrid() = default;

    RegionGrid(double lat_min, double lat_max, double lon_min, double lon_max, std::size_t rows, std::size_t cols)
        : lat_min_(lat_min), lat_max_(lat_max), lon_min_(lon_min), lon_max_(lon_max), rows_(rows), cols_(cols) {
        if (!(lat_min < lat_max)) throw Error(ErrorCode::InvalidGrid, "lat_min must be < lat_max");
        if (!(lon_min < lon_max)) throw Error(ErrorCode::InvalidGrid, "lon_min must be < lon_max");
        if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidGrid, "rows and cols must be >= 1");
    }

    double lat_min() const noexcept { return lat_min_; }
    double lat_max() const noexcept { return lat_max_; }
    double lon_min() const noexcept { return lon_min_; }
    double lon_max() const noexcept { return lon_max_; }
    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t region_count() const noexcept { return rows_ * cols_; }

    bool contains(double lat, double lon) const noexcept {
        return lat >= lat_min_ && lat <= lat_max_ && lon >= lon_min_ && lon <= lon_max_;
    }

    GeoPoint cell_center(RegionIndex region) const {
        if (region >= region_count()) throw Error(ErrorCode::UnknownRegion, std::to_string(region));
        const auto row = region / cols_;
        const auto col = region % cols_;
        return {lat_boundary(row) + (lat_boundary(row + 1) - lat_boundary(row)) / 2.0,
                lon_boundary(col) + (lon_boundary(col + 1) - lon_boundary(col)) / 2.0};
    }

    /// "latmin,latmax,lonmin,lonmax,rows,cols"
    std::string to_spec() const;
    static RegionGrid parse(std::string_view spec);

    friend bool operator==(const RegionGrid&, const RegionGrid&) = default;

private:
    friend RegionIndex region_of(double lat, double lon, const RegionGrid& grid);

    double lat_boundary(std::size_t k) const noexcept {
        return k >= rows_ ? lat_max_ : lat_min_ + (lat_max_ - lat_min_) * static_cast<double>(k) / rows_;
    }
    double lon_boundary(std::size_t k) const noexcept {
        return k >= cols_ ? lon_max_ : lon_min_ + (lon_max_ - lon_min_) * static_cast<double>(k) / cols_;
    }

    static std::size_t locate(double v, double lo, double hi, std::size_t n, auto boundary) {
        auto cell = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(n)));
        cell = std::min(cell, n - 1);
        // floor() can land one cell off next to a boundary; the boundary
        // function is the single source of truth for cell edges.
        while (cell + 1 < n && v >= boundary(cell + 1)) ++cell;
        while (cell > 0 && v < boundary(cell)) --cell;
        return cell;
    }

    double lat_min_ = 0.0, lat_max_ = 1.0, lon_min_ = 0.0, lon_max_ = 1.0;
    std::size_t rows_ = 1, cols_ = 1;
};

struct PeriodConfig {
    std::int64_t period_length_seconds = 3600;
    Timestamp epoch_origin = 0;

    Timestamp period_start(PeriodIndex p) const noexcept { return epoch_origin + p * period_length_seconds; }
    Timestamp period_end(PeriodIndex p) const noexcept { return period_start(p + 1); }

    friend bool operator==(const PeriodConfig&, const PeriodConfig&) = default;
};

/// Chosen(k) -> k; skips and descriptive answers never enter the numeric pipeline.
inline std::optional<double> encode_answer(const QuestionSpec& question, const AnswerValue& answer) {
    if (std::holds_alternative<Skipped>(answer)) return std::nullopt;
    if (const auto* chosen = std::get_if<Chosen>(&answer)) {
        if (!question.scored()) {
            throw Error(ErrorCode::TypeMismatch, "Chosen answer on descriptive question " + std::to_string(question.id));
        }
        if (chosen->option < 1 || chosen->option > question.option_count) {
            throw Error(ErrorCode::TypeMismatch, "option " + std::to_string(chosen->option) +
                                                     " out of range for question " + std::to_string(question.id));
        }
        return static_cast<double>(chosen->option);
    }
    if (question.scored()) {
        throw Error(ErrorCode::TypeMismatch, "free text on scored question " + std::to_string(question.id));
    }
    return std::nullopt;
}

inline RegionIndex region_of(double lat, double lon, const RegionGrid& grid) {
    if (!grid.contains(lat, lon)) {
        throw Error(ErrorCode::OutsideDisasterArea,
                    "(" + std::to_string(lat) + ", " + std::to_string(lon) + ") is outside the grid");
    }
    const auto row = RegionGrid::locate(lat, grid.lat_min_, grid.lat_max_, grid.rows_,
                                        [&](std::size_t k) { return grid.lat_boundary(k); });
    const auto col = RegionGrid::locate(lon, grid.lon_min_, grid.lon_max_, grid.cols_,
                                        [&](std::size_t k) { return grid.lon_boundary(k); });
    return row * grid.cols_ + col;
}

inline PeriodIndex period_of(Timestamp timestamp, const PeriodConfig& cfg) {
    if (cfg.period_length_seconds <= 0) throw Error(ErrorCode::InvalidConfig, "period length must be > 0");
    if (timestamp < cfg.epoch_origin) {
        throw Error(ErrorCode::BeforeEpoch, "timestamp " + std::to_string(timestamp) + " precedes epoch origin");
    }
    return (timestamp - cfg.epoch_origin) / cfg.period_length_seconds;
}

inline std::string RegionGrid::to_spec() const {
    auto num = [](double v) {
        std::string s = std::to_string(v);
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    return num(lat_min_) + "," + num(lat_max_) + "," + num(lon_min_) + "," + num(lon_max_) + "," +
           std::to_string(rows_) + "," + std::to_string(cols_);
}

inline RegionGrid RegionGrid::parse(std::string_view spec) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : spec) {
        if (ch == ',') {
            parts.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur += ch;
        }
    }
    parts.push_back(cur);
    if (parts.size() != 6) {
        throw Error(ErrorCode::InvalidGrid, "expected latmin,latmax,lonmin,lonmax,rows,cols");
    }
    try {
        std::array<double, 4> box{};
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t used = 0;
            box[i] = std::stod(parts[i], &used);
            if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
        }
        std::array<long long, 2> dims{};
        for (std::size_t i = 0; i < 2; ++i) {
            std::size_t used = 0;
            dims[i] = std::stoll(parts[4 + i], &used);
            if (used != parts[4 + i].size() || dims[i] < 1) throw std::invalid_argument(parts[4 + i]);
        }
        return RegionGrid(box[0], box[1], box[2], box[3], static_cast<std::size_t>(dims[0]),
                          static_cast<std::size_t>(dims[1]));
    } catch (const std::logic_error& e) {
        throw Error(ErrorCode::InvalidGrid, "bad grid spec '" + std::string(spec) + "'");
    }
}

enum class ViolationKind {
    LengthMismatch,
    OptionOutOfRange,
    AnswerTypeMismatch,
    UnknownAttachmentQuestion,
    MissingField,
    InvalidCoordinate,
};

inline std::string_view to_string(ViolationKind v) {
    switch (v) {
        case ViolationKind::LengthMismatch: return "LengthMismatch";
        case ViolationKind::OptionOutOfRange: return "OptionOutOfRange";
        case ViolationKind::AnswerTypeMismatch: return "AnswerTypeMismatch";
        case ViolationKind::UnknownAttachmentQuestion: return "UnknownAttachmentQuestion";
        case ViolationKind::MissingField: return "MissingField";
        case ViolationKind::InvalidCoordinate: return "InvalidCoordinate";
    }
    return "?";
}

struct Violation {
    ViolationKind kind;
    std::string detail;
};

/// Collects every violation of the report invariants; an empty result means
/// the report is acceptable.
inline std::vector<Violation> validate_report(const Report& report, const QuestionnaireSchema& schema) {
    std::vector<Violation> out;
    if (report.report_id.empty()) out.push_back({ViolationKind::MissingField, "report_id is empty"});
    if (report.user_id.empty()) out.push_back({ViolationKind::MissingField, "user_id is empty"});
    if (!std::isfinite(report.latitude) || !std::isfinite(report.longitude)) {
        out.push_back({ViolationKind::InvalidCoordinate, "coordinates must be finite"});
    }
    if (report.answers.size() != schema.size()) {
        out.push_back({ViolationKind::LengthMismatch, "expected " + std::to_string(schema.size()) + " answers, got " +
                                                          std::to_string(report.answers.size())});
    }
    const auto n = std::min(report.answers.size(), schema.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& q = schema.questions()[i];
        const auto& a = report.answers[i];
        const std::string where = "question " + std::to_string(q.id);
        if (const auto* c = std::get_if<Chosen>(&a)) {
            if (!q.scored()) {
                out.push_back({ViolationKind::AnswerTypeMismatch, where + ": option chosen on descriptive question"});
            } else if (c->option < 1 || c->option > q.option_count) {
                out.push_back({ViolationKind::OptionOutOfRange, where + ": option " + std::to_string(c->option) +
                                                                    " not in 1.." + std::to_string(q.option_count)});
            }
        } else if (std::holds_alternative<FreeText>(a) && q.scored()) {
            out.push_back({ViolationKind::AnswerTypeMismatch, where + ": free text on scored question"});
        }
    }
    for (const auto& att : report.attachments) {
        if (!schema.has_question(att.question_id)) {
            out.push_back({ViolationKind::UnknownAttachmentQuestion,
                           "attachment references question " + std::to_string(att.question_id)});
        }
    }
    return out;
}

/// The shipped 17-question instrument: 15 scored questions over the four
/// need categories plus two free-text questions.
inline QuestionnaireSchema default_schema() {
    auto count_scale = [] {
        return std::vector<std::string>{"0", "1", "2", "3", "4", "5", "6-10", "11-20", "21-50", "more than 50"};
    };
    auto scored = [](QuestionId id, Category c, std::string text, std::vector<std::string> labels) {
        const int n = static_cast<int>(labels.size());
        return QuestionSpec{id, c, QuestionKind::Scored, std::move(text), n, std::move(labels)};
    };
    auto descriptive = [](QuestionId id, Category c, std::string text) {
        return QuestionSpec{id, c, QuestionKind::Descriptive, std::move(text), 0, {}};
    };
    using C = Category;
    std::vector<QuestionSpec> qs;
    qs.push_back(scored(1, C::Victim, "How many people around you lost their lives in the flood?", count_scale()));
    qs.push_back(scored(2, C::Victim, "How many people around you are injured?", count_scale()));
    qs.push_back(scored(3, C::Victim, "How many people around you are missing?", count_scale()));
    qs.push_back(scored(4, C::Victim, "How many people remain in your building or block?", count_scale()));
    qs.push_back(scored(5, C::FacilityLivelihood, "How long will your food supply last?",
                        {"none left", "less than a day", "1-2 days", "3-6 days", "a week or more"}));
    qs.push_back(scored(6, C::FacilityLivelihood, "Do you have safe drinking water?", {"yes", "limited", "no"}));
    qs.push_back(scored(7, C::FacilityLivelihood, "Which shelter item is most urgently needed?",
                        {"nothing", "blankets or warm clothing", "tent", "tent, blankets and clothing"}));
    qs.push_back(scored(8, C::FacilityLivelihood, "Do infants around you lack baby formula or diapers?", {"no", "yes"}));
    qs.push_back(scored(9, C::Medical, "How many people around you need a doctor?", count_scale()));
    qs.push_back(scored(10, C::Medical, "Does anyone lack access to their regular medication?", {"no", "yes"}));
    qs.push_back(scored(11, C::Medical, "How severe are the injuries around you?",
                        {"none", "minor", "moderate", "serious", "critical"}));
    qs.push_back(scored(12, C::Transfer, "Is your house still habitable?",
                        {"habitable", "damaged but habitable", "uninhabitable"}));
    qs.push_back(scored(13, C::Transfer, "How many elderly or disabled people need assisted transfer?", count_scale()));
    qs.push_back(scored(14, C::Transfer, "Are there animals that must be moved with you?",
                        {"none", "pets", "small livestock", "large livestock"}));
    qs.push_back(scored(15, C::Transfer, "What is the state of the roads near you?",
                        {"dry", "partially flooded", "flooded, passable by boat", "impassable"}));
    qs.push_back(descriptive(16, C::FacilityLivelihood, "Describe any other urgent needs."));
    qs.push_back(descriptive(17, C::Transfer, "Describe access routes and hazards on the way to you."));
    return QuestionnaireSchema("flood-needs-1", std::move(qs));
}

}  // namespace floodsense
