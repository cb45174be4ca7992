#pragma once

// JSON mapping for the core domain types. Field names here are the wire
// format used by the schema file, the HTTP API and the event log.

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "floodsense/domain.hpp"
#include "floodsense/errors.hpp"

namespace floodsense {

using json = nlohmann::json;

namespace detail {

template <typename T>
T required(const json& j, const char* key, ErrorCode code) {
    if (!j.is_object() || !j.contains(key)) throw Error(code, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(code, std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T optional_field(const json& j, const char* key, T fallback, ErrorCode code) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(code, std::string("field '") + key + "' has the wrong type");
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

// --- questionnaire schema ---------------------------------------------------

inline json to_json(const QuestionSpec& q) {
    return json{{"id", q.id},
                {"category", to_string(q.category)},
                {"kind", to_string(q.kind)},
                {"text", q.text},
                {"option_count", q.option_count},
                {"option_labels", q.option_labels}};
}

inline json to_json(const QuestionnaireSchema& s) {
    json qs = json::array();
    for (const auto& q : s.questions()) qs.push_back(to_json(q));
    return json{{"version", s.version()}, {"questions", std::move(qs)}};
}

inline QuestionSpec question_from_json(const json& j) {
    constexpr auto E = ErrorCode::InvalidSchema;
    QuestionSpec q;
    q.id = detail::required<int>(j, "id", E);
    const auto cat = detail::required<std::string>(j, "category", E);
    const auto kind = detail::required<std::string>(j, "kind", E);
    auto c = parse_category(cat);
    auto k = parse_question_kind(kind);
    if (!c) throw Error(E, "unknown category '" + cat + "'");
    if (!k) throw Error(E, "unknown kind '" + kind + "'");
    q.category = *c;
    q.kind = *k;
    q.text = detail::required<std::string>(j, "text", E);
    q.option_count = detail::required<int>(j, "option_count", E);
    q.option_labels = detail::required<std::vector<std::string>>(j, "option_labels", E);
    return q;
}

inline QuestionnaireSchema schema_from_json(const json& j) {
    constexpr auto E = ErrorCode::InvalidSchema;
    auto version = detail::required<std::string>(j, "version", E);
    if (!j.contains("questions") || !j.at("questions").is_array()) throw Error(E, "'questions' must be an array");
    std::vector<QuestionSpec> qs;
    for (const auto& item : j.at("questions")) qs.push_back(question_from_json(item));
    return QuestionnaireSchema(std::move(version), std::move(qs));
}

inline QuestionnaireSchema load_schema(const std::string& path) {
    json j;
    try {
        j = json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidSchema, path + ": " + e.what());
    }
    return schema_from_json(j);
}

// --- answers and reports ----------------------------------------------------

/// Chosen(k) <-> k, Skipped <-> null, FreeText <-> string.
inline json to_json(const AnswerValue& a) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Chosen>) {
                return v.option;
            } else if constexpr (std::is_same_v<T, Skipped>) {
                return nullptr;
            } else {
                return v.text;
            }
        },
        a);
}

inline AnswerValue answer_from_json(const json& j) {
    if (j.is_null()) return Skipped{};
    if (j.is_number_integer()) return Chosen{j.get<int>()};
    if (j.is_string()) return FreeText{j.get<std::string>()};
    throw Error(ErrorCode::InvalidReport, "answer must be an integer option, null or a string");
}

inline json to_json(const Attachment& a) {
    return json{{"question_id", a.question_id},
                {"media_kind", to_string(a.media_kind)},
                {"byte_length", a.byte_length},
                {"blob_ref", a.blob_ref}};
}

inline Attachment attachment_from_json(const json& j) {
    constexpr auto E = ErrorCode::InvalidReport;
    Attachment a;
    a.question_id = detail::required<int>(j, "question_id", E);
    const auto kind = detail::required<std::string>(j, "media_kind", E);
    auto mk = parse_media_kind(kind);
    if (!mk) throw Error(E, "unknown media_kind '" + kind + "'");
    a.media_kind = *mk;
    a.byte_length = detail::optional_field<std::uint64_t>(j, "byte_length", 0, E);
    a.blob_ref = detail::optional_field<std::string>(j, "blob_ref", "", E);
    return a;
}

inline json to_json(const Report& r) {
    json answers = json::array();
    for (const auto& a : r.answers) answers.push_back(to_json(a));
    json atts = json::array();
    for (const auto& a : r.attachments) atts.push_back(to_json(a));
    return json{{"report_id", r.report_id},   {"user_id", r.user_id},       {"latitude", r.latitude},
                {"longitude", r.longitude},   {"timestamp", r.timestamp},   {"answers", std::move(answers)},
                {"attachments", std::move(atts)}};
}

inline Report report_from_json(const json& j) {
    constexpr auto E = ErrorCode::InvalidReport;
    if (!j.is_object()) throw Error(E, "report must be a JSON object");
    Report r;
    r.report_id = detail::required<std::string>(j, "report_id", E);
    r.user_id = detail::required<std::string>(j, "user_id", E);
    r.latitude = detail::required<double>(j, "latitude", E);
    r.longitude = detail::required<double>(j, "longitude", E);
    r.timestamp = detail::required<std::int64_t>(j, "timestamp", E);
    if (!j.contains("answers") || !j.at("answers").is_array()) throw Error(E, "'answers' must be an array");
    for (const auto& a : j.at("answers")) r.answers.push_back(answer_from_json(a));
    if (j.contains("attachments")) {
        if (!j.at("attachments").is_array()) throw Error(E, "'attachments' must be an array");
        for (const auto& a : j.at("attachments")) r.attachments.push_back(attachment_from_json(a));
    }
    return r;
}

// --- users ------------------------------------------------------------------

inline json to_json(const UserProfile& u) {
    return json{{"user_id", u.user_id},
                {"identity", u.identity},
                {"education_level", u.education_level},
                {"relief_courses", u.relief_courses},
                {"prior_participation", u.prior_participation},
                {"status", to_string(u.status)}};
}

inline UserProfile profile_from_json(const json& j) {
    constexpr auto E = ErrorCode::InvalidReport;
    if (!j.is_object()) throw Error(E, "profile must be a JSON object");
    UserProfile u;
    u.user_id = detail::optional_field<std::string>(j, "user_id", "", E);
    u.identity = detail::required<std::string>(j, "identity", E);
    if (u.identity.empty()) throw Error(E, "identity must not be empty");
    u.education_level = detail::optional_field<std::string>(j, "education_level", "", E);
    u.relief_courses = detail::optional_field<std::vector<std::string>>(j, "relief_courses", {}, E);
    u.prior_participation = detail::optional_field<std::string>(j, "prior_participation", "", E);
    const auto status = detail::optional_field<std::string>(j, "status", "Active", E);
    auto s = parse_user_status(status);
    if (!s) throw Error(E, "unknown status '" + status + "'");
    u.status = *s;
    return u;
}

}  // namespace floodsense
