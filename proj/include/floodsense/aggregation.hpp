#pragma once

// Trusted per-region need summaries: option histograms and modal answers
// built from the raw answers of users judged non-malicious.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "floodsense/domain.hpp"
#include "floodsense/ledger.hpp"
#include "floodsense/serialization.hpp"

namespace floodsense {

struct QuestionSummary {
    QuestionId question_id = 0;
    Category category = Category::Victim;
    std::vector<std::size_t> histogram;  // index k-1 holds the count of option k
    std::optional<int> mode;
    std::size_t respondents = 0;
    /// report ids behind each histogram bucket; filled only on request
    std::vector<std::vector<std::string>> provenance;

    friend bool operator==(const QuestionSummary&, const QuestionSummary&) = default;
};

struct FreeTextExcerpt {
    QuestionId question_id = 0;
    std::string report_id;
    std::string text;
    friend bool operator==(const FreeTextExcerpt&, const FreeTextExcerpt&) = default;
};

struct AttachmentRef {
    std::string report_id;
    Attachment attachment;
    friend bool operator==(const AttachmentRef&, const AttachmentRef&) = default;
};

struct AggregateReport {
    RegionIndex region = 0;
    PeriodIndex from_period = 0;
    PeriodIndex to_period = 0;
    std::vector<QuestionSummary> questions;  // scored questions, schema order
    std::size_t unvetted_users = 0;
    std::vector<FreeTextExcerpt> free_text;
    std::vector<AttachmentRef> attachments;

    const QuestionSummary* question(QuestionId id) const {
        for (const auto& q : questions) {
            if (q.question_id == id) return &q;
        }
        return nullptr;
    }

    friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

struct AggregateOptions {
    bool with_provenance = false;
};

/// Lowest option index wins ties; empty histogram has no mode.
inline std::optional<int> modal_option(const std::vector<std::size_t>& histogram) {
    std::optional<int> mode;
    std::size_t best = 0;
    for (std::size_t i = 0; i < histogram.size(); ++i) {
        if (histogram[i] > best) {
            best = histogram[i];
            mode = static_cast<int>(i + 1);
        }
    }
    return mode;
}

/// Summarises the region over periods [from, to]. Only answers whose window
/// verdict is NonMalicious and whose author is not blacklisted are counted;
/// users whose window was not (or could not be) judged are only counted in
/// `unvetted_users`.
inline AggregateReport aggregate_region(RegionIndex region, PeriodIndex from, PeriodIndex to, const Ledger& ledger,
                                        const QuestionnaireSchema& schema, const RegionGrid& grid,
                                        const AggregateOptions& opts = {}) {
    if (region >= grid.region_count()) throw Error(ErrorCode::UnknownRegion, std::to_string(region));

    AggregateReport out;
    out.region = region;
    out.from_period = from;
    out.to_period = to;
    std::map<QuestionId, std::size_t> slot;
    for (const auto& q : schema.questions()) {
        if (!q.scored()) continue;
        slot[q.id] = out.questions.size();
        QuestionSummary s;
        s.question_id = q.id;
        s.category = q.category;
        s.histogram.assign(static_cast<std::size_t>(q.option_count), 0);
        if (opts.with_provenance) s.provenance.assign(static_cast<std::size_t>(q.option_count), {});
        out.questions.push_back(std::move(s));
    }

    std::vector<const StoredReport*> trusted;
    std::set<std::string> unvetted;
    for (const auto& [id, sr] : ledger.reports()) {
        if (sr.region != region || sr.period < from || sr.period > to) continue;
        const auto& uid = sr.report.user_id;
        if (ledger.is_blacklisted(uid)) continue;
        const auto* window = ledger.window({sr.region, sr.period});
        const auto* a = window ? window->assessment_of(uid) : nullptr;
        if (a == nullptr || a->verdict == Verdict::Unvetted) {
            unvetted.insert(uid);
        } else if (a->verdict == Verdict::NonMalicious) {
            trusted.push_back(&sr);
        }
    }
    std::sort(trusted.begin(), trusted.end(), [](const auto* a, const auto* b) {
        return std::tie(a->period, a->seq) < std::tie(b->period, b->seq);
    });

    for (const auto* sr : trusted) {
        const auto& r = sr->report;
        for (const auto& q : schema.questions()) {
            const auto& answer = r.answers.at(static_cast<std::size_t>(q.id - 1));
            if (const auto* c = std::get_if<Chosen>(&answer)) {
                auto& s = out.questions[slot.at(q.id)];
                const auto k = static_cast<std::size_t>(c->option - 1);
                ++s.histogram.at(k);
                ++s.respondents;
                if (opts.with_provenance) s.provenance[k].push_back(r.report_id);
            } else if (const auto* t = std::get_if<FreeText>(&answer)) {
                out.free_text.push_back({q.id, r.report_id, t->text});
            }
        }
        for (const auto& att : r.attachments) out.attachments.push_back({r.report_id, att});
    }
    for (auto& s : out.questions) s.mode = modal_option(s.histogram);
    out.unvetted_users = unvetted.size();
    return out;
}

struct CategoryRollup {
    Category category = Category::Victim;
    std::vector<QuestionSummary> questions;
};

/// Always four entries, in category order; questions keep schema order.
inline std::vector<CategoryRollup> category_rollup(const AggregateReport& report) {
    std::vector<CategoryRollup> out;
    for (auto c : kAllCategories) {
        CategoryRollup roll{c, {}};
        for (const auto& q : report.questions) {
            if (q.category == c) roll.questions.push_back(q);
        }
        out.push_back(std::move(roll));
    }
    return out;
}

inline json to_json(const QuestionSummary& q, bool with_provenance = false) {
    json j{{"question_id", q.question_id},
           {"category", to_string(q.category)},
           {"histogram", q.histogram},
           {"mode", q.mode ? json(*q.mode) : json(nullptr)},
           {"respondents", q.respondents}};
    if (with_provenance) j["provenance"] = q.provenance;
    return j;
}

inline json to_json(const AggregateReport& r, bool with_provenance = false) {
    json categories = json::array();
    for (const auto& roll : category_rollup(r)) {
        json ids = json::array();
        for (const auto& q : roll.questions) ids.push_back(q.question_id);
        categories.push_back(json{{"category", to_string(roll.category)}, {"question_ids", std::move(ids)}});
    }
    json questions = json::array();
    for (const auto& q : r.questions) questions.push_back(to_json(q, with_provenance));
    json free_text = json::array();
    for (const auto& f : r.free_text) {
        free_text.push_back(json{{"question_id", f.question_id}, {"report_id", f.report_id}, {"text", f.text}});
    }
    json attachments = json::array();
    for (const auto& a : r.attachments) {
        auto j = to_json(a.attachment);
        j["report_id"] = a.report_id;
        attachments.push_back(std::move(j));
    }
    return json{{"region", r.region},
                {"from_period", r.from_period},
                {"to_period", r.to_period},
                {"unvetted_users", r.unvetted_users},
                {"questions", std::move(questions)},
                {"categories", std::move(categories)},
                {"free_text", std::move(free_text)},
                {"attachments", std::move(attachments)}};
}

/// One row per question:
/// region,question_id,category,mode,count_1..count_K,respondent_count,unvetted_users
/// where K is the widest option count in the report; narrower questions leave
/// the surplus count cells empty.
inline std::string to_csv(const AggregateReport& r) {
    std::size_t width = 0;
    for (const auto& q : r.questions) width = std::max(width, q.histogram.size());
    std::ostringstream out;
    out << "region,question_id,category,mode";
    for (std::size_t k = 1; k <= width; ++k) out << ",count_" << k;
    out << ",respondent_count,unvetted_users\n";
    for (const auto& q : r.questions) {
        out << r.region << ',' << q.question_id << ',' << to_string(q.category) << ',';
        if (q.mode) out << *q.mode;
        for (std::size_t k = 0; k < width; ++k) {
            out << ',';
            if (k < q.histogram.size()) out << q.histogram[k];
        }
        out << ',' << q.respondents << ',' << r.unvetted_users << '\n';
    }
    return out.str();
}

}  // namespace floodsense
