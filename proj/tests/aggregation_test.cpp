#include <gtest/gtest.h>

#include <random>

#include "floodsense/aggregation.hpp"
#include "test_support.hpp"

using namespace floodsense;
using floodsense::testing::LedgerBuilder;
using floodsense::testing::small_schema;

namespace {

const RegionGrid kGrid(0, 1, 0, 1, 1, 3);

/// Region 0, period 0: five honest users and one deviant, then judged.
LedgerBuilder honest_and_deviant() {
    LedgerBuilder b;
    const auto schema = small_schema();
    for (int u = 0; u < 5; ++u) {
        const auto id = "h" + std::to_string(u);
        b.user(id);
        b.report("r-" + id, id, {Chosen{1}, Chosen{1}, Chosen{u == 0 ? 2 : 1}, FreeText{"note " + id}}, 0, 0,
                 {{4, MediaKind::Photo, 100, "blob:" + id}});
    }
    b.user("bad");
    b.report("r-bad", "bad", {Chosen{3}, Chosen{2}, Chosen{4}, FreeText{"lies"}}, 0, 0,
             {{4, MediaKind::Video, 100, "blob:bad"}});
    b.judge(schema, {0, 0});
    return b;
}

}  // namespace

TEST(ModalOption, TieGoesToLowestOption) {
    EXPECT_EQ(modal_option({2, 5, 5, 1}), 2);
    EXPECT_EQ(modal_option({3, 3}), 1);
    EXPECT_EQ(modal_option({0, 0, 1}), 3);
    EXPECT_FALSE(modal_option({0, 0, 0}).has_value());
    EXPECT_FALSE(modal_option({}).has_value());
}

TEST(AggregateRegion, CountsOnlyTrustedAnswers) {
    auto b = honest_and_deviant();
    ASSERT_TRUE(b.ledger.is_blacklisted("bad"));
    const auto agg = aggregate_region(0, 0, 0, b.ledger, small_schema(), kGrid);
    ASSERT_EQ(agg.questions.size(), 3u);
    EXPECT_EQ(agg.question(1)->histogram, (std::vector<std::size_t>{5, 0, 0}));
    EXPECT_EQ(agg.question(2)->histogram, (std::vector<std::size_t>{5, 0}));
    EXPECT_EQ(agg.question(3)->histogram, (std::vector<std::size_t>{4, 1, 0, 0}));
    EXPECT_EQ(agg.question(3)->mode, 1);
    EXPECT_EQ(agg.question(1)->respondents, 5u);
    EXPECT_EQ(agg.unvetted_users, 0u);
    EXPECT_EQ(agg.free_text.size(), 5u);
    EXPECT_EQ(agg.attachments.size(), 5u);
    for (const auto& f : agg.free_text) EXPECT_NE(f.text, "lies");
    for (const auto& a : agg.attachments) EXPECT_NE(a.report_id, "r-bad");
}

TEST(AggregateRegion, OnlyMaliciousUsersLeaveAnEmptySummary) {
    // every user of region 1 is flagged by a different window, then shows up here
    LedgerBuilder b;
    const auto schema = small_schema();
    for (int u = 0; u < 6; ++u) b.user("u" + std::to_string(u));
    for (int u = 0; u < 5; ++u) b.report("a" + std::to_string(u), "u" + std::to_string(u), {Chosen{1}, Chosen{1}, Chosen{1}, Skipped{}}, 0, 0);
    b.report("a5", "u5", {Chosen{3}, Chosen{2}, Chosen{4}, Skipped{}}, 0, 0);
    b.report("z5", "u5", {Chosen{3}, Chosen{2}, Chosen{4}, Skipped{}}, 1, 0);
    b.judge(schema, {0, 0});
    b.judge(schema, {1, 0});
    const auto agg = aggregate_region(1, 0, 0, b.ledger, schema, kGrid);
    for (const auto& q : agg.questions) {
        EXPECT_EQ(q.respondents, 0u);
        EXPECT_FALSE(q.mode.has_value());
        for (auto c : q.histogram) EXPECT_EQ(c, 0u);
    }
    EXPECT_EQ(agg.unvetted_users, 0u);
    EXPECT_TRUE(agg.free_text.empty());
}

TEST(AggregateRegion, UnjudgedAndUngatedUsersAreUnvetted) {
    LedgerBuilder b;
    const auto schema = small_schema();
    for (int u = 0; u < 3; ++u) {
        const auto id = "u" + std::to_string(u);
        b.user(id);
        b.report("p0-" + id, id, {Chosen{2}, Chosen{2}, Chosen{2}, Skipped{}}, 2, 0);
        b.report("p1-" + id, id, {Chosen{2}, Chosen{2}, Chosen{2}, Skipped{}}, 2, 1);
    }
    b.judge(schema, {2, 0});  // three participants: not executed
    const auto agg = aggregate_region(2, 0, 1, b.ledger, schema, kGrid);
    EXPECT_EQ(agg.unvetted_users, 3u);
    for (const auto& q : agg.questions) EXPECT_EQ(q.respondents, 0u);
}

TEST(AggregateRegion, PeriodRangeIsInclusive) {
    LedgerBuilder b;
    const auto schema = small_schema();
    for (PeriodIndex p = 0; p < 3; ++p) {
        for (int u = 0; u < 5; ++u) {
            const auto id = "u" + std::to_string(u);
            if (p == 0) b.user(id);
            b.report(id + "-" + std::to_string(p), id, {Chosen{static_cast<int>(p) + 1}, Skipped{}, Skipped{}, Skipped{}}, 0, p);
        }
        b.judge(schema, {0, p});
    }
    EXPECT_EQ(aggregate_region(0, 1, 2, b.ledger, schema, kGrid).question(1)->histogram, (std::vector<std::size_t>{0, 5, 5}));
    EXPECT_EQ(aggregate_region(0, 0, 0, b.ledger, schema, kGrid).question(1)->histogram, (std::vector<std::size_t>{5, 0, 0}));
    EXPECT_EQ(aggregate_region(0, 2, 1, b.ledger, schema, kGrid).question(1)->respondents, 0u);
}

TEST(AggregateRegion, UnknownRegion) {
    auto b = honest_and_deviant();
    try {
        aggregate_region(3, 0, 0, b.ledger, small_schema(), kGrid);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownRegion);
    }
}

TEST(AggregateRegion, HistogramsMatchIndependentTally) {
    // random windows judged through the ledger; the tally below recounts the
    // raw reports of users with a NonMalicious verdict
    const auto schema = small_schema();
    std::mt19937_64 rng(17);
    for (int t = 0; t < 50; ++t) {
        LedgerBuilder b;
        std::uniform_int_distribution<int> users(1, 12), subs(1, 3), skip(0, 5);
        const int n = users(rng);
        std::vector<Report> all;
        int rid = 0;
        for (int u = 0; u < n; ++u) {
            const auto id = "u" + std::to_string(u);
            b.user(id);
            for (int s = subs(rng); s > 0; --s) {
                std::vector<AnswerValue> answers;
                for (const auto& q : schema.questions()) {
                    if (!q.scored() || skip(rng) == 0) {
                        answers.push_back(Skipped{});
                    } else {
                        answers.push_back(Chosen{std::uniform_int_distribution<int>(1, q.option_count)(rng)});
                    }
                }
                b.report("r" + std::to_string(rid++), id, answers, 0, 0);
                all.push_back(b.ledger.report("r" + std::to_string(rid - 1))->report);
            }
        }
        const auto w = b.judge(schema, {0, 0});
        std::map<QuestionId, std::vector<std::size_t>> tally;
        std::size_t unvetted = 0;
        for (const auto& a : w.assessments) unvetted += a.verdict == Verdict::Unvetted;
        for (const auto& q : schema.questions()) {
            if (q.scored()) tally[q.id].assign(static_cast<std::size_t>(q.option_count), 0);
        }
        for (const auto& r : all) {
            if (w.assessment_of(r.user_id)->verdict != Verdict::NonMalicious) continue;
            for (std::size_t i = 0; i < r.answers.size(); ++i) {
                if (const auto* c = std::get_if<Chosen>(&r.answers[i])) ++tally[static_cast<QuestionId>(i + 1)][static_cast<std::size_t>(c->option - 1)];
            }
        }
        const auto agg = aggregate_region(0, 0, 0, b.ledger, schema, kGrid);
        EXPECT_EQ(agg.unvetted_users, unvetted);
        for (const auto& q : agg.questions) EXPECT_EQ(q.histogram, tally[q.question_id]);
    }
}

TEST(AggregateRegion, ProvenanceNamesOnlyTrustedReports) {
    auto b = honest_and_deviant();
    const auto agg = aggregate_region(0, 0, 0, b.ledger, small_schema(), kGrid, {true});
    const auto* q3 = agg.question(3);
    ASSERT_EQ(q3->provenance.size(), 4u);
    EXPECT_EQ(q3->provenance[1], (std::vector<std::string>{"r-h0"}));
    EXPECT_EQ(q3->provenance[0].size(), 4u);
    for (const auto& q : agg.questions) {
        for (std::size_t k = 0; k < q.histogram.size(); ++k) EXPECT_EQ(q.provenance[k].size(), q.histogram[k]);
    }
    EXPECT_FALSE(to_json(agg).at("questions").at(0).contains("provenance"));
    EXPECT_TRUE(to_json(agg, true).at("questions").at(0).contains("provenance"));
}

TEST(CategoryRollup, AlwaysFourCategories) {
    auto b = honest_and_deviant();
    const auto roll = category_rollup(aggregate_region(0, 0, 0, b.ledger, small_schema(), kGrid));
    ASSERT_EQ(roll.size(), 4u);
    std::size_t total = 0;
    for (const auto& r : roll) {
        total += r.questions.size();
        for (const auto& q : r.questions) EXPECT_EQ(q.category, r.category);
    }
    EXPECT_EQ(total, 3u);
    EXPECT_EQ(roll[static_cast<std::size_t>(Category::FacilityLivelihood)].questions.size(), 0u);
}

TEST(AggregateCsv, LayoutAndPadding) {
    auto b = honest_and_deviant();
    const auto csv = to_csv(aggregate_region(0, 0, 0, b.ledger, small_schema(), kGrid));
    EXPECT_EQ(csv,
              "region,question_id,category,mode,count_1,count_2,count_3,count_4,respondent_count,unvetted_users\n"
              "0,1,Victim,1,5,0,0,,5,0\n"
              "0,2,Medical,1,5,0,,,5,0\n"
              "0,3,Transfer,1,4,1,0,0,5,0\n");
}

TEST(AggregateJson, Shape) {
    auto b = honest_and_deviant();
    const auto j = to_json(aggregate_region(0, 0, 0, b.ledger, small_schema(), kGrid));
    EXPECT_EQ(j.at("region"), 0);
    EXPECT_EQ(j.at("questions").size(), 3u);
    EXPECT_EQ(j.at("categories").size(), 4u);
    EXPECT_EQ(j.at("questions").at(0).at("histogram"), json::parse("[5,0,0]"));
    EXPECT_EQ(j.at("free_text").size(), 5u);
    EXPECT_EQ(j.at("attachments").at(0).at("report_id"), "r-h0");
}
