#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "vr4/error.hpp"
#include "vr4/metrics.hpp"
#include "vr4/text.hpp"

using namespace vr4;
namespace tk = vr4::testkit;
using tk::Rng;

namespace {

std::vector<std::string> golds(std::initializer_list<const char*> items)
{
    return {items.begin(), items.end()};
}

} // namespace

TEST(Text, NormalizeTokensDropsPunctuationAndCase)
{
    EXPECT_EQ(text::normalize_tokens("Hello, World!"), (text::TokenSet{"hello", "world"}));
    EXPECT_TRUE(text::normalize_tokens("").empty());
    EXPECT_EQ(text::normalize_tokens("A a A."), (text::TokenSet{"a"}));
    EXPECT_TRUE(text::normalize_tokens(" ,;  ").empty());
}

TEST(Text, NormalizeAnswerCollapsesWhitespace)
{
    EXPECT_EQ(text::normalize_answer("  Red \t\n  Car "), "red car");
    EXPECT_EQ(text::normalize_answer(""), "");
}

TEST(Text, NormalizedLevenshteinExamples)
{
    EXPECT_EQ(text::normalized_levenshtein("abc", "abc"), 0.0);
    EXPECT_DOUBLE_EQ(text::normalized_levenshtein("hello", "help"), 0.4);
    EXPECT_EQ(text::normalized_levenshtein("", "x"), 1.0);
    EXPECT_EQ(text::normalized_levenshtein("", ""), 0.0);
    // Code points, not bytes.
    EXPECT_DOUBLE_EQ(text::normalized_levenshtein("caf\xc3\xa9", "cafe"), 0.25);
}

TEST(Text, EditDistanceMatchesOracleAndIsAMetric)
{
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const auto a = tk::random_text(rng, 12);
        const auto b = tk::random_text(rng, 12);
        const auto c = tk::random_text(rng, 12);
        const auto dab = text::edit_distance(text::decode_utf8(a), text::decode_utf8(b));
        const auto dba = text::edit_distance(text::decode_utf8(b), text::decode_utf8(a));
        const auto dbc = text::edit_distance(text::decode_utf8(b), text::decode_utf8(c));
        const auto dac = text::edit_distance(text::decode_utf8(a), text::decode_utf8(c));
        ASSERT_EQ(dab, tk::dp_edit_distance(a, b)) << a << " | " << b;
        ASSERT_EQ(dab, dba);
        ASSERT_LE(dac, dab + dbc);
        ASSERT_EQ(dab == 0, a == b);
        ASSERT_EQ(text::normalized_levenshtein(a, b), tk::oracle_normalized_levenshtein(a, b));
    }
}

TEST(Text, InvalidUtf8DecodesWithoutThrowing)
{
    EXPECT_NO_THROW(text::decode_utf8("\xff\xfe ok \xc3"));
    EXPECT_FALSE(text::decode_utf8("\xff").empty());
}

TEST(Anls, Examples)
{
    EXPECT_EQ(metrics::anls_score("hello", golds({"hello"})), 1.0);
    EXPECT_DOUBLE_EQ(metrics::anls_score("help", golds({"hello"})), 0.6);
    // NL exactly at the threshold scores zero.
    EXPECT_EQ(metrics::anls_score("ab", golds({"cd", "a"})), 0.0);
    EXPECT_EQ(metrics::anls_score("ab", golds({"ax"})), 0.0);
    EXPECT_EQ(metrics::anls_score("abcd", golds({"abxy"})), 0.0);
    EXPECT_EQ(metrics::anls_score("  HELLO ", golds({"hello"})), 1.0);
    EXPECT_THROW(metrics::anls_score("x", {}), InputError);
}

TEST(Anls, AgreesWithOracleOnRandomPairs)
{
    Rng rng(12);
    for (int i = 0; i < 1000; ++i) {
        const auto p = tk::random_text(rng, 10);
        std::vector<std::string> g{tk::random_text(rng, 10)};
        if (rng.chance(0.3)) g.push_back(tk::mutate_once(rng, p));
        double expected = 0.0;
        for (const auto& a : g) {
            const double nl =
                tk::oracle_normalized_levenshtein(tk::oracle_normalize_answer(p),
                                                       tk::oracle_normalize_answer(a));
            expected = std::max(expected, nl < 0.5 ? 1.0 - nl : 0.0);
        }
        ASSERT_EQ(metrics::anls_score(p, g), expected) << "[" << p << "] [" << g.front() << "]";
        auto reversed = g;
        std::reverse(reversed.begin(), reversed.end());
        ASSERT_EQ(metrics::anls_score(p, reversed), expected);
    }
}

TEST(ExactMatch, Examples)
{
    EXPECT_EQ(metrics::exact_match("red car", golds({"red car"})), 1.0);
    EXPECT_EQ(metrics::exact_match("Red  Car", golds({"red car"})), 1.0);
    EXPECT_EQ(metrics::exact_match("red cat", golds({"red car"})), 0.0);
    EXPECT_EQ(metrics::exact_match("b", golds({"a", "B"})), 1.0);
}

TEST(MacroF1, Examples)
{
    EXPECT_EQ(metrics::macro_f1("red car", golds({"red car"})), 1.0);
    EXPECT_DOUBLE_EQ(metrics::macro_f1("red", golds({"red car"})), 2.0 / 3.0);
    EXPECT_EQ(metrics::macro_f1("blue", golds({"red car"})), 0.0);
    EXPECT_EQ(metrics::macro_f1("", golds({"..."})), 1.0);
    EXPECT_EQ(metrics::macro_f1("", golds({"x"})), 0.0);
    // Bag semantics: repeated tokens count with multiplicity.
    EXPECT_DOUBLE_EQ(metrics::macro_f1("a a", golds({"a"})), 2.0 / 3.0);
    EXPECT_EQ(metrics::macro_f1("red", golds({"blue", "Red!"})), 1.0);
}

TEST(Metrics, ExactMatchImpliesPerfectF1AndAnls)
{
    Rng rng(13);
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::string> g{tk::random_text(rng, 10), tk::random_text(rng, 10)};
        std::string p = rng.pick(g);
        if (rng.chance(0.5)) p = "  " + p + " ";
        if (rng.chance(0.3)) p = tk::mutate_once(rng, p);
        if (metrics::exact_match(p, g) == 1.0) {
            ASSERT_EQ(metrics::macro_f1(p, g), 1.0) << p;
            ASSERT_EQ(metrics::anls_score(p, g), 1.0) << p;
        }
    }
}

TEST(Evaluate, AggregatesAreMeansOfRows)
{
    Rng rng(14);
    std::vector<metrics::PredictionEntry> entries;
    for (int i = 0; i < 50; ++i) {
        entries.push_back({"q" + std::to_string(50 - i), tk::random_text(rng, 6), {tk::random_text(rng, 6)}});
    }
    const auto r = metrics::evaluate(entries);
    ASSERT_EQ(r.rows.size(), 50u);
    double anls = 0, em = 0, f1 = 0;
    for (const auto& row : r.rows) {
        anls += row.anls;
        em += row.em;
        f1 += row.f1;
    }
    EXPECT_NEAR(r.anls, anls / 50, 1e-12);
    EXPECT_NEAR(r.em, em / 50, 1e-12);
    EXPECT_NEAR(r.macro_f1, f1 / 50, 1e-12);
    EXPECT_TRUE(std::is_sorted(r.rows.begin(), r.rows.end(),
                               [](const auto& a, const auto& b) { return a.question_id < b.question_id; }));
}

TEST(Evaluate, EdgeCases)
{
    const std::vector<metrics::PredictionEntry> one{{"q", "yes", {"yes"}}};
    const auto r = metrics::evaluate(one);
    EXPECT_EQ(r.anls, 1.0);
    EXPECT_EQ(r.em, 1.0);
    EXPECT_EQ(r.macro_f1, 1.0);

    const std::vector<metrics::PredictionEntry> half{{"a", "yes", {"yes"}}, {"b", "zzzz", {"yes"}}};
    EXPECT_DOUBLE_EQ(metrics::evaluate(half).anls, 0.5);

    EXPECT_THROW(metrics::evaluate(std::vector<metrics::PredictionEntry>{}), InputError);
    const std::vector<metrics::PredictionEntry> dup{{"a", "x", {"x"}}, {"a", "y", {"y"}}};
    EXPECT_THROW(metrics::evaluate(dup), InputError);
}

TEST(Evaluate, ReportJsonRoundTripsAndFormats)
{
    const std::vector<metrics::PredictionEntry> set{{"a", "red", {"red car"}}, {"b", "x", {"x"}}};
    const auto r = metrics::evaluate(set);
    const auto back = metrics::metric_report_from_json(metrics::to_json(r));
    EXPECT_EQ(back.anls, r.anls);
    EXPECT_EQ(back.rows.size(), 2u);
    const auto table = metrics::format_table(r);
    EXPECT_NE(table.find("ANLS"), std::string::npos);
    EXPECT_NE(table.find("a"), std::string::npos);
}
