#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "colsig/dataset.hpp"
#include "test_util.hpp"

using namespace colsig;

namespace {

std::vector<ManifestEntry> corpus(int university, int city) {
    std::vector<ManifestEntry> out;
    for (int i = 0; i < university; ++i) out.push_back({"u" + std::to_string(i) + ".png", "u" + std::to_string(i), Community::University});
    for (int i = 0; i < city; ++i) out.push_back({"c" + std::to_string(i) + ".png", "c" + std::to_string(i), Community::City});
    return out;
}

// Upper chi-square quantile by the Wilson-Hilferty cube approximation.
double chi2_quantile(double df, double z) {
    const double a = 2.0 / (9.0 * df);
    return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

} // namespace

TEST(Manifest, ParsesTabSeparatedRecords) {
    std::istringstream in("# comment\nscans/a.png\ta\tUniversity\n\nscans/b.tif\tb\tcity\r\n");
    const auto m = parse_manifest(in);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0], (ManifestEntry{"scans/a.png", "a", Community::University}));
    EXPECT_EQ(m[1], (ManifestEntry{"scans/b.tif", "b", Community::City}));
}

TEST(Manifest, WriteParseRoundTrip) {
    const auto entries = corpus(3, 2);
    std::stringstream ss;
    write_manifest(ss, entries);
    EXPECT_EQ(parse_manifest(ss), entries);
}

TEST(Manifest, RejectsMalformedInput) {
    std::istringstream dup("a.png\tx\tcity\nb.png\tx\tcity\n");
    EXPECT_COLSIG_ERROR(parse_manifest(dup), ErrorKind::Format);
    std::istringstream fields("a.png\tx\n");
    EXPECT_COLSIG_ERROR(parse_manifest(fields), ErrorKind::Format);
    std::istringstream label("a.png\tx\tvillage\n");
    EXPECT_COLSIG_ERROR(parse_manifest(label), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR(read_manifest("/nonexistent/manifest.tsv"), ErrorKind::Io);
}

TEST(Plan, UniformWhenUpweightIsOne) {
    const auto plan = build_plan(corpus(6, 4), Community::University, 1.0);
    for (double p : plan.probabilities) EXPECT_DOUBLE_EQ(p, 0.1);
}

TEST(Plan, ProbabilitiesFollowWeights) {
    const auto plan = build_plan(corpus(600, 400), Community::University, 3.0);
    double sum = 0.0, target = 0.0;
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
        sum += plan.probabilities[i];
        if (plan.entries[i].community == Community::University) target += plan.probabilities[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(target, 1800.0 / 2200.0, 1e-12);
    EXPECT_NEAR(plan.probabilities.front(), 3.0 / 2200.0, 1e-15);
    EXPECT_NEAR(plan.probabilities.back(), 1.0 / 2200.0, 1e-15);
}

TEST(Plan, RejectsBadInput) {
    EXPECT_COLSIG_ERROR(build_plan({}, Community::City, 2.0), ErrorKind::Parameter);
    EXPECT_COLSIG_ERROR(build_plan(corpus(1, 1), Community::City, 0.5), ErrorKind::Parameter);
}

TEST(Plan, SingleCommunityIsUniform) {
    const auto plan = build_plan(corpus(0, 5), Community::University, 4.0);
    for (double p : plan.probabilities) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(Plan, JsonRoundTripRecomputesProbabilities) {
    const auto plan = build_plan(corpus(4, 3), Community::City, 2.5);
    auto j = to_json(plan);
    j["entries"][0]["probability"] = 0.99;
    const auto back = plan_from_json(j);
    EXPECT_EQ(back.entries, plan.entries);
    EXPECT_EQ(back.probabilities, plan.probabilities);
    EXPECT_EQ(back.target_community, Community::City);
    EXPECT_COLSIG_ERROR(plan_from_json(nlohmann::json{{"entries", 3}}), ErrorKind::Format);
}

TEST(Sampling, SeededDrawsAreReproducible) {
    const auto plan = build_plan(corpus(5, 5), Community::City, 2.0);
    EXPECT_EQ(sample_batch_indices(plan, 64, 7u), sample_batch_indices(plan, 64, 7u));
    EXPECT_NE(sample_batch_indices(plan, 64, 7u), sample_batch_indices(plan, 64, 8u));
}

TEST(Sampling, ChiSquareAgainstPlanProbabilities) {
    const auto plan = build_plan(corpus(12, 8), Community::University, 3.0);
    const std::size_t draws = 200000;
    std::vector<double> counts(plan.entries.size(), 0.0);
    for (auto i : sample_batch_indices(plan, draws, 2024u)) counts[i] += 1.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expected = plan.probabilities[i] * draws;
        chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    // 99.9th percentile, df = 19.
    EXPECT_LT(chi2, chi2_quantile(19.0, 3.090));
}

TEST(Sampling, TargetShareOverManyDraws) {
    const auto plan = build_plan(corpus(600, 400), Community::University, 3.0);
    std::size_t hits = 0;
    const std::size_t draws = 100000;
    for (auto i : sample_batch_indices(plan, draws, 99u)) hits += plan.entries[i].community == Community::University;
    EXPECT_NEAR(static_cast<double>(hits) / draws, 0.818, 0.01);
}
