#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hsiband/errors.hpp"
#include "hsiband/selection.hpp"
#include "test_util.hpp"

using namespace hsiband;

namespace {

std::vector<double> wavelengths(int b) {
    std::vector<double> w(b);
    for (int i = 0; i < b; ++i) w[i] = 0.4 + 0.01 * i;
    return w;
}

FaithfulnessCurve make_curve(std::vector<double> fractions,
                             std::vector<double> confidences, CurveMode mode) {
    FaithfulnessCurve c;
    c.fractions = std::move(fractions);
    c.confidences = std::move(confidences);
    c.mode = mode;
    c.auc = auc(c.fractions, c.confidences);
    return c;
}

PatchCurveRecord make_record(std::vector<int> order, std::vector<double> del_conf,
                             std::vector<double> ins_conf) {
    PatchCurveRecord rec;
    rec.ranking.order = std::move(order);
    const int b = static_cast<int>(rec.ranking.order.size());
    std::vector<double> fr(b + 1);
    for (int i = 0; i <= b; ++i) fr[i] = double(i) / b;
    rec.deletion = make_curve(fr, std::move(del_conf), CurveMode::Deletion);
    rec.insertion = make_curve(fr, std::move(ins_conf), CurveMode::Insertion);
    return rec;
}

}  // namespace

TEST_CASE("aggregate_influence hand-computed two band example") {
    // Band 0 deleted first: confidence 0.9 -> 0.3 -> 0.2; insertion mirrors
    // it 0.1 -> 0.7 -> 0.9. Raw influences: band0 0.5*(0.6+0.6)=0.6,
    // band1 0.5*(0.1+0.2)=0.15; min-max normalizes to 1 and 0.
    const auto rec = make_record({0, 1}, {0.9, 0.3, 0.2}, {0.1, 0.7, 0.9});
    const auto inf = aggregate_influence({rec}, 2);
    REQUIRE(inf.scores.size() == 2u);
    CHECK(inf.scores[0] == doctest::Approx(1.0));
    CHECK(inf.scores[1] == doctest::Approx(0.0));
    CHECK(inf.patch_count == 1u);
}

TEST_CASE("aggregate_influence respects the ranking permutation") {
    // Same curves, but the first deleted band is band 2.
    const auto rec = make_record({2, 0, 1}, {0.9, 0.3, 0.25, 0.2},
                                 {0.1, 0.6, 0.8, 0.9});
    const auto inf = aggregate_influence({rec}, 3);
    // Raw: band2 0.5*(0.6+0.5)=0.55, band0 0.5*(0.05+0.2)=0.125,
    // band1 0.5*(0.05+0.1)=0.075 -> normalized {2:1, 0:~0.105, 1:0}.
    CHECK(inf.scores[2] == doctest::Approx(1.0));
    CHECK(inf.scores[1] == doctest::Approx(0.0));
    CHECK(inf.scores[0] == doctest::Approx((0.125 - 0.075) / (0.55 - 0.075)));
}

TEST_CASE("aggregate_influence shares a grouped increment equally") {
    // One increment covering both bands: each gets half the delta.
    PatchCurveRecord rec;
    rec.ranking.order = {1, 0};
    rec.deletion = make_curve({0.0, 1.0}, {0.8, 0.2}, CurveMode::Deletion);
    rec.insertion = make_curve({0.0, 1.0}, {0.2, 0.8}, CurveMode::Insertion);
    const auto inf = aggregate_influence({rec}, 2);
    // Raw scores identical -> all-equal collapse to 0.5.
    CHECK(inf.scores[0] == doctest::Approx(0.5));
    CHECK(inf.scores[1] == doctest::Approx(0.5));
}

TEST_CASE("aggregate_influence averages over patches") {
    const auto r1 = make_record({0, 1}, {0.9, 0.3, 0.2}, {0.1, 0.7, 0.9});
    const auto r2 = make_record({1, 0}, {0.8, 0.7, 0.1}, {0.2, 0.3, 0.8});
    // r1 raw: b0 0.6, b1 0.15. r2 raw: b1 0.5*(0.1+0.1)=0.1,
    // b0 0.5*(0.6+0.5)=0.55. Means: b0 0.575, b1 0.125.
    const auto inf = aggregate_influence({r1, r2}, 2);
    CHECK(inf.scores[0] == doctest::Approx(1.0));
    CHECK(inf.scores[1] == doctest::Approx(0.0));
    CHECK(inf.patch_count == 2u);
}

TEST_CASE("aggregate_influence validation") {
    CHECK_THROWS_AS(aggregate_influence({}, 4), DataError);
    auto rec = make_record({0, 1}, {0.9, 0.3, 0.2}, {0.1, 0.7, 0.9});
    CHECK_THROWS_AS(aggregate_influence({rec}, 3), DataError);
    rec.insertion.fractions.pop_back();
    rec.insertion.confidences.pop_back();
    CHECK_THROWS_AS(aggregate_influence({rec}, 2), DataError);
}

TEST_CASE("select_top_k picks highest scores, output sorted ascending") {
    InfluenceScores inf;
    inf.scores = {0.2, 0.9, 0.1, 0.8, 0.5};
    const auto w = wavelengths(5);

    const auto s2 = select_top_k(inf, 2, w);
    CHECK(s2.indices == std::vector<int>{1, 3});
    const auto s3 = select_top_k(inf, 3, w);
    CHECK(s3.indices == std::vector<int>{1, 3, 4});
    CHECK(s3.wavelengths_um == std::vector<double>{w[1], w[3], w[4]});

    SUBCASE("nested: top-2 is a subset of top-3") {
        for (int idx : s2.indices)
            CHECK(std::find(s3.indices.begin(), s3.indices.end(), idx) !=
                  s3.indices.end());
    }
    SUBCASE("ties break toward the lower band index") {
        InfluenceScores tied;
        tied.scores = {0.5, 0.9, 0.5, 0.5};
        const auto s = select_top_k(tied, 2, wavelengths(4));
        CHECK(s.indices == std::vector<int>{0, 1});
    }
    SUBCASE("invariant under monotone transforms of the scores") {
        InfluenceScores warped;
        warped.scores.resize(inf.scores.size());
        for (std::size_t i = 0; i < inf.scores.size(); ++i)
            warped.scores[i] = std::exp(3.0 * inf.scores[i]);
        const auto s = select_top_k(warped, 3, w);
        CHECK(s.indices == s3.indices);
    }
    SUBCASE("k bounds enforced") {
        CHECK_THROWS_AS(select_top_k(inf, 0, w), ConfigError);
        CHECK_THROWS_AS(select_top_k(inf, 5, w), ConfigError);
        CHECK_THROWS_AS(select_top_k(inf, 7, w), ConfigError);
    }
}

TEST_CASE("retrain_reduced on an identity-like subset preserves accuracy") {
    // Separable data on band 0; keeping bands {0,1} of 6 keeps the signal.
    PatchSet ps;
    ps.patch_height = ps.patch_width = 1;
    ps.bands = 6;
    ps.wavelengths_um = wavelengths(6);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int i = 0; i < 60; ++i) {
        Patch p;
        p.height = p.width = 1;
        p.bands = 6;
        p.label = 1 + i % 2;
        p.values.resize(6);
        const double c = p.label == 1 ? -1.0 : 1.0;
        for (int b = 0; b < 6; ++b)
            p.values[b] = static_cast<float>((b == 0 ? c : 0.0) + noise(rng));
        ps.patches.push_back(p);
    }

    NetworkSpec spec = testutil::dense_spec(6, {8, 2}, 23);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.seed = 3;

    const auto subset = make_band_subset({0, 1}, ps.wavelengths_um);
    const auto row = retrain_reduced(spec, subset, ps, ps, cfg, 2);
    CHECK(row.k == 2);
    CHECK(row.runs == 2);
    CHECK(row.acc_mean >= 95.0);
    CHECK(row.acc_std >= 0.0);

    SUBCASE("dropping the signal band hurts") {
        const auto noise_only = make_band_subset({1, 2}, ps.wavelengths_um);
        const auto bad = retrain_reduced(spec, noise_only, ps, ps, cfg, 2);
        CHECK(bad.acc_mean < row.acc_mean);
    }
    SUBCASE("deterministic across invocations") {
        const auto again = retrain_reduced(spec, subset, ps, ps, cfg, 2);
        CHECK(again.acc_mean == row.acc_mean);
        CHECK(again.acc_std == row.acc_std);
    }
    SUBCASE("runs must be positive") {
        CHECK_THROWS_AS(retrain_reduced(spec, subset, ps, ps, cfg, 0), ConfigError);
    }
}

TEST_CASE("retrain_reduced single run has zero std") {
    PatchSet ps = testutil::make_patch_set(20, 1, 1, 4, 2);
    NetworkSpec spec = testutil::dense_spec(4, {4, 2}, 5);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.seed = 1;
    const auto subset = make_band_subset({0, 2}, ps.wavelengths_um);
    const auto row = retrain_reduced(spec, subset, ps, ps, cfg, 1);
    CHECK(row.runs == 1);
    CHECK(row.acc_std == 0.0);
}

TEST_CASE("compare_report sorts by method then k") {
    ComparisonRow a;
    a.method = "lrp";
    a.k = 30;
    ComparisonRow b;
    b.method = "full";
    b.k = 103;
    ComparisonRow c;
    c.method = "lrp";
    c.k = 15;
    ComparisonRow d;
    d.method = "rise";
    d.k = 15;

    const auto rep = compare_report({a, b, c, d});
    REQUIRE(rep.rows.size() == 4u);
    CHECK(rep.rows[0].method == "full");
    CHECK(rep.rows[1].method == "lrp");
    CHECK(rep.rows[1].k == 15);
    CHECK(rep.rows[2].method == "lrp");
    CHECK(rep.rows[2].k == 30);
    CHECK(rep.rows[3].method == "rise");

    CHECK_THROWS_AS(compare_report({}), DataError);
}
