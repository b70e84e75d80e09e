#include "hsiband/faithfulness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hsiband/errors.hpp"
#include "hsiband/random.hpp"

namespace hsiband {

BandRanking rank_bands(const BandRelevance& rel) {
    BandRanking ranking;
    ranking.method = rel.method;
    ranking.patch_id = rel.patch_id;
    ranking.order.resize(rel.scores.size());
    std::iota(ranking.order.begin(), ranking.order.end(), 0);
    // Descending score; ties broken by ascending band index.
    std::stable_sort(ranking.order.begin(), ranking.order.end(),
                     [&](int a, int b) { return rel.scores[a] > rel.scores[b]; });
    return ranking;
}

double auc(const std::vector<double>& fractions, const std::vector<double>& confidences) {
    if (fractions.size() < 2 || fractions.size() != confidences.size())
        throw ConfigError("auc needs >= 2 matching points");
    double area = 0.0;
    for (std::size_t i = 1; i < fractions.size(); ++i) {
        if (!(fractions[i] > fractions[i - 1]))
            throw ConfigError("auc fractions must be strictly increasing");
        area += (fractions[i] - fractions[i - 1]) *
                0.5 * (confidences[i] + confidences[i - 1]);
    }
    return area;
}

namespace {

void check_step(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("step must be in (0,1]");
}

void check_ranking(const BandRanking& ranking, int bands) {
    if (static_cast<int>(ranking.order.size()) != bands)
        throw ConfigError("ranking length does not match band count");
    std::vector<bool> seen(bands, false);
    for (int band : ranking.order) {
        if (band < 0 || band >= bands || seen[band])
            throw ConfigError("ranking is not a permutation of 0..b-1");
        seen[band] = true;
    }
}

double true_class_confidence(const Network& net, const Patch& patch, int target) {
    return forward(net, patch, false).confidence[target - 1];
}

FaithfulnessCurve perturbation_curve(const Network& net, const Patch& patch,
                                     const BandRanking& ranking, double step,
                                     CurveMode mode, const BandStats* stats) {
    check_step(step);
    check_ranking(ranking, patch.bands);
    const int b = patch.bands;
    const int group = static_cast<int>(std::ceil(step * b));
    const int target = patch.label;

    // Deletion walks from the intact patch; insertion from all-zero bands.
    Patch work = patch;
    if (mode == CurveMode::Insertion)
        std::fill(work.values.begin(), work.values.end(), 0.0f);

    FaithfulnessCurve curve;
    curve.mode = mode;
    curve.fractions.push_back(0.0);
    curve.confidences.push_back(true_class_confidence(net, work, target));

    int done = 0;
    while (done < b) {
        const int upto = std::min(b, done + group);
        for (int r = done; r < upto; ++r) {
            const int band = ranking.order[r];
            for (int y = 0; y < patch.height; ++y)
                for (int x = 0; x < patch.width; ++x)
                    work.at(y, x, band) =
                        mode == CurveMode::Deletion
                            ? static_cast<float>(stats->mean[band])
                            : patch.at(y, x, band);
        }
        done = upto;
        curve.fractions.push_back(double(done) / b);
        curve.confidences.push_back(true_class_confidence(net, work, target));
    }
    curve.auc = auc(curve.fractions, curve.confidences);
    return curve;
}

}  // namespace

FaithfulnessCurve deletion_curve(const Network& net, const Patch& patch,
                                 const BandRanking& ranking, const BandStats& stats,
                                 double step) {
    if (static_cast<int>(stats.mean.size()) != patch.bands)
        throw DataError("band stats size mismatch");
    return perturbation_curve(net, patch, ranking, step, CurveMode::Deletion, &stats);
}

FaithfulnessCurve insertion_curve(const Network& net, const Patch& patch,
                                  const BandRanking& ranking, double step) {
    return perturbation_curve(net, patch, ranking, step, CurveMode::Insertion, nullptr);
}

namespace {

double drop_from_band_relevance(const Network& net, const Patch& patch,
                                const std::vector<double>& band_scores) {
    const int target = patch.label;
    const auto std_input = standardize_input(net, patch);
    const double conf_orig =
        forward_standardized(net, std_input, false).confidence[target - 1];
    if (conf_orig == 0.0) return std::numeric_limits<double>::quiet_NaN();

    // Min-max normalize; all-equal relevance keeps the input unchanged.
    const auto [mn_it, mx_it] =
        std::minmax_element(band_scores.begin(), band_scores.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> norm(band_scores.size());
    for (std::size_t i = 0; i < norm.size(); ++i)
        norm[i] = mx > mn ? (band_scores[i] - mn) / (mx - mn) : 1.0;

    std::vector<double> masked(std_input.size());
    std::size_t i = 0;
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x)
            for (int band = 0; band < patch.bands; ++band, ++i)
                masked[i] = std_input[i] * norm[band];
    const double conf_masked =
        forward_standardized(net, masked, false).confidence[target - 1];
    return std::max(0.0, conf_orig - conf_masked) / conf_orig * 100.0;
}

}  // namespace

double average_drop(const Network& net, const Patch& patch, const BandRelevance& rel) {
    if (static_cast<int>(rel.scores.size()) != patch.bands)
        throw DataError("relevance length does not match band count");
    return drop_from_band_relevance(net, patch, rel.scores);
}

double average_drop(const Network& net, const Patch& patch, const RelevanceMap& map) {
    if (map.height != patch.height || map.width != patch.width ||
        map.bands != patch.bands)
        throw DataError("relevance map shape does not match patch");
    const int target = patch.label;
    const auto std_input = standardize_input(net, patch);
    const double conf_orig =
        forward_standardized(net, std_input, false).confidence[target - 1];
    if (conf_orig == 0.0) return std::numeric_limits<double>::quiet_NaN();

    const auto [mn_it, mx_it] = std::minmax_element(map.values.begin(), map.values.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> masked(std_input.size());
    for (std::size_t i = 0; i < masked.size(); ++i) {
        const double norm = mx > mn ? (map.values[i] - mn) / (mx - mn) : 1.0;
        masked[i] = std_input[i] * norm;
    }
    const double conf_masked =
        forward_standardized(net, masked, false).confidence[target - 1];
    return std::max(0.0, conf_orig - conf_masked) / conf_orig * 100.0;
}

AverageDropResult summarize_drops(const std::vector<double>& drops_percent) {
    AverageDropResult res;
    res.drops_percent = drops_percent;
    double sum = 0.0;
    std::size_t n = 0;
    for (double d : drops_percent) {
        if (std::isnan(d)) continue;  // degenerate patches excluded
        sum += d;
        ++n;
    }
    res.mean_percent = n > 0 ? sum / n : 0.0;
    return res;
}

RandomBaselineAucs random_baseline_curves(const Network& net, const Patch& patch,
                                          const BandStats& stats, double step,
                                          int trials, std::uint64_t seed) {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    check_step(step);
    auto rng = make_rng(seed, 0xba5e);
    BandRanking ranking;
    ranking.method = "random";
    ranking.order.resize(patch.bands);
    std::iota(ranking.order.begin(), ranking.order.end(), 0);

    RandomBaselineAucs out;
    for (int t = 0; t < trials; ++t) {
        std::shuffle(ranking.order.begin(), ranking.order.end(), rng);
        out.deletion_auc += deletion_curve(net, patch, ranking, stats, step).auc;
        out.insertion_auc += insertion_curve(net, patch, ranking, step).auc;
    }
    out.deletion_auc /= trials;
    out.insertion_auc /= trials;
    return out;
}

}  // namespace hsiband
