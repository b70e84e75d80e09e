#ifndef HSIBAND_FAITHFULNESS_HPP
#define HSIBAND_FAITHFULNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hsiband/classifier.hpp"
#include "hsiband/explain.hpp"
#include "hsiband/hypercube.hpp"

namespace hsiband {

// Band indices ordered most to least relevant; a permutation of 0..b-1.
struct BandRanking {
    std::vector<int> order;
    std::string method;
    std::int64_t patch_id = -1;
};

enum class CurveMode { Deletion, Insertion };

struct FaithfulnessCurve {
    std::vector<double> fractions;    // strictly increasing, 0..1
    std::vector<double> confidences;  // true-class probability at each fraction
    CurveMode mode = CurveMode::Deletion;
    double auc = 0.0;
};

struct AverageDropResult {
    std::vector<double> drops_percent;  // per patch, NaN entries excluded from mean
    double mean_percent = 0.0;
};

struct RandomBaselineAucs {
    double deletion_auc = 0.0;
    double insertion_auc = 0.0;
};

BandRanking rank_bands(const BandRelevance& rel);

FaithfulnessCurve deletion_curve(const Network& net, const Patch& patch,
                                 const BandRanking& ranking, const BandStats& stats,
                                 double step = 0.2);

FaithfulnessCurve insertion_curve(const Network& net, const Patch& patch,
                                  const BandRanking& ranking, double step = 0.2);

// Trapezoidal area over the fraction axis.
double auc(const std::vector<double>& fractions, const std::vector<double>& confidences);

// Drop percentage for one patch; NaN when the original confidence is 0.
double average_drop(const Network& net, const Patch& patch, const BandRelevance& rel);
double average_drop(const Network& net, const Patch& patch, const RelevanceMap& map);

AverageDropResult summarize_drops(const std::vector<double>& drops_percent);

RandomBaselineAucs random_baseline_curves(const Network& net, const Patch& patch,
                                          const BandStats& stats, double step,
                                          int trials, std::uint64_t seed);

}  // namespace hsiband

#endif
