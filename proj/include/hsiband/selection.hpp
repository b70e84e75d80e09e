#ifndef HSIBAND_SELECTION_HPP
#define HSIBAND_SELECTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "hsiband/classifier.hpp"
#include "hsiband/faithfulness.hpp"
#include "hsiband/hypercube.hpp"

namespace hsiband {

// Normalized per-band influence in [0,1]; all-equal inputs collapse to 0.5.
struct InfluenceScores {
    std::vector<double> scores;
    std::string method;
    std::size_t patch_count = 0;
};

// One patch's evidence for influence aggregation.
struct PatchCurveRecord {
    std::int64_t patch_id = -1;
    BandRanking ranking;
    FaithfulnessCurve deletion;
    FaithfulnessCurve insertion;
};

struct ComparisonRow {
    std::string model;
    std::string dataset;
    std::string method;  // "full" for the all-band baseline
    int k = 0;
    double acc_mean = 0.0;
    double acc_std = 0.0;
    int runs = 0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
};

InfluenceScores aggregate_influence(const std::vector<PatchCurveRecord>& records,
                                    int band_count);

BandSubset select_top_k(const InfluenceScores& scores, int k,
                        const std::vector<double>& wavelengths_um);

ComparisonRow retrain_reduced(const NetworkSpec& spec, const BandSubset& subset,
                              const PatchSet& train_set, const PatchSet& test_set,
                              const TrainConfig& cfg, int runs = 5);

ComparisonReport compare_report(const std::vector<ComparisonRow>& rows);

}  // namespace hsiband

#endif
