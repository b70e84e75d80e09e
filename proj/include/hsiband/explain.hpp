#ifndef HSIBAND_EXPLAIN_HPP
#define HSIBAND_EXPLAIN_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hsiband/classifier.hpp"
#include "hsiband/hypercube.hpp"

namespace hsiband {

// Spatial x spectral attribution, same shape as the patch.
struct RelevanceMap {
    int height = 0;
    int width = 0;
    int bands = 0;
    int target_class = 0;  // 1..c
    std::string method;
    std::vector<double> values;  // (y * width + x) * bands + band

    double at(int y, int x, int band) const {
        return values[(static_cast<std::size_t>(y) * width + x) * bands + band];
    }
};

struct BandRelevance {
    std::vector<double> scores;  // length b
    int target_class = 0;
    std::string method;
    std::int64_t patch_id = -1;
};

struct LrpConfig {
    double epsilon = 1e-6;
    double gamma = 0.25;
    // Optional per-layer override; key is the layer index in the spec.
    std::map<int, LrpRule> rule_map;
};

struct ShapConfig {
    int subset_samples = 30;
    std::uint64_t seed = 0;
};

struct RiseConfig {
    int mask_count = 5000;
    double density = 0.5;
    std::uint64_t seed = 0;
};

RelevanceMap lrp_explain(const Network& net, const Patch& patch, int target_class,
                         const LrpConfig& cfg);

BandRelevance shap_explain(const Network& net, const Patch& patch, int target_class,
                           const BandStats& stats, const ShapConfig& cfg);

// Exhaustive Shapley values over all 2^b band coalitions; b <= 15.
BandRelevance exact_shapley(const Network& net, const Patch& patch, int target_class,
                            const BandStats& stats);

BandRelevance rise_explain(const Network& net, const Patch& patch, int target_class,
                           const RiseConfig& cfg);

// Per-band sum of positive relevance over the spatial extent.
BandRelevance aggregate_band_relevance(const RelevanceMap& map);

}  // namespace hsiband

#endif
