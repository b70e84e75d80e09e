#include "hsiband/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "hsiband/errors.hpp"
#include "hsiband/random.hpp"

namespace hsiband {

namespace {

void check_target(const Network& net, int target_class) {
    if (target_class < 1 || target_class > net.spec.class_count)
        throw ConfigError("target class out of range: " + std::to_string(target_class));
}

// Patch copy with the bands NOT in `included` replaced by the train mean.
Patch fill_excluded_with_mean(const Patch& patch, const std::vector<bool>& included,
                              const BandStats& stats) {
    Patch out = patch;
    for (int band = 0; band < patch.bands; ++band) {
        if (included[band]) continue;
        const float fill = static_cast<float>(stats.mean[band]);
        for (int y = 0; y < patch.height; ++y)
            for (int x = 0; x < patch.width; ++x) out.at(y, x, band) = fill;
    }
    return out;
}

double target_confidence(const Network& net, const Patch& patch, int target_class) {
    return forward(net, patch, false).confidence[target_class - 1];
}

}  // namespace

RelevanceMap lrp_explain(const Network& net, const Patch& patch, int target_class,
                         const LrpConfig& cfg) {
    check_target(net, target_class);
    if (!(cfg.epsilon > 0)) throw ConfigError("lrp epsilon must be > 0");
    if (!(cfg.gamma > 0)) throw ConfigError("lrp gamma must be > 0");

    const auto shapes = shape_chain(net.spec);
    const auto res = forward(net, patch, true);
    const auto& acts = res.trace->activations;

    // Relevance starts at the target logit, below the softmax layer.
    const std::size_t last = net.spec.layers.size() - 1;  // softmax index
    std::vector<double> rel(res.logits.size(), 0.0);
    rel[target_class - 1] = res.logits[target_class - 1];

    for (std::size_t li = last; li-- > 0;) {
        const auto& layer = net.spec.layers[li];
        LrpRule rule = layer.lrp_rule;
        if (auto it = cfg.rule_map.find(static_cast<int>(li)); it != cfg.rule_map.end())
            rule = it->second;
        rel = lrp_layer_backward(layer, net.weights[li], shapes[li], shapes[li + 1],
                                 acts[li], rel, rule, cfg.epsilon, cfg.gamma);
    }

    RelevanceMap map;
    map.height = patch.height;
    map.width = patch.width;
    map.bands = patch.bands;
    map.target_class = target_class;
    map.method = "lrp";
    map.values = std::move(rel);
    for (double v : map.values)
        if (!std::isfinite(v)) throw NumericalError("non-finite LRP relevance");
    return map;
}

BandRelevance shap_explain(const Network& net, const Patch& patch, int target_class,
                           const BandStats& stats, const ShapConfig& cfg) {
    check_target(net, target_class);
    if (cfg.subset_samples < 1) throw ConfigError("subset_samples must be >= 1");
    if (static_cast<int>(stats.mean.size()) != patch.bands)
        throw DataError("band stats size mismatch");

    const int b = patch.bands;
    BandRelevance rel;
    rel.target_class = target_class;
    rel.method = "shap";
    rel.scores.assign(b, 0.0);

    auto rng = make_rng(cfg.seed, 0x5aaf);
    std::bernoulli_distribution coin(0.5);
    std::vector<bool> included(b, false);
    for (int band = 0; band < b; ++band) {
        double sum = 0.0;
        for (int s = 0; s < cfg.subset_samples; ++s) {
            for (int j = 0; j < b; ++j) included[j] = (j != band) && coin(rng);
            included[band] = false;
            const double p_excl = target_confidence(
                net, fill_excluded_with_mean(patch, included, stats), target_class);
            included[band] = true;
            const double p_incl = target_confidence(
                net, fill_excluded_with_mean(patch, included, stats), target_class);
            sum += p_incl - p_excl;
        }
        rel.scores[band] = sum / cfg.subset_samples;
    }
    return rel;
}

BandRelevance exact_shapley(const Network& net, const Patch& patch, int target_class,
                            const BandStats& stats) {
    check_target(net, target_class);
    const int b = patch.bands;
    if (b > 15) throw ConfigError("exact_shapley limited to 15 bands");
    if (static_cast<int>(stats.mean.size()) != b)
        throw DataError("band stats size mismatch");

    // Value of every coalition: 2^b forward passes.
    const std::size_t n_sets = std::size_t(1) << b;
    std::vector<double> value(n_sets);
    std::vector<bool> included(b);
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
        for (int j = 0; j < b; ++j) included[j] = (mask >> j) & 1;
        value[mask] = target_confidence(
            net, fill_excluded_with_mean(patch, included, stats), target_class);
    }

    std::vector<double> fact(b + 1, 1.0);
    for (int i = 1; i <= b; ++i) fact[i] = fact[i - 1] * i;

    BandRelevance rel;
    rel.target_class = target_class;
    rel.method = "exact_shapley";
    rel.scores.assign(b, 0.0);
    for (int band = 0; band < b; ++band) {
        const std::size_t bit = std::size_t(1) << band;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_sets; ++mask) {
            if (mask & bit) continue;
            const int s = std::popcount(mask);
            const double weight = fact[s] * fact[b - s - 1] / fact[b];
            phi += weight * (value[mask | bit] - value[mask]);
        }
        rel.scores[band] = phi;
    }
    return rel;
}

BandRelevance rise_explain(const Network& net, const Patch& patch, int target_class,
                           const RiseConfig& cfg) {
    check_target(net, target_class);
    if (cfg.mask_count < 1) throw ConfigError("mask_count must be >= 1");
    if (!(cfg.density > 0.0 && cfg.density <= 1.0))
        throw ConfigError("density must be in (0,1]");

    const int b = patch.bands;
    BandRelevance rel;
    rel.target_class = target_class;
    rel.method = "rise";
    rel.scores.assign(b, 0.0);

    auto rng = make_rng(cfg.seed, 0x815e);
    std::bernoulli_distribution keep(cfg.density);
    std::vector<bool> mask(b);
    Patch masked = patch;
    for (int m = 0; m < cfg.mask_count; ++m) {
        for (int j = 0; j < b; ++j) mask[j] = keep(rng);
        for (int band = 0; band < b; ++band) {
            if (mask[band]) {
                for (int y = 0; y < patch.height; ++y)
                    for (int x = 0; x < patch.width; ++x)
                        masked.at(y, x, band) = patch.at(y, x, band);
            } else {
                for (int y = 0; y < patch.height; ++y)
                    for (int x = 0; x < patch.width; ++x) masked.at(y, x, band) = 0.0f;
            }
        }
        const double conf = target_confidence(net, masked, target_class);
        for (int band = 0; band < b; ++band)
            if (mask[band]) rel.scores[band] += conf;
    }
    const double norm = 1.0 / (double(cfg.mask_count) * cfg.density);
    for (auto& s : rel.scores) s *= norm;
    return rel;
}

BandRelevance aggregate_band_relevance(const RelevanceMap& map) {
    BandRelevance rel;
    rel.target_class = map.target_class;
    rel.method = map.method;
    rel.scores.assign(map.bands, 0.0);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            for (int band = 0; band < map.bands; ++band)
                rel.scores[band] += std::max(map.at(y, x, band), 0.0);
    return rel;
}

}  // namespace hsiband
