#include "hsiband/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsiband/errors.hpp"

namespace hsiband {

InfluenceScores aggregate_influence(const std::vector<PatchCurveRecord>& records,
                                    int band_count) {
    if (records.empty()) throw DataError("no curve records to aggregate");

    std::vector<double> sum(band_count, 0.0);
    for (const auto& rec : records) {
        if (static_cast<int>(rec.ranking.order.size()) != band_count)
            throw DataError("record band count mismatch");
        const auto& del = rec.deletion;
        const auto& ins = rec.insertion;
        if (del.fractions.size() != ins.fractions.size() || del.fractions.size() < 2)
            throw DataError("malformed curve record");

        // Each increment's confidence delta is shared equally across the
        // bands replaced/restored in that increment.
        const std::size_t steps = del.fractions.size() - 1;
        std::size_t done = 0;
        for (std::size_t g = 0; g < steps; ++g) {
            const std::size_t upto = static_cast<std::size_t>(
                std::llround(del.fractions[g + 1] * band_count));
            const std::size_t group = upto - done;
            if (group == 0) throw DataError("empty curve increment");
            const double drop = del.confidences[g] - del.confidences[g + 1];
            const double gain = ins.confidences[g + 1] - ins.confidences[g];
            const double share = 0.5 * (drop + gain) / double(group);
            for (std::size_t r = done; r < upto; ++r)
                sum[rec.ranking.order[r]] += share;
            done = upto;
        }
    }

    InfluenceScores out;
    out.method = records.front().ranking.method;
    out.patch_count = records.size();
    out.scores.resize(band_count);
    for (int band = 0; band < band_count; ++band)
        out.scores[band] = sum[band] / double(records.size());

    const auto [mn_it, mx_it] = std::minmax_element(out.scores.begin(), out.scores.end());
    const double mn = *mn_it, mx = *mx_it;
    for (auto& s : out.scores) s = mx > mn ? (s - mn) / (mx - mn) : 0.5;
    return out;
}

BandSubset select_top_k(const InfluenceScores& scores, int k,
                        const std::vector<double>& wavelengths_um) {
    const int b = static_cast<int>(scores.scores.size());
    if (k < 1 || k >= b) throw ConfigError("k must satisfy 1 <= k < b");

    std::vector<int> order(b);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
        return scores.scores[a] > scores.scores[c];
    });
    std::vector<int> chosen(order.begin(), order.begin() + k);
    std::sort(chosen.begin(), chosen.end());
    return make_band_subset(std::move(chosen), wavelengths_um);
}

ComparisonRow retrain_reduced(const NetworkSpec& spec, const BandSubset& subset,
                              const PatchSet& train_set, const PatchSet& test_set,
                              const TrainConfig& cfg, int runs) {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    const PatchSet train_r = restrict_bands(train_set, subset);
    const PatchSet test_r = restrict_bands(test_set, subset);
    const NetworkSpec reduced =
        rebuild_for_bands(spec, static_cast<int>(subset.indices.size()));
    const BandStats stats = compute_band_stats(train_r);

    std::vector<double> accs;
    accs.reserve(runs);
    for (int run = 0; run < runs; ++run) {
        NetworkSpec run_spec = reduced;
        run_spec.seed = spec.seed + static_cast<std::uint64_t>(run);
        TrainConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(run);
        Network net = init_network(run_spec);
        net.standardizer = stats;
        const auto trained = train(net, train_r, run_cfg);
        accs.push_back(evaluate_accuracy(trained.network, test_r));
    }

    ComparisonRow row;
    row.k = static_cast<int>(subset.indices.size());
    row.runs = runs;
    row.acc_mean = std::accumulate(accs.begin(), accs.end(), 0.0) / runs;
    double ss = 0.0;
    for (double a : accs) ss += (a - row.acc_mean) * (a - row.acc_mean);
    row.acc_std = runs > 1 ? std::sqrt(ss / (runs - 1)) : 0.0;
    return row;
}

ComparisonReport compare_report(const std::vector<ComparisonRow>& rows) {
    if (rows.empty()) throw DataError("comparison report needs >= 1 row");
    ComparisonReport report;
    report.rows = rows;
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const ComparisonRow& a, const ComparisonRow& b) {
                         if (a.method != b.method) return a.method < b.method;
                         return a.k < b.k;
                     });
    return report;
}

}  // namespace hsiband
