#include "hsiband/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsiband/errors.hpp"

namespace hsiband {

double scott_bandwidth_from_sigma(double sigma, std::size_t n) {
    if (n < 2) throw ConfigError("scott bandwidth needs n >= 2");
    if (!(sigma > 0)) throw ConfigError("scott bandwidth needs sigma > 0");
    return sigma * std::pow(static_cast<double>(n), -0.2);
}

double scott_bandwidth(const std::vector<double>& samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw ConfigError("scott bandwidth needs n >= 2");
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    const double sigma = std::sqrt(ss / (n - 1));  // unbiased sample std
    if (!(sigma > 0)) throw ConfigError("degenerate sample: zero standard deviation");
    return scott_bandwidth_from_sigma(sigma, n);
}

std::vector<double> default_kde_grid(const std::vector<double>& samples, int points) {
    if (points < 2) throw ConfigError("grid needs >= 2 points");
    const double h = scott_bandwidth(samples);
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *mn - 5.0 * h;
    const double hi = *mx + 5.0 * h;
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i)
        grid[i] = lo + (hi - lo) * i / (points - 1);
    return grid;
}

KdeCurve kde_eval(const std::vector<double>& samples, const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("kde grid is empty");
    const double h = scott_bandwidth(samples);
    const std::size_t n = samples.size();
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * M_PI));

    KdeCurve curve;
    curve.bandwidth = h;
    curve.grid = grid;
    curve.density.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double sum = 0.0;
        for (double x : samples) {
            const double z = (grid[i] - x) / h;
            sum += std::exp(-0.5 * z * z);
        }
        curve.density[i] = norm * sum;
    }
    return curve;
}

}  // namespace hsiband
