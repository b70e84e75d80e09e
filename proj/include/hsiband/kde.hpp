#ifndef HSIBAND_KDE_HPP
#define HSIBAND_KDE_HPP

#include <vector>

namespace hsiband {

struct KdeCurve {
    std::vector<double> grid;     // increasing wavelengths (um)
    std::vector<double> density;  // >= 0
    double bandwidth = 0.0;
};

// Scott's rule for d=1: h = sigma * n^(-1/5), sigma the sample std (n-1 divisor).
double scott_bandwidth(const std::vector<double>& samples);
double scott_bandwidth_from_sigma(double sigma, std::size_t n);

// Gaussian kernel mixture evaluated on an explicit grid.
KdeCurve kde_eval(const std::vector<double>& samples, const std::vector<double>& grid);

// 512 evenly spaced points spanning [min - 5h, max + 5h].
std::vector<double> default_kde_grid(const std::vector<double>& samples, int points = 512);

}  // namespace hsiband

#endif
