#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "hsiband/errors.hpp"
#include "hsiband/kde.hpp"

using namespace hsiband;

TEST_CASE("scott bandwidth closed forms") {
    SUBCASE("n=32, sigma=1 gives exactly one half") {
        // 32^(-1/5) = 1/2 exactly.
        CHECK(scott_bandwidth_from_sigma(1.0, 32) == 0.5);
    }
    SUBCASE("two-point sample") {
        // Samples {0, 2}: mean 1, unbiased variance 2, sigma = sqrt(2).
        const double expect = std::sqrt(2.0) * std::pow(2.0, -0.2);
        CHECK(scott_bandwidth({0.0, 2.0}) == doctest::Approx(expect).epsilon(1e-15));
    }
    SUBCASE("scales linearly with sigma") {
        CHECK(scott_bandwidth_from_sigma(3.0, 100) ==
              doctest::Approx(3.0 * scott_bandwidth_from_sigma(1.0, 100)));
    }
    SUBCASE("rejects degenerate inputs") {
        CHECK_THROWS_AS(scott_bandwidth({1.0}), ConfigError);
        CHECK_THROWS_AS(scott_bandwidth({0.5, 0.5, 0.5}), ConfigError);
        CHECK_THROWS_AS(scott_bandwidth_from_sigma(0.0, 10), ConfigError);
        CHECK_THROWS_AS(scott_bandwidth_from_sigma(1.0, 1), ConfigError);
    }
}

TEST_CASE("kde_eval matches a direct gaussian mixture sum") {
    const std::vector<double> samples = {0.45, 0.52, 0.61, 0.48, 0.70};
    const std::vector<double> grid = {0.40, 0.50, 0.55, 0.65, 0.80};
    const auto curve = kde_eval(samples, grid);
    const double h = scott_bandwidth(samples);
    CHECK(curve.bandwidth == doctest::Approx(h).epsilon(1e-15));

    for (std::size_t i = 0; i < grid.size(); ++i) {
        double expect = 0.0;
        for (double x : samples) {
            const double z = (grid[i] - x) / h;
            expect += std::exp(-0.5 * z * z) / (samples.size() * h * std::sqrt(2 * M_PI));
        }
        CHECK(curve.density[i] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(curve.density[i] >= 0.0);
    }
}

TEST_CASE("single gaussian sample cluster peaks near its center") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> dist(0.65, 0.02);
    std::vector<double> samples(200);
    for (auto& s : samples) s = dist(rng);

    const auto grid = default_kde_grid(samples);
    const auto curve = kde_eval(samples, grid);
    const auto peak =
        std::max_element(curve.density.begin(), curve.density.end());
    const double peak_x = curve.grid[peak - curve.density.begin()];
    CHECK(std::abs(peak_x - 0.65) < 0.01);
}

TEST_CASE("default grid spans min/max plus five bandwidths") {
    const std::vector<double> samples = {0.40, 0.45, 0.50, 0.90};
    const double h = scott_bandwidth(samples);
    const auto grid = default_kde_grid(samples);
    REQUIRE(grid.size() == 512u);
    CHECK(grid.front() == doctest::Approx(0.40 - 5 * h).epsilon(1e-12));
    CHECK(grid.back() == doctest::Approx(0.90 + 5 * h).epsilon(1e-12));
    CHECK(std::is_sorted(grid.begin(), grid.end()));
    // Even spacing.
    const double step = grid[1] - grid[0];
    for (std::size_t i = 2; i < grid.size(); ++i)
        CHECK(grid[i] - grid[i - 1] == doctest::Approx(step).epsilon(1e-9));

    CHECK_THROWS_AS(default_kde_grid(samples, 1), ConfigError);
}

TEST_CASE("density integrates to one over the default grid") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(0.42, 0.88);
    std::vector<double> samples(60);
    for (auto& s : samples) s = dist(rng);

    const auto grid = default_kde_grid(samples);
    const auto curve = kde_eval(samples, grid);
    double integral = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        integral += (grid[i] - grid[i - 1]) * 0.5 *
                    (curve.density[i] + curve.density[i - 1]);
    CHECK(std::abs(integral - 1.0) < 1e-3);
}

TEST_CASE("kde is translation equivariant") {
    const std::vector<double> samples = {0.41, 0.55, 0.58, 0.62, 0.79};
    const double shift = 0.2;
    std::vector<double> shifted(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) shifted[i] = samples[i] + shift;

    const std::vector<double> grid = {0.45, 0.55, 0.65};
    std::vector<double> grid_shift(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) grid_shift[i] = grid[i] + shift;

    const auto a = kde_eval(samples, grid);
    const auto b = kde_eval(shifted, grid_shift);
    CHECK(a.bandwidth == doctest::Approx(b.bandwidth).epsilon(1e-12));
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(a.density[i] == doctest::Approx(b.density[i]).epsilon(1e-10));
}

TEST_CASE("kde scale equivariance: density transforms as 1/c") {
    const std::vector<double> samples = {0.41, 0.55, 0.58, 0.62, 0.79};
    const double c = 3.0;
    std::vector<double> scaled(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) scaled[i] = c * samples[i];

    const std::vector<double> grid = {0.45, 0.55, 0.65};
    std::vector<double> grid_scaled(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) grid_scaled[i] = c * grid[i];

    const auto a = kde_eval(samples, grid);
    const auto b = kde_eval(scaled, grid_scaled);
    CHECK(b.bandwidth == doctest::Approx(c * a.bandwidth).epsilon(1e-12));
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(b.density[i] == doctest::Approx(a.density[i] / c).epsilon(1e-10));
}

TEST_CASE("kde_eval validation") {
    CHECK_THROWS_AS(kde_eval({0.5, 0.6}, {}), ConfigError);
    CHECK_THROWS_AS(kde_eval({0.5}, {0.5}), ConfigError);
}
