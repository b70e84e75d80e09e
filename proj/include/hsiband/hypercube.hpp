#ifndef HSIBAND_HYPERCUBE_HPP
#define HSIBAND_HYPERCUBE_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hsiband {

// Raw hyperspectral scene. Data is stored band-sequential (BSQ):
// data[(band * height + row) * width + col], matching the on-disk layout.
struct HyperCube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<double> wavelengths_um;  // strictly increasing, length == bands
    std::vector<float> data;

    float at(int row, int col, int band) const {
        return data[(static_cast<std::size_t>(band) * height + row) * width + col];
    }
    float& at(int row, int col, int band) {
        return data[(static_cast<std::size_t>(band) * height + row) * width + col];
    }
};

// Per-pixel class ids; 0 means unlabeled, real classes are 1..class_count.
struct GroundTruth {
    int height = 0;
    int width = 0;
    int class_count = 0;
    std::vector<std::uint16_t> labels;  // row-major h*w

    std::uint16_t at(int row, int col) const {
        return labels[static_cast<std::size_t>(row) * width + col];
    }
};

// Labeled window centered on a ground-truth pixel. Values are stored
// spatial-major with bands innermost: values[(y * width + x) * bands + band].
struct Patch {
    int center_row = 0;
    int center_col = 0;
    int label = 0;  // 1..c, never 0
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<float> values;

    float at(int y, int x, int band) const {
        return values[(static_cast<std::size_t>(y) * width + x) * bands + band];
    }
    float& at(int y, int x, int band) {
        return values[(static_cast<std::size_t>(y) * width + x) * bands + band];
    }
};

struct PatchSet {
    int patch_height = 0;
    int patch_width = 0;
    int bands = 0;
    std::vector<double> wavelengths_um;
    std::vector<Patch> patches;
    std::string provenance;

    std::size_t size() const { return patches.size(); }
    bool empty() const { return patches.empty(); }
};

// Per-band statistics computed from the training split only.
struct BandStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

struct SplitSpec {
    double train_fraction = 0.3;
    std::uint64_t seed = 0;
    bool stratified = true;
    bool test_halving = true;  // split test into accuracy half and explanation half
};

struct PatchSplit {
    PatchSet train;
    PatchSet test_accuracy;
    PatchSet test_explain;
    // Indices into the source PatchSet, same order as the split sets.
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_accuracy_indices;
    std::vector<std::size_t> test_explain_indices;
};

// Strictly increasing band indices plus their wavelengths.
struct BandSubset {
    std::vector<int> indices;
    std::vector<double> wavelengths_um;
};

struct SyntheticSpec {
    int height = 64;
    int width = 64;
    int bands = 40;
    int class_count = 4;
    std::vector<int> informative_bands;
    double snr = 3.0;
    double labeled_fraction = 0.7;
    std::uint64_t seed = 0;
};

HyperCube load_cube(const std::string& header_path);
void save_cube(const HyperCube& cube, const std::string& header_path);

GroundTruth load_labels(const std::string& path, int height, int width, int class_count);
void save_labels(const GroundTruth& gt, const std::string& path);

void validate_cube(const HyperCube& cube);

PatchSet extract_patches(const HyperCube& cube, const GroundTruth& gt,
                         int patch_height, int patch_width);

PatchSplit split_patches(const PatchSet& ps, const SplitSpec& spec);

BandStats compute_band_stats(const PatchSet& train);

std::pair<HyperCube, GroundTruth> generate_synthetic_cube(const SyntheticSpec& spec);

PatchSet restrict_bands(const PatchSet& ps, const BandSubset& subset);

BandSubset make_band_subset(std::vector<int> indices, const std::vector<double>& wavelengths_um);

}  // namespace hsiband

#endif
