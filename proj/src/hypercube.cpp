#include "hsiband/hypercube.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hsiband/errors.hpp"
#include "hsiband/random.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hsiband {

namespace {

std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    const auto len = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(len);
    if (len > 0) in.read(buf.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("short read: " + path);
    return buf;
}

void write_file_bytes(const std::string& path, const void* data, std::size_t len) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace

void validate_cube(const HyperCube& cube) {
    if (cube.height < 1 || cube.width < 1 || cube.bands < 1)
        throw DataError("cube dimensions must be >= 1");
    if (static_cast<int>(cube.wavelengths_um.size()) != cube.bands)
        throw DataError("wavelength count does not match band count");
    for (int i = 1; i < cube.bands; ++i)
        if (!(cube.wavelengths_um[i] > cube.wavelengths_um[i - 1]))
            throw DataError("wavelengths must be strictly increasing");
    const std::size_t expect =
        static_cast<std::size_t>(cube.height) * cube.width * cube.bands;
    if (cube.data.size() != expect) throw DataError("cube data size mismatch");
    for (float v : cube.data)
        if (!std::isfinite(v)) throw DataError("cube contains non-finite values");
}

HyperCube load_cube(const std::string& header_path) {
    const auto hdr_bytes = read_file_bytes(header_path);
    json hdr;
    try {
        hdr = json::parse(hdr_bytes.begin(), hdr_bytes.end());
    } catch (const json::exception& e) {
        throw DataError("bad cube header " + header_path + ": " + e.what());
    }

    HyperCube cube;
    try {
        cube.height = hdr.at("height").get<int>();
        cube.width = hdr.at("width").get<int>();
        cube.bands = hdr.at("bands").get<int>();
        cube.wavelengths_um = hdr.at("wavelengths_um").get<std::vector<double>>();
        if (hdr.at("dtype").get<std::string>() != "f32le")
            throw DataError("unsupported dtype, expected f32le");
        if (hdr.at("layout").get<std::string>() != "bsq")
            throw DataError("unsupported layout, expected bsq");
    } catch (const json::exception& e) {
        throw DataError("bad cube header " + header_path + ": " + e.what());
    }

    const fs::path data_path =
        fs::path(header_path).parent_path() / hdr.at("data_file").get<std::string>();
    const auto raw = read_file_bytes(data_path.string());
    const std::size_t count =
        static_cast<std::size_t>(cube.height) * cube.width * cube.bands;
    if (raw.size() != count * sizeof(float))
        throw DataError("data file size mismatch for " + data_path.string() +
                        ": expected " + std::to_string(count * sizeof(float)) +
                        " bytes, got " + std::to_string(raw.size()));
    cube.data.resize(count);
    std::memcpy(cube.data.data(), raw.data(), raw.size());
    validate_cube(cube);
    return cube;
}

void save_cube(const HyperCube& cube, const std::string& header_path) {
    validate_cube(cube);
    fs::path hdr_path(header_path);
    std::string stem = hdr_path.filename().string();
    // <name>.hdr.json -> <name>.bsq
    const std::string suffix = ".hdr.json";
    if (stem.size() > suffix.size() && stem.ends_with(suffix))
        stem = stem.substr(0, stem.size() - suffix.size());
    const std::string data_name = stem + ".bsq";

    json hdr{{"height", cube.height},
             {"width", cube.width},
             {"bands", cube.bands},
             {"wavelengths_um", cube.wavelengths_um},
             {"data_file", data_name},
             {"dtype", "f32le"},
             {"layout", "bsq"}};
    const std::string text = hdr.dump(2) + "\n";
    write_file_bytes(header_path, text.data(), text.size());
    const fs::path data_path = hdr_path.parent_path() / data_name;
    write_file_bytes(data_path.string(), cube.data.data(),
                     cube.data.size() * sizeof(float));
}

GroundTruth load_labels(const std::string& path, int height, int width,
                        int class_count) {
    const auto raw = read_file_bytes(path);
    const std::size_t count = static_cast<std::size_t>(height) * width;
    if (raw.size() != count * sizeof(std::uint16_t))
        throw DataError("labels file size mismatch for " + path);
    GroundTruth gt;
    gt.height = height;
    gt.width = width;
    gt.class_count = class_count;
    gt.labels.resize(count);
    std::memcpy(gt.labels.data(), raw.data(), raw.size());
    for (auto v : gt.labels)
        if (v > class_count)
            throw DataError("label " + std::to_string(v) + " exceeds class count");
    return gt;
}

void save_labels(const GroundTruth& gt, const std::string& path) {
    write_file_bytes(path, gt.labels.data(), gt.labels.size() * sizeof(std::uint16_t));
}

PatchSet extract_patches(const HyperCube& cube, const GroundTruth& gt,
                         int patch_height, int patch_width) {
    if (patch_height % 2 == 0 || patch_width % 2 == 0)
        throw ConfigError("patch dimensions must be odd");
    if (patch_height > cube.height || patch_width > cube.width)
        throw ConfigError("patch dimensions exceed cube dimensions");
    if (gt.height != cube.height || gt.width != cube.width)
        throw DataError("ground truth dimensions do not match cube");

    const int rh = patch_height / 2;
    const int rw = patch_width / 2;
    PatchSet ps;
    ps.patch_height = patch_height;
    ps.patch_width = patch_width;
    ps.bands = cube.bands;
    ps.wavelengths_um = cube.wavelengths_um;
    std::ostringstream prov;
    prov << cube.height << "x" << cube.width << "x" << cube.bands << "/"
         << patch_height << "x" << patch_width;
    ps.provenance = prov.str();

    // No padding: centers whose window leaves the cube are skipped.
    for (int r = rh; r < cube.height - rh; ++r) {
        for (int c = rw; c < cube.width - rw; ++c) {
            const int label = gt.at(r, c);
            if (label == 0) continue;
            Patch p;
            p.center_row = r;
            p.center_col = c;
            p.label = label;
            p.height = patch_height;
            p.width = patch_width;
            p.bands = cube.bands;
            p.values.resize(static_cast<std::size_t>(patch_height) * patch_width *
                            cube.bands);
            for (int y = 0; y < patch_height; ++y)
                for (int x = 0; x < patch_width; ++x)
                    for (int band = 0; band < cube.bands; ++band)
                        p.at(y, x, band) = cube.at(r - rh + y, c - rw + x, band);
            ps.patches.push_back(std::move(p));
        }
    }
    return ps;
}

PatchSplit split_patches(const PatchSet& ps, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0,1)");
    if (ps.empty()) throw DataError("cannot split an empty patch set");

    // Group indices by class (single group when unstratified).
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const int key = spec.stratified ? ps.patches[i].label : 0;
        groups[key].push_back(i);
    }

    std::vector<std::size_t> train_idx, acc_idx, exp_idx;
    for (auto& [cls, idx] : groups) {
        auto rng = make_rng(spec.seed, static_cast<std::uint64_t>(cls));
        std::vector<std::size_t> shuffled = idx;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const std::size_t n = shuffled.size();
        const std::size_t n_train =
            static_cast<std::size_t>(std::llround(spec.train_fraction * n));
        if (spec.stratified && n_train == 0)
            throw ConfigError("class " + std::to_string(cls) +
                              " has no patches in the train split");
        if (n_train >= n)
            throw ConfigError("train fraction leaves no test patches for class " +
                              std::to_string(cls));
        train_idx.insert(train_idx.end(), shuffled.begin(), shuffled.begin() + n_train);
        const std::size_t n_test = n - n_train;
        if (spec.test_halving) {
            const std::size_t n_acc = (n_test + 1) / 2;
            acc_idx.insert(acc_idx.end(), shuffled.begin() + n_train,
                           shuffled.begin() + n_train + n_acc);
            exp_idx.insert(exp_idx.end(), shuffled.begin() + n_train + n_acc,
                           shuffled.end());
        } else {
            acc_idx.insert(acc_idx.end(), shuffled.begin() + n_train, shuffled.end());
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(acc_idx.begin(), acc_idx.end());
    std::sort(exp_idx.begin(), exp_idx.end());

    auto build = [&](const std::vector<std::size_t>& idx) {
        PatchSet out;
        out.patch_height = ps.patch_height;
        out.patch_width = ps.patch_width;
        out.bands = ps.bands;
        out.wavelengths_um = ps.wavelengths_um;
        out.provenance = ps.provenance;
        out.patches.reserve(idx.size());
        for (auto i : idx) out.patches.push_back(ps.patches[i]);
        return out;
    };

    PatchSplit split;
    split.train = build(train_idx);
    split.test_accuracy = build(acc_idx);
    split.test_explain = build(exp_idx);
    split.train_indices = std::move(train_idx);
    split.test_accuracy_indices = std::move(acc_idx);
    split.test_explain_indices = std::move(exp_idx);
    return split;
}

BandStats compute_band_stats(const PatchSet& train) {
    if (train.empty()) throw DataError("cannot compute band stats on an empty set");
    const int b = train.bands;
    std::vector<double> sum(b, 0.0);
    std::size_t positions = 0;
    for (const auto& p : train.patches) {
        positions += static_cast<std::size_t>(p.height) * p.width;
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                for (int band = 0; band < b; ++band) sum[band] += p.at(y, x, band);
    }
    BandStats stats;
    stats.mean.resize(b);
    stats.stddev.assign(b, 0.0);
    for (int band = 0; band < b; ++band) stats.mean[band] = sum[band] / positions;
    for (const auto& p : train.patches)
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                for (int band = 0; band < b; ++band) {
                    const double d = p.at(y, x, band) - stats.mean[band];
                    stats.stddev[band] += d * d;
                }
    for (int band = 0; band < b; ++band)
        stats.stddev[band] = std::sqrt(stats.stddev[band] / positions);
    return stats;
}

std::pair<HyperCube, GroundTruth> generate_synthetic_cube(const SyntheticSpec& spec) {
    if (spec.informative_bands.empty())
        throw ConfigError("synthetic spec needs at least one informative band");
    if (spec.class_count < 2) throw ConfigError("synthetic spec needs >= 2 classes");
    if (spec.height < 1 || spec.width < 1 || spec.bands < 1)
        throw ConfigError("synthetic dimensions must be >= 1");
    for (int band : spec.informative_bands)
        if (band < 0 || band >= spec.bands)
            throw ConfigError("informative band index out of range");
    if (!(spec.snr > 0)) throw ConfigError("snr must be positive");

    std::vector<int> info = spec.informative_bands;
    std::sort(info.begin(), info.end());
    info.erase(std::unique(info.begin(), info.end()), info.end());

    // Class signatures: a Gaussian bump profile across the informative band
    // positions, with class-specific center and amplitude. Non-informative
    // bands carry no signal at all.
    const int c = spec.class_count;
    const int m = static_cast<int>(info.size());
    std::vector<std::vector<double>> signature(
        c + 1, std::vector<double>(spec.bands, 0.0));
    for (int k = 1; k <= c; ++k) {
        auto rng = make_rng(spec.seed, 1000 + static_cast<std::uint64_t>(k));
        std::uniform_real_distribution<double> amp_dist(0.6, 1.4);
        // Alternate bump polarity so the cross-class mean of a planted band
        // stays near the baseline and the class signal lives in the sign.
        const double amplitude = amp_dist(rng) * (k % 2 == 0 ? -1.0 : 1.0);
        const double center = (m - 1) * (k - 1) / std::max(1.0, double(c - 1));
        const double sigma = std::max(1.0, m / 3.0);
        std::uniform_real_distribution<double> jitter(-0.25, 0.25);
        for (int j = 0; j < m; ++j) {
            const double z = (j - center) / sigma;
            signature[k][info[j]] =
                amplitude * std::exp(-0.5 * z * z) + 0.35 * jitter(rng);
        }
    }

    // Mean signal amplitude over informative bands sets the noise scale.
    double mean_amp = 0.0;
    for (int k = 1; k <= c; ++k)
        for (int j = 0; j < m; ++j) mean_amp += std::abs(signature[k][info[j]]);
    mean_amp /= double(c) * m;
    const double noise_std = mean_amp / spec.snr;

    GroundTruth gt;
    gt.height = spec.height;
    gt.width = spec.width;
    gt.class_count = c;
    gt.labels.assign(static_cast<std::size_t>(spec.height) * spec.width, 0);
    auto label_rng = make_rng(spec.seed, 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Contiguous horizontal class stripes with scattered unlabeled pixels.
    for (int r = 0; r < spec.height; ++r) {
        const int cls = std::min(c, 1 + r * c / spec.height);
        for (int col = 0; col < spec.width; ++col) {
            const bool labeled = unit(label_rng) < spec.labeled_fraction;
            gt.labels[static_cast<std::size_t>(r) * spec.width + col] =
                labeled ? static_cast<std::uint16_t>(cls) : 0;
        }
    }

    HyperCube cube;
    cube.height = spec.height;
    cube.width = spec.width;
    cube.bands = spec.bands;
    cube.wavelengths_um.resize(spec.bands);
    for (int band = 0; band < spec.bands; ++band)
        cube.wavelengths_um[band] =
            0.4 + 0.5 * band / std::max(1, spec.bands - 1);
    cube.data.resize(static_cast<std::size_t>(spec.height) * spec.width * spec.bands);

    auto noise_rng = make_rng(spec.seed, 3);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int r = 0; r < spec.height; ++r) {
        const int cls = std::min(c, 1 + r * c / spec.height);
        for (int col = 0; col < spec.width; ++col)
            for (int band = 0; band < spec.bands; ++band)
                cube.at(r, col, band) = static_cast<float>(
                    0.5 + signature[cls][band] + noise_std * noise(noise_rng));
    }
    validate_cube(cube);
    return {std::move(cube), std::move(gt)};
}

BandSubset make_band_subset(std::vector<int> indices,
                            const std::vector<double>& wavelengths_um) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= static_cast<int>(wavelengths_um.size()))
            throw ConfigError("band index out of range: " + std::to_string(indices[i]));
        if (i > 0 && indices[i] <= indices[i - 1])
            throw ConfigError("band indices must be strictly increasing");
    }
    BandSubset subset;
    subset.wavelengths_um.reserve(indices.size());
    for (int idx : indices) subset.wavelengths_um.push_back(wavelengths_um[idx]);
    subset.indices = std::move(indices);
    return subset;
}

PatchSet restrict_bands(const PatchSet& ps, const BandSubset& subset) {
    if (subset.indices.empty()) throw ConfigError("band subset is empty");
    for (std::size_t i = 0; i < subset.indices.size(); ++i) {
        if (subset.indices[i] < 0 || subset.indices[i] >= ps.bands)
            throw ConfigError("band index out of range: " +
                              std::to_string(subset.indices[i]));
        if (i > 0 && subset.indices[i] <= subset.indices[i - 1])
            throw ConfigError("band indices must be strictly increasing");
    }
    PatchSet out;
    out.patch_height = ps.patch_height;
    out.patch_width = ps.patch_width;
    out.bands = static_cast<int>(subset.indices.size());
    out.wavelengths_um.reserve(subset.indices.size());
    for (int idx : subset.indices) out.wavelengths_um.push_back(ps.wavelengths_um[idx]);
    out.provenance = ps.provenance + "/restricted";
    out.patches.reserve(ps.size());
    for (const auto& p : ps.patches) {
        Patch q;
        q.center_row = p.center_row;
        q.center_col = p.center_col;
        q.label = p.label;
        q.height = p.height;
        q.width = p.width;
        q.bands = out.bands;
        q.values.resize(static_cast<std::size_t>(p.height) * p.width * out.bands);
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                for (int j = 0; j < out.bands; ++j)
                    q.at(y, x, j) = p.at(y, x, subset.indices[j]);
        out.patches.push_back(std::move(q));
    }
    return out;
}

}  // namespace hsiband
