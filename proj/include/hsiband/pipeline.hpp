#ifndef HSIBAND_PIPELINE_HPP
#define HSIBAND_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hsiband/classifier.hpp"
#include "hsiband/explain.hpp"
#include "hsiband/hypercube.hpp"
#include "hsiband/selection.hpp"

namespace hsiband {

// One config file drives every pipeline stage; stages communicate only
// through files in the output directory.
struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int threads = 1;

    // Dataset: either explicit paths or a synthetic spec materialized by `synth`.
    std::string cube_header;  // empty when synthetic
    std::string labels_path;
    bool synthetic = false;
    SyntheticSpec synth;

    int patch_height = 3;
    int patch_width = 3;
    SplitSpec split;

    std::string model_preset = "shallow";
    TrainConfig train_cfg;

    std::vector<std::string> methods{"lrp", "shap", "rise"};
    int sample_patches = 200;
    LrpConfig lrp;
    ShapConfig shap;
    RiseConfig rise;

    double step = 0.2;
    int random_trials = 10;

    std::vector<int> k_values{15, 30, 50};
    int retrain_runs = 5;
};

PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig parse_pipeline_config(const std::string& json_text);

// Resolved dataset paths inside the output directory for synthetic runs.
std::string synthetic_header_path(const PipelineConfig& cfg);
std::string synthetic_labels_path(const PipelineConfig& cfg);

void run_synth(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_explain(const PipelineConfig& cfg);
void run_evaluate(const PipelineConfig& cfg);
void run_select(const PipelineConfig& cfg);
void run_kde(const PipelineConfig& cfg);
void run_report(const PipelineConfig& cfg);

// Shared helpers used by stages and tests.
struct DatasetBundle {
    HyperCube cube;
    GroundTruth gt;
    PatchSplit split;
    BandStats stats;
};
DatasetBundle load_dataset(const PipelineConfig& cfg);

struct RelevanceRow {
    std::int64_t patch_id;
    std::string method;
    int band_index;
    double score;
};
void write_relevance_csv(const std::string& path, const std::vector<RelevanceRow>& rows);
std::vector<RelevanceRow> read_relevance_csv(const std::string& path);

// Atomic text write: temp file then rename.
void write_text_atomic(const std::string& path, const std::string& content);

std::string format_double(double v);

}  // namespace hsiband

#endif
