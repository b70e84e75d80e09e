#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hsiband/errors.hpp"
#include "hsiband/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int threads = 0;
};

hsiband::PipelineConfig resolve(const CommonOpts& opts) {
    auto cfg = hsiband::load_pipeline_config(opts.config_path);
    if (opts.seed_set) {
        cfg.seed = opts.seed;
        cfg.split.seed = opts.seed;
        cfg.train_cfg.seed = opts.seed;
        if (cfg.synthetic) cfg.synth.seed = opts.seed;
    }
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.threads > 0) cfg.threads = opts.threads;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "Pipeline config JSON")->required();
    cmd->add_option("--seed", opts.seed, "Override the global seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--out", opts.out_dir, "Override the output directory");
    cmd->add_option("--threads", opts.threads, "Worker thread cap");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explainability-driven hyperspectral band selection pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;
    void (*stage)(const hsiband::PipelineConfig&) = nullptr;

    const std::pair<const char*, void (*)(const hsiband::PipelineConfig&)> stages[] = {
        {"synth", &hsiband::run_synth},     {"train", &hsiband::run_train},
        {"explain", &hsiband::run_explain}, {"evaluate", &hsiband::run_evaluate},
        {"select", &hsiband::run_select},   {"kde", &hsiband::run_kde},
        {"report", &hsiband::run_report}};
    const char* descriptions[] = {
        "Generate the synthetic cube and label raster",
        "Train the classifier and write the checkpoint",
        "Produce per-band relevance CSVs for the enabled methods",
        "Deletion/insertion curves, AUCs, average drop, random baselines",
        "Aggregate influence, select top-k subsets, retrain",
        "Kernel density curves over selected wavelengths",
        "Consolidated accuracy comparison CSV"};

    int si = 0;
    for (const auto& [name, fn] : stages) {
        auto* cmd = app.add_subcommand(name, descriptions[si++]);
        add_common(cmd, opts);
        cmd->callback([&stage, fn = fn]() { stage = fn; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        stage(resolve(opts));
    } catch (const hsiband::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const hsiband::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const hsiband::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
