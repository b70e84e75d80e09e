#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsiband/errors.hpp"
#include "hsiband/pipeline.hpp"
#include "test_util.hpp"

using namespace hsiband;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string tiny_config(const std::string& out_dir) {
    std::ostringstream j;
    j << R"({
  "seed": 7,
  "output_dir": ")" << out_dir << R"(",
  "dataset": {
    "synthetic": {
      "height": 20, "width": 20, "bands": 12, "classes": 3,
      "informative_bands": [2, 3, 7, 8], "snr": 3.0, "labeled_fraction": 0.8
    }
  },
  "patch": {"height": 3, "width": 3},
  "split": {"train_fraction": 0.4},
  "model": {"preset": "shallow",
            "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.005}},
  "explain": {"methods": ["lrp", "shap", "rise"], "sample_patches": 6,
              "shap": {"subset_samples": 5}, "rise": {"mask_count": 40}},
  "evaluate": {"step": 0.25, "random_trials": 2},
  "select": {"k": [3, 5], "runs": 1}
})";
    return j.str();
}

void run_all_stages(const PipelineConfig& cfg) {
    run_synth(cfg);
    run_train(cfg);
    run_explain(cfg);
    run_evaluate(cfg);
    run_select(cfg);
    run_kde(cfg);
    run_report(cfg);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("defaults fill in for a minimal config") {
        const auto cfg = parse_pipeline_config(
            R"({"dataset": {"cube": "a.hdr.json", "labels": "a.u16"}})");
        CHECK(cfg.seed == 0);
        CHECK(cfg.output_dir == "out");
        CHECK(!cfg.synthetic);
        CHECK(cfg.cube_header == "a.hdr.json");
        CHECK(cfg.patch_height == 3);
        CHECK(cfg.split.train_fraction == doctest::Approx(0.3));
        CHECK(cfg.model_preset == "shallow");
        CHECK(cfg.train_cfg.epochs == 30);
        CHECK(cfg.methods == std::vector<std::string>{"lrp", "shap", "rise"});
        CHECK(cfg.shap.subset_samples == 30);
        CHECK(cfg.rise.mask_count == 5000);
        CHECK(cfg.rise.density == doctest::Approx(0.5));
        CHECK(cfg.lrp.gamma == doctest::Approx(0.25));
        CHECK(cfg.step == doctest::Approx(0.2));
        CHECK(cfg.k_values == std::vector<int>{15, 30, 50});
        CHECK(cfg.retrain_runs == 5);
    }
    SUBCASE("explicit values override defaults") {
        const auto cfg = parse_pipeline_config(tiny_config("/tmp/x"));
        CHECK(cfg.seed == 7);
        CHECK(cfg.synthetic);
        CHECK(cfg.synth.bands == 12);
        CHECK(cfg.synth.informative_bands == std::vector<int>{2, 3, 7, 8});
        CHECK(cfg.train_cfg.epochs == 2);
        CHECK(cfg.train_cfg.seed == 7);
        CHECK(cfg.split.seed == 7);
        CHECK(cfg.shap.subset_samples == 5);
        CHECK(cfg.k_values == std::vector<int>{3, 5});
        CHECK(cfg.retrain_runs == 1);
    }
    SUBCASE("rejects malformed input") {
        CHECK_THROWS_AS(parse_pipeline_config("not json"), ConfigError);
        CHECK_THROWS_AS(parse_pipeline_config("{}"), ConfigError);
        CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {}})"), ConfigError);
        CHECK_THROWS_AS(
            parse_pipeline_config(
                R"({"dataset": {"synthetic": {}}, "evaluate": {"step": 0}})"),
            ConfigError);
        CHECK_THROWS_AS(
            parse_pipeline_config(
                R"({"dataset": {"synthetic": {}}, "explain": {"methods": ["gradcam"]}})"),
            ConfigError);
        CHECK_THROWS_AS(load_pipeline_config("/nonexistent/config.json"), ConfigError);
    }
}

TEST_CASE("synth writes raster files with the exact expected sizes") {
    testutil::TempDir tmp("synth");
    const auto cfg = parse_pipeline_config(tiny_config(tmp.path.string()));
    run_synth(cfg);

    const auto header = synthetic_header_path(cfg);
    CHECK(fs::exists(header));
    const std::string bsq = header.substr(0, header.size() - 9) + ".bsq";
    REQUIRE(fs::exists(bsq));
    CHECK(fs::file_size(bsq) == 20u * 20u * 12u * 4u);
    REQUIRE(fs::exists(synthetic_labels_path(cfg)));
    CHECK(fs::file_size(synthetic_labels_path(cfg)) == 20u * 20u * 2u);

    SUBCASE("dataset loads back with consistent shapes") {
        const auto bundle = load_dataset(cfg);
        CHECK(bundle.cube.height == 20);
        CHECK(bundle.cube.width == 20);
        CHECK(bundle.cube.bands == 12);
        CHECK(bundle.gt.class_count == 3);
        CHECK(bundle.stats.mean.size() == 12u);
        CHECK(!bundle.split.train.empty());
        CHECK(!bundle.split.test_explain.empty());
    }
    SUBCASE("synth on a file-based config is rejected") {
        auto file_cfg = parse_pipeline_config(
            R"({"dataset": {"cube": "a.hdr.json", "labels": "a.u16"}})");
        CHECK_THROWS_AS(run_synth(file_cfg), ConfigError);
    }
}

TEST_CASE("full stage chain produces every artifact") {
    testutil::TempDir tmp("chain");
    const std::string out = tmp.path.string();
    const auto cfg = parse_pipeline_config(tiny_config(out));
    run_all_stages(cfg);

    auto at = [&](const std::string& name) { return out + "/" + name; };

    SUBCASE("train artifacts") {
        CHECK(fs::exists(at("model.json")));
        CHECK(fs::exists(at("model.bin")));
        const std::string hist = slurp(at("history.csv"));
        CHECK(line_count(hist) == 3u);  // header + 2 epochs
        const auto metrics = json::parse(slurp(at("train_metrics.json")));
        CHECK(metrics.contains("test_accuracy_percent"));
        const auto splits = json::parse(slurp(at("splits.json")));
        CHECK(splits.at("train").size() > 0u);
        CHECK(splits.at("test_explain").size() > 0u);
    }
    SUBCASE("one relevance csv per method with sample_patches * bands rows") {
        for (const std::string m : {"lrp", "shap", "rise"}) {
            const auto rows = read_relevance_csv(at("relevance_" + m + ".csv"));
            CHECK(rows.size() == 6u * 12u);
            std::set<std::int64_t> ids;
            for (const auto& r : rows) {
                CHECK(r.method == m);
                CHECK(r.band_index >= 0);
                CHECK(r.band_index < 12);
                ids.insert(r.patch_id);
            }
            CHECK(ids.size() == 6u);
        }
    }
    SUBCASE("evaluate summary covers all methods") {
        const auto summary = json::parse(slurp(at("summary.json")));
        for (const std::string m : {"lrp", "shap", "rise"}) {
            REQUIRE(summary.contains(m));
            CHECK(summary[m].contains("deletion_auc_mean"));
            CHECK(summary[m].contains("insertion_auc_mean"));
            CHECK(summary[m].contains("average_drop_mean"));
            CHECK(summary[m].contains("random_deletion_auc"));
            CHECK(summary[m].contains("random_insertion_auc"));
        }
        // step 0.25 on 12 bands: groups of 3, points at 0,.25,.5,.75,1.
        const std::string curves = slurp(at("curves.csv"));
        CHECK(line_count(curves) == 1u + 3u * 6u * 2u * 5u);
    }
    SUBCASE("selection artifacts: influence, manifests, rows") {
        for (const std::string m : {"lrp", "shap", "rise"}) {
            const std::string inf = slurp(at("influence_" + m + ".csv"));
            CHECK(line_count(inf) == 13u);
            std::vector<int> top3, top5;
            for (int k : {3, 5}) {
                const auto manifest = json::parse(
                    slurp(at("subset_" + m + "_" + std::to_string(k) + ".json")));
                const auto idx = manifest.at("band_indices").get<std::vector<int>>();
                REQUIRE(static_cast<int>(idx.size()) == k);
                CHECK(std::is_sorted(idx.begin(), idx.end()));
                CHECK(idx.front() >= 0);
                CHECK(idx.back() < 12);
                CHECK(manifest.at("wavelengths_um").size() == idx.size());
                (k == 3 ? top3 : top5) = idx;
            }
            for (int b : top3)
                CHECK(std::find(top5.begin(), top5.end(), b) != top5.end());
        }
        const auto rows = json::parse(slurp(at("rows.json")));
        CHECK(rows.size() == 1u + 3u * 2u);  // full baseline + methods x k
        CHECK(rows[0].at("method") == "full");
        CHECK(rows[0].at("k") == 12);
    }
    SUBCASE("kde curves and final report") {
        for (const std::string m : {"lrp", "shap", "rise"})
            for (int k : {3, 5}) {
                const std::string kde =
                    slurp(at("kde_" + m + "_" + std::to_string(k) + ".csv"));
                CHECK(line_count(kde) == 513u);
            }
        const std::string report = slurp(at("report.csv"));
        CHECK(line_count(report) == 1u + 7u);
        CHECK(report.rfind("model,dataset,method,k,acc_mean,acc_std,runs,gap_vs_full",
                           0) == 0);
        // The full row's gap against itself is zero.
        std::istringstream ss(report);
        std::string line;
        std::getline(ss, line);
        bool saw_full = false;
        while (std::getline(ss, line)) {
            if (line.find(",full,") == std::string::npos) continue;
            saw_full = true;
            CHECK(line.substr(line.rfind(',') + 1) == "0");
        }
        CHECK(saw_full);
    }
    SUBCASE("stage order is enforced through missing-file errors") {
        testutil::TempDir fresh("order");
        auto cfg2 = parse_pipeline_config(tiny_config(fresh.path.string()));
        CHECK_THROWS_AS(run_train(cfg2), DataError);   // no synthetic raster yet
        CHECK_THROWS_AS(run_report(cfg2), DataError);  // no rows.json yet
        CHECK_THROWS_AS(run_kde(cfg2), DataError);     // no subset manifests yet
    }
}

TEST_CASE("pipeline outputs are byte-identical across reruns") {
    testutil::TempDir tmp_a("det_a"), tmp_b("det_b");
    const auto cfg_a = parse_pipeline_config(tiny_config(tmp_a.path.string()));
    const auto cfg_b = parse_pipeline_config(tiny_config(tmp_b.path.string()));
    run_all_stages(cfg_a);
    run_all_stages(cfg_b);

    const std::vector<std::string> files = {
        "model.bin",          "history.csv",        "splits.json",
        "train_metrics.json", "relevance_lrp.csv",  "relevance_shap.csv",
        "relevance_rise.csv", "curves.csv",         "summary.json",
        "influence_lrp.csv",  "subset_lrp_3.json",  "subset_rise_5.json",
        "rows.json",          "kde_shap_3.csv",     "report.csv"};
    for (const auto& f : files) {
        INFO("file: " << f);
        CHECK(slurp(tmp_a.file(f)) == slurp(tmp_b.file(f)));
    }
}

TEST_CASE("cli exit codes") {
    const std::string cli = HSIBAND_CLI_PATH;
    REQUIRE(fs::exists(cli));
    testutil::TempDir tmp("cli");
    const std::string cfg_path = tmp.file("config.json");
    {
        std::ofstream out(cfg_path);
        out << tiny_config(tmp.path.string());
    }
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    CHECK(run("synth --config " + cfg_path) == 0);
    CHECK(run("train --config " + cfg_path) == 0);
    CHECK(run("synth --config /nonexistent.json") == 2);
    CHECK(run("report --config " + cfg_path) == 3);  // rows.json missing
    CHECK(run("synth") != 0);                        // --config is required
    CHECK(run("bogus --config " + cfg_path) != 0);

    SUBCASE("--out and --seed overrides are honored") {
        testutil::TempDir other("cli_out");
        CHECK(run("synth --config " + cfg_path + " --out " + other.path.string() +
                  " --seed 11") == 0);
        CHECK(fs::exists(other.file("synthetic.hdr.json")));
        // Different seed, different cube bytes.
        CHECK(slurp(other.file("synthetic.bsq")) != slurp(tmp.file("synthetic.bsq")));
    }
}
