#include "hsiband/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "hsiband/errors.hpp"
#include "hsiband/faithfulness.hpp"
#include "hsiband/kde.hpp"
#include "hsiband/random.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hsiband {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    PipelineConfig cfg;
    try {
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.output_dir = j.value("output_dir", std::string{"out"});
        cfg.threads = j.value("threads", 1);

        const auto& ds = j.at("dataset");
        if (ds.contains("synthetic")) {
            cfg.synthetic = true;
            const auto& s = ds["synthetic"];
            cfg.synth.height = s.value("height", 64);
            cfg.synth.width = s.value("width", 64);
            cfg.synth.bands = s.value("bands", 40);
            cfg.synth.class_count = s.value("classes", 4);
            cfg.synth.informative_bands =
                s.value("informative_bands", std::vector<int>{5, 6, 7, 18, 19, 25, 31, 32});
            cfg.synth.snr = s.value("snr", 3.0);
            cfg.synth.labeled_fraction = s.value("labeled_fraction", 0.7);
            cfg.synth.seed = s.value("seed", cfg.seed);
        } else {
            cfg.cube_header = ds.at("cube").get<std::string>();
            cfg.labels_path = ds.at("labels").get<std::string>();
        }

        if (j.contains("patch")) {
            cfg.patch_height = j["patch"].value("height", 3);
            cfg.patch_width = j["patch"].value("width", 3);
        }
        if (j.contains("split")) {
            const auto& s = j["split"];
            cfg.split.train_fraction = s.value("train_fraction", 0.3);
            cfg.split.stratified = s.value("stratified", true);
            cfg.split.test_halving = s.value("test_halving", true);
        }
        cfg.split.seed = cfg.seed;

        if (j.contains("model")) {
            const auto& m = j["model"];
            cfg.model_preset = m.value("preset", std::string{"shallow"});
            if (m.contains("train")) {
                const auto& t = m["train"];
                cfg.train_cfg.epochs = t.value("epochs", 30);
                cfg.train_cfg.batch_size = t.value("batch_size", 64);
                cfg.train_cfg.learning_rate = t.value("learning_rate", 1e-3);
                cfg.train_cfg.optimizer = t.value("optimizer", std::string{"adam"});
                cfg.train_cfg.early_stop_patience = t.value("early_stop_patience", 0);
            }
        }
        cfg.train_cfg.seed = cfg.seed;

        if (j.contains("explain")) {
            const auto& e = j["explain"];
            cfg.methods = e.value("methods", cfg.methods);
            cfg.sample_patches = e.value("sample_patches", 200);
            if (e.contains("lrp")) {
                cfg.lrp.epsilon = e["lrp"].value("epsilon", 1e-6);
                cfg.lrp.gamma = e["lrp"].value("gamma", 0.25);
            }
            if (e.contains("shap"))
                cfg.shap.subset_samples = e["shap"].value("subset_samples", 30);
            if (e.contains("rise")) {
                cfg.rise.mask_count = e["rise"].value("mask_count", 5000);
                cfg.rise.density = e["rise"].value("density", 0.5);
            }
        }
        if (j.contains("evaluate")) {
            cfg.step = j["evaluate"].value("step", 0.2);
            cfg.random_trials = j["evaluate"].value("random_trials", 10);
        }
        if (j.contains("select")) {
            cfg.k_values = j["select"].value("k", cfg.k_values);
            cfg.retrain_runs = j["select"].value("runs", 5);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }

    if (!(cfg.step > 0.0 && cfg.step <= 1.0))
        throw ConfigError("evaluate.step must be in (0,1]");
    if (cfg.synthetic && cfg.synth.bands < 1)
        throw ConfigError("synthetic bands must be >= 1");
    for (const auto& m : cfg.methods)
        if (m != "lrp" && m != "shap" && m != "rise")
            throw ConfigError("unknown explain method: " + m);
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config(ss.str());
}

std::string synthetic_header_path(const PipelineConfig& cfg) {
    return (fs::path(cfg.output_dir) / "synthetic.hdr.json").string();
}
std::string synthetic_labels_path(const PipelineConfig& cfg) {
    return (fs::path(cfg.output_dir) / "synthetic.labels.u16").string();
}

namespace {

std::string out_path(const PipelineConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output_dir) / name).string();
}

std::string dataset_name(const PipelineConfig& cfg) {
    if (cfg.synthetic) return "synthetic";
    std::string stem = fs::path(cfg.cube_header).filename().string();
    const std::string suffix = ".hdr.json";
    if (stem.size() > suffix.size() && stem.ends_with(suffix))
        stem = stem.substr(0, stem.size() - suffix.size());
    return stem;
}

}  // namespace

DatasetBundle load_dataset(const PipelineConfig& cfg) {
    DatasetBundle bundle;
    std::string header = cfg.cube_header;
    std::string labels = cfg.labels_path;
    if (cfg.synthetic) {
        header = synthetic_header_path(cfg);
        labels = synthetic_labels_path(cfg);
    }
    bundle.cube = load_cube(header);

    // Class count is inferred from the label raster.
    {
        std::ifstream in(labels, std::ios::binary);
        if (!in) throw DataError("cannot open labels: " + labels);
    }
    GroundTruth gt = load_labels(labels, bundle.cube.height, bundle.cube.width, 65535);
    int cmax = 0;
    for (auto v : gt.labels) cmax = std::max(cmax, int(v));
    if (cmax == 0) throw DataError("label raster has no labeled pixels");
    gt.class_count = cmax;
    bundle.gt = std::move(gt);

    const PatchSet ps =
        extract_patches(bundle.cube, bundle.gt, cfg.patch_height, cfg.patch_width);
    bundle.split = split_patches(ps, cfg.split);
    bundle.stats = compute_band_stats(bundle.split.train);
    return bundle;
}

void run_synth(const PipelineConfig& cfg) {
    if (!cfg.synthetic) throw ConfigError("config has no synthetic dataset block");
    fs::create_directories(cfg.output_dir);
    auto [cube, gt] = generate_synthetic_cube(cfg.synth);
    save_cube(cube, synthetic_header_path(cfg));
    save_labels(gt, synthetic_labels_path(cfg));
}

void run_train(const PipelineConfig& cfg) {
    const auto bundle = load_dataset(cfg);
    const auto& split = bundle.split;

    NetworkSpec spec = preset_spec(cfg.model_preset, cfg.patch_height, cfg.patch_width,
                                   bundle.cube.bands, bundle.gt.class_count, cfg.seed);
    Network net = init_network(spec);
    net.standardizer = bundle.stats;
    const auto result = train(net, split.train, cfg.train_cfg);

    fs::create_directories(cfg.output_dir);
    save_model(result.network, out_path(cfg, "model.json"), out_path(cfg, "model.bin"));

    std::ostringstream hist;
    hist << "epoch,loss,train_acc\n";
    for (std::size_t e = 0; e < result.history.size(); ++e)
        hist << e + 1 << "," << format_double(result.history[e].loss) << ","
             << format_double(result.history[e].train_accuracy) << "\n";
    write_text_atomic(out_path(cfg, "history.csv"), hist.str());

    json splits{{"train", split.train_indices},
                {"test_accuracy", split.test_accuracy_indices},
                {"test_explain", split.test_explain_indices}};
    write_text_atomic(out_path(cfg, "splits.json"), splits.dump(2) + "\n");

    const double acc = evaluate_accuracy(result.network, split.test_accuracy);
    json metrics{{"test_accuracy_percent", acc},
                 {"train_patches", split.train.size()},
                 {"test_accuracy_patches", split.test_accuracy.size()},
                 {"test_explain_patches", split.test_explain.size()}};
    write_text_atomic(out_path(cfg, "train_metrics.json"), metrics.dump(2) + "\n");
}

void write_relevance_csv(const std::string& path, const std::vector<RelevanceRow>& rows) {
    std::ostringstream csv;
    csv << "patch_id,method,band_index,score\n";
    for (const auto& r : rows)
        csv << r.patch_id << "," << r.method << "," << r.band_index << ","
            << format_double(r.score) << "\n";
    write_text_atomic(path, csv.str());
}

std::vector<RelevanceRow> read_relevance_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open relevance csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty relevance csv: " + path);
    std::vector<RelevanceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        RelevanceRow r;
        std::string field;
        std::getline(ls, field, ',');
        r.patch_id = std::stoll(field);
        std::getline(ls, r.method, ',');
        std::getline(ls, field, ',');
        r.band_index = std::stoi(field);
        std::getline(ls, field, ',');
        r.score = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

// Explanation sample: seeded shuffle of the explanation half, first N ids.
std::vector<std::size_t> sample_explain_ids(const PipelineConfig& cfg,
                                            const PatchSplit& split) {
    std::vector<std::size_t> ids = split.test_explain_indices;
    auto rng = make_rng(cfg.seed, 0xeb13);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n = std::min<std::size_t>(ids.size(), cfg.sample_patches);
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// Maps a sampled global patch index to its patch in the explanation half.
const Patch& patch_by_global_id(const PatchSplit& split, std::size_t global_id) {
    const auto& idx = split.test_explain_indices;
    const auto it = std::lower_bound(idx.begin(), idx.end(), global_id);
    if (it == idx.end() || *it != global_id)
        throw DataError("patch id not in explanation split: " +
                        std::to_string(global_id));
    return split.test_explain.patches[std::size_t(it - idx.begin())];
}

}  // namespace

void run_explain(const PipelineConfig& cfg) {
    const auto bundle = load_dataset(cfg);
    const Network net =
        load_model(out_path(cfg, "model.json"), out_path(cfg, "model.bin"));
    const auto ids = sample_explain_ids(cfg, bundle.split);
    if (ids.empty()) throw DataError("explanation split is empty");

    for (const auto& method : cfg.methods) {
        std::vector<RelevanceRow> rows;
        rows.reserve(ids.size() * bundle.cube.bands);
        for (auto id : ids) {
            const Patch& patch = patch_by_global_id(bundle.split, id);
            BandRelevance rel;
            if (method == "lrp") {
                rel = aggregate_band_relevance(
                    lrp_explain(net, patch, patch.label, cfg.lrp));
            } else if (method == "shap") {
                ShapConfig sc = cfg.shap;
                sc.seed = mix_seed(cfg.seed, id);
                rel = shap_explain(net, patch, patch.label, net.standardizer, sc);
            } else {
                RiseConfig rc = cfg.rise;
                rc.seed = mix_seed(cfg.seed, id);
                rel = rise_explain(net, patch, patch.label, rc);
            }
            for (int band = 0; band < bundle.cube.bands; ++band)
                rows.push_back({static_cast<std::int64_t>(id), method, band,
                                rel.scores[band]});
        }
        write_relevance_csv(out_path(cfg, "relevance_" + method + ".csv"), rows);
    }
}

namespace {

// patch_id -> per-band scores, in file order.
std::map<std::int64_t, std::vector<double>> group_relevance(
    const std::vector<RelevanceRow>& rows, int bands) {
    std::map<std::int64_t, std::vector<double>> by_patch;
    for (const auto& r : rows) {
        auto& v = by_patch[r.patch_id];
        if (v.empty()) v.assign(bands, 0.0);
        if (r.band_index < 0 || r.band_index >= bands)
            throw DataError("relevance band index out of range");
        v[r.band_index] = r.score;
    }
    return by_patch;
}

}  // namespace

void run_evaluate(const PipelineConfig& cfg) {
    const auto bundle = load_dataset(cfg);
    const Network net =
        load_model(out_path(cfg, "model.json"), out_path(cfg, "model.bin"));
    const int bands = bundle.cube.bands;

    std::ostringstream curves;
    curves << "patch_id,method,mode,fraction,confidence\n";
    json summary = json::object();

    for (const auto& method : cfg.methods) {
        const auto rows =
            read_relevance_csv(out_path(cfg, "relevance_" + method + ".csv"));
        const auto by_patch = group_relevance(rows, bands);
        if (by_patch.empty()) throw DataError("no relevance rows for " + method);

        double del_sum = 0.0, ins_sum = 0.0, rnd_del_sum = 0.0, rnd_ins_sum = 0.0;
        std::vector<double> drops;
        for (const auto& [patch_id, scores] : by_patch) {
            const Patch& patch =
                patch_by_global_id(bundle.split, static_cast<std::size_t>(patch_id));
            BandRelevance rel;
            rel.scores = scores;
            rel.method = method;
            rel.patch_id = patch_id;
            rel.target_class = patch.label;

            const auto ranking = rank_bands(rel);
            const auto del =
                deletion_curve(net, patch, ranking, net.standardizer, cfg.step);
            const auto ins = insertion_curve(net, patch, ranking, cfg.step);
            del_sum += del.auc;
            ins_sum += ins.auc;
            drops.push_back(average_drop(net, patch, rel));

            const auto rnd = random_baseline_curves(
                net, patch, net.standardizer, cfg.step, cfg.random_trials,
                mix_seed(cfg.seed, static_cast<std::uint64_t>(patch_id)));
            rnd_del_sum += rnd.deletion_auc;
            rnd_ins_sum += rnd.insertion_auc;

            for (std::size_t i = 0; i < del.fractions.size(); ++i)
                curves << patch_id << "," << method << ",deletion,"
                       << format_double(del.fractions[i]) << ","
                       << format_double(del.confidences[i]) << "\n";
            for (std::size_t i = 0; i < ins.fractions.size(); ++i)
                curves << patch_id << "," << method << ",insertion,"
                       << format_double(ins.fractions[i]) << ","
                       << format_double(ins.confidences[i]) << "\n";
        }
        const double n = double(by_patch.size());
        summary[method] = json{
            {"deletion_auc_mean", del_sum / n},
            {"insertion_auc_mean", ins_sum / n},
            {"average_drop_mean", summarize_drops(drops).mean_percent},
            {"random_deletion_auc", rnd_del_sum / n},
            {"random_insertion_auc", rnd_ins_sum / n}};
    }

    write_text_atomic(out_path(cfg, "curves.csv"), curves.str());
    write_text_atomic(out_path(cfg, "summary.json"), summary.dump(2) + "\n");
}

namespace {

struct CurveKey {
    std::int64_t patch_id;
    std::string mode;
    bool operator<(const CurveKey& o) const {
        return std::tie(patch_id, mode) < std::tie(o.patch_id, o.mode);
    }
};

std::map<std::string, std::vector<PatchCurveRecord>> read_curve_records(
    const PipelineConfig& cfg, int bands) {
    std::ifstream in(out_path(cfg, "curves.csv"));
    if (!in) throw DataError("cannot open curves.csv; run evaluate first");
    std::string line;
    std::getline(in, line);

    std::map<std::string, std::map<CurveKey, FaithfulnessCurve>> parsed;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string pid, method, mode, frac, conf;
        std::getline(ls, pid, ',');
        std::getline(ls, method, ',');
        std::getline(ls, mode, ',');
        std::getline(ls, frac, ',');
        std::getline(ls, conf, ',');
        auto& curve = parsed[method][CurveKey{std::stoll(pid), mode}];
        curve.fractions.push_back(std::stod(frac));
        curve.confidences.push_back(std::stod(conf));
    }

    std::map<std::string, std::vector<PatchCurveRecord>> records;
    for (auto& [method, by_key] : parsed) {
        const auto rel_rows =
            read_relevance_csv(out_path(cfg, "relevance_" + method + ".csv"));
        const auto by_patch = group_relevance(rel_rows, bands);
        std::map<std::int64_t, PatchCurveRecord> by_id;
        for (auto& [key, curve] : by_key) {
            auto& rec = by_id[key.patch_id];
            rec.patch_id = key.patch_id;
            if (key.mode == "deletion") {
                rec.deletion = curve;
                rec.deletion.mode = CurveMode::Deletion;
            } else {
                rec.insertion = curve;
                rec.insertion.mode = CurveMode::Insertion;
            }
        }
        for (auto& [pid, rec] : by_id) {
            const auto it = by_patch.find(pid);
            if (it == by_patch.end())
                throw DataError("curves reference unknown patch " + std::to_string(pid));
            BandRelevance rel;
            rel.scores = it->second;
            rel.method = method;
            rel.patch_id = pid;
            rec.ranking = rank_bands(rel);
            records[method].push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace

void run_select(const PipelineConfig& cfg) {
    const auto bundle = load_dataset(cfg);
    const int bands = bundle.cube.bands;
    for (int k : cfg.k_values)
        if (k < 1 || k >= bands)
            throw ConfigError("select.k must satisfy 1 <= k < bands");

    const NetworkSpec spec =
        preset_spec(cfg.model_preset, cfg.patch_height, cfg.patch_width, bands,
                    bundle.gt.class_count, cfg.seed);

    const auto records = read_curve_records(cfg, bands);
    json rows = json::array();
    const std::string ds_name = dataset_name(cfg);

    // Full-band baseline.
    {
        std::vector<int> all(bands);
        std::iota(all.begin(), all.end(), 0);
        const auto subset = make_band_subset(all, bundle.cube.wavelengths_um);
        auto row = retrain_reduced(spec, subset, bundle.split.train,
                                   bundle.split.test_accuracy, cfg.train_cfg,
                                   cfg.retrain_runs);
        rows.push_back(json{{"model", cfg.model_preset},
                            {"dataset", ds_name},
                            {"method", "full"},
                            {"k", bands},
                            {"acc_mean", row.acc_mean},
                            {"acc_std", row.acc_std},
                            {"runs", row.runs}});
    }

    for (const auto& method : cfg.methods) {
        const auto it = records.find(method);
        if (it == records.end())
            throw DataError("no curve records for method " + method);
        const auto influence = aggregate_influence(it->second, bands);

        std::ostringstream inf_csv;
        inf_csv << "band_index,influence\n";
        for (int band = 0; band < bands; ++band)
            inf_csv << band << "," << format_double(influence.scores[band]) << "\n";
        write_text_atomic(out_path(cfg, "influence_" + method + ".csv"), inf_csv.str());

        for (int k : cfg.k_values) {
            const auto subset =
                select_top_k(influence, k, bundle.cube.wavelengths_um);
            json manifest{{"method", method},
                          {"k", k},
                          {"band_indices", subset.indices},
                          {"wavelengths_um", subset.wavelengths_um}};
            write_text_atomic(
                out_path(cfg, "subset_" + method + "_" + std::to_string(k) + ".json"),
                manifest.dump(2) + "\n");

            auto row = retrain_reduced(spec, subset, bundle.split.train,
                                       bundle.split.test_accuracy, cfg.train_cfg,
                                       cfg.retrain_runs);
            rows.push_back(json{{"model", cfg.model_preset},
                                {"dataset", ds_name},
                                {"method", method},
                                {"k", k},
                                {"acc_mean", row.acc_mean},
                                {"acc_std", row.acc_std},
                                {"runs", row.runs}});
        }
    }
    write_text_atomic(out_path(cfg, "rows.json"), rows.dump(2) + "\n");
}

void run_kde(const PipelineConfig& cfg) {
    bool any = false;
    for (const auto& method : cfg.methods) {
        for (int k : cfg.k_values) {
            const std::string manifest_path =
                out_path(cfg, "subset_" + method + "_" + std::to_string(k) + ".json");
            std::ifstream in(manifest_path);
            if (!in) continue;
            json manifest;
            try {
                in >> manifest;
            } catch (const json::exception& e) {
                throw DataError("bad subset manifest " + manifest_path + ": " + e.what());
            }
            const auto samples =
                manifest.at("wavelengths_um").get<std::vector<double>>();
            const auto grid = default_kde_grid(samples);
            const auto curve = kde_eval(samples, grid);
            std::ostringstream csv;
            csv << "wavelength_um,density\n";
            for (std::size_t i = 0; i < curve.grid.size(); ++i)
                csv << format_double(curve.grid[i]) << ","
                    << format_double(curve.density[i]) << "\n";
            write_text_atomic(
                out_path(cfg, "kde_" + method + "_" + std::to_string(k) + ".csv"),
                csv.str());
            any = true;
        }
    }
    if (!any) throw DataError("no subset manifests found; run select first");
}

void run_report(const PipelineConfig& cfg) {
    std::ifstream in(out_path(cfg, "rows.json"));
    if (!in) throw DataError("cannot open rows.json; run select first");
    json rows;
    try {
        in >> rows;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad rows.json: ") + e.what());
    }

    double full_acc = 0.0;
    bool have_full = false;
    for (const auto& r : rows)
        if (r.at("method").get<std::string>() == "full") {
            full_acc = r.at("acc_mean").get<double>();
            have_full = true;
        }

    std::vector<ComparisonRow> parsed;
    for (const auto& r : rows) {
        ComparisonRow row;
        row.model = r.at("model").get<std::string>();
        row.dataset = r.at("dataset").get<std::string>();
        row.method = r.at("method").get<std::string>();
        row.k = r.at("k").get<int>();
        row.acc_mean = r.at("acc_mean").get<double>();
        row.acc_std = r.at("acc_std").get<double>();
        row.runs = r.at("runs").get<int>();
        parsed.push_back(std::move(row));
    }
    const auto report = compare_report(parsed);

    std::ostringstream csv;
    csv << "model,dataset,method,k,acc_mean,acc_std,runs,gap_vs_full\n";
    for (const auto& row : report.rows) {
        const double gap = have_full ? row.acc_mean - full_acc : 0.0;
        csv << row.model << "," << row.dataset << "," << row.method << "," << row.k
            << "," << format_double(row.acc_mean) << "," << format_double(row.acc_std)
            << "," << row.runs << "," << format_double(gap) << "\n";
    }
    write_text_atomic(out_path(cfg, "report.csv"), csv.str());
}

}  // namespace hsiband
