#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rdg/datakit.hpp"
#include "rdg/experiment.hpp"
#include "rdg/metrics.hpp"

namespace {

using namespace rdg;
using nlohmann::json;

// ------------------------------------------------------------------- tile

struct TileArgs {
    std::string images_dir;
    std::string labels_dir;
    std::string domain_file;
    std::string out_dir;
    int stride = 0;  // 0 -> tile_px
    double val_frac = 0.0;
    double test_frac = 0.0;
    std::uint64_t seed = 0;
};

int cmd_tile(const TileArgs& args) {
    auto domain = datakit::DomainSpec::from_json(read_file(args.domain_file));
    domain.validate();
    if (!fs::is_directory(args.images_dir))
        throw IoError("image directory not found: " + args.images_dir);
    const bool labeled = !args.labels_dir.empty();
    if (labeled && !fs::is_directory(args.labels_dir))
        throw IoError("label directory not found: " + args.labels_dir);

    std::vector<fs::path> rasters;
    for (const auto& entry : fs::directory_iterator(args.images_dir))
        if (entry.path().extension() == ".png") rasters.push_back(entry.path());
    std::sort(rasters.begin(), rasters.end());
    if (rasters.empty()) throw ValidationError("no .png rasters in " + args.images_dir);

    const int stride = args.stride > 0 ? args.stride : domain.tile_px;
    datakit::TileManifest manifest;
    manifest.domain = domain;
    manifest.base_dir = args.out_dir;
    fs::create_directories(fs::path(args.out_dir) / "images");
    if (labeled) fs::create_directories(fs::path(args.out_dir) / "labels");

    std::mt19937_64 rng(args.seed);
    auto uniform = [&rng] { return (rng() >> 11) * 0x1.0p-53; };
    for (const auto& raster_path : rasters) {
        auto image = datakit::load_png(raster_path);
        auto cuts = datakit::tile_raster(image, domain.tile_px, stride);
        std::vector<datakit::TileCut> label_cuts;
        if (labeled) {
            const fs::path label_path = fs::path(args.labels_dir) / raster_path.filename();
            if (!fs::exists(label_path))
                throw IoError("missing label raster: " + label_path.string());
            auto labels = datakit::load_png(label_path);
            if (labels.size(0) != image.size(0) || labels.size(1) != image.size(1))
                throw ValidationError("label raster size differs from image: " +
                                      label_path.string());
            label_cuts = datakit::tile_raster(labels, domain.tile_px, stride);
        }
        const std::string stem = raster_path.stem().string();
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            char suffix[64];
            std::snprintf(suffix, sizeof(suffix), "%s_r%03lld_c%03lld.png", stem.c_str(),
                          static_cast<long long>(cuts[i].row),
                          static_cast<long long>(cuts[i].col));
            datakit::TileRecord rec;
            rec.image_path = std::string("images/") + suffix;
            rec.raster_id = stem;
            rec.row = cuts[i].row;
            rec.col = cuts[i].col;
            const double u = uniform();
            rec.split = u < args.val_frac                    ? datakit::Split::val
                        : u < args.val_frac + args.test_frac ? datakit::Split::test
                                                             : datakit::Split::train;
            datakit::save_png(manifest.resolve(rec.image_path), cuts[i].tile);
            if (labeled) {
                datakit::encode_labels(label_cuts[i].tile, domain.palette);  // color audit
                rec.label_path = std::string("labels/") + suffix;
                datakit::save_png(manifest.resolve(rec.label_path), label_cuts[i].tile);
            }
            manifest.tiles.push_back(std::move(rec));
        }
    }
    const fs::path manifest_path = fs::path(args.out_dir) / "manifest.jsonl";
    datakit::save_manifest(manifest, manifest_path);
    std::cout << manifest_path.string() << "  (" << manifest.tiles.size() << " tiles)\n";
    return 0;
}

// ------------------------------------------------------------------- synth

int cmd_synth(const std::string& config_file, const std::string& out_dir, bool print_default) {
    if (print_default) {
        std::cout << datakit::default_synthetic_config().to_json() << "\n";
        return 0;
    }
    auto cfg = config_file.empty()
                   ? datakit::default_synthetic_config()
                   : datakit::SyntheticSceneConfig::from_json(read_file(config_file));
    cfg.validate();
    auto [src, tgt] = datakit::generate_synthetic_pair(cfg, out_dir);
    std::cout << (fs::path(out_dir) / "source" / "manifest.jsonl").string() << "  ("
              << src.tiles.size() << " tiles)\n"
              << (fs::path(out_dir) / "target" / "manifest.jsonl").string() << "  ("
              << tgt.tiles.size() << " tiles)\n";
    return 0;
}

// ------------------------------------------------------------------- sweep

// Sequential in-process sweep, or subprocess fan-out when parallel > 1.
int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets,
              int parallel, const std::string& self_exe) {
    json raw;
    try {
        raw = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad config file: ") + e.what());
    }
    for (const auto& s : sets) experiment::apply_override(raw, s);
    if (!raw.contains("sweep") || !raw.at("sweep").is_object() || raw.at("sweep").empty())
        throw ValidationError("sweep needs a nonempty \"sweep\" section of {key: [values]}");
    const json axes = raw.at("sweep");
    auto base = experiment::ExperimentConfig::load(config_path, sets);

    if (parallel <= 1) {
        auto rows = experiment::run_sweep(base, axes);
        std::cout << experiment::format_sweep_table(rows);
        return 0;
    }

    std::vector<std::string> warnings;
    auto points = experiment::expand_grid(base.to_json(), axes, &warnings);
    for (const auto& w : warnings) std::cerr << "[sweep] " << w << "\n";

    std::vector<fs::path> run_dirs(points.size());
    std::vector<int> status(points.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sweep_%03zu", i);
        run_dirs[i] = base.out_dir / name;
        points[i]["paths"]["out_dir"] = run_dirs[i].string();
        fs::create_directories(run_dirs[i]);
        write_file_atomic(run_dirs[i] / "config.json", points[i].dump(2) + "\n");
    }
    std::mutex next_mutex;
    std::size_t next = 0;
    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= points.size()) return;
                i = next++;
            }
            const std::string cmd = "'" + self_exe + "' pipeline --config '" +
                                    (run_dirs[i] / "config.json").string() + "' >'" +
                                    (run_dirs[i] / "stdout.log").string() + "' 2>'" +
                                    (run_dirs[i] / "stderr.log").string() + "'";
            status[i] = std::system(cmd.c_str());
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(parallel, static_cast<int>(points.size())); ++t)
        pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<experiment::SweepRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (status[i] != 0)
            throw NumericError("sweep run failed: " + run_dirs[i].string() + " (see stderr.log)");
        auto report =
            metrics::parse_report_json(read_file(run_dirs[i] / "eval" / "report.json"));
        experiment::SweepRow row;
        row.config = points[i];
        row.run_dir = run_dirs[i];
        row.miou = report.miou;
        row.overall_f1 = report.overall_f1;
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.miou > b.miou; });
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"run_dir", r.run_dir.string()},
                       {"miou", r.miou},
                       {"overall_f1", r.overall_f1},
                       {"config", r.config}});
    write_file_atomic(base.out_dir / "sweep_results.json", out.dump(2) + "\n");
    write_file_atomic(base.out_dir / "sweep_results.txt", experiment::format_sweep_table(rows));
    std::cout << experiment::format_sweep_table(rows);
    return 0;
}

std::string self_path(const char* argv0) {
    std::error_code ec;
    auto p = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) return p.string();
    return argv0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage unpaired translation + adaptation pipeline for remote sensing tiles"};
    app.require_subcommand(1);

    TileArgs tile_args;
    auto* tile = app.add_subcommand("tile", "cut rasters into a tile manifest");
    tile->add_option("--images", tile_args.images_dir, "directory of .png rasters")->required();
    tile->add_option("--labels", tile_args.labels_dir, "directory of color label rasters");
    tile->add_option("--domain", tile_args.domain_file, "domain spec json")->required();
    tile->add_option("--out", tile_args.out_dir, "output dataset directory")->required();
    tile->add_option("--stride", tile_args.stride, "tile stride in px (default: tile size)");
    tile->add_option("--val-frac", tile_args.val_frac, "fraction of tiles tagged val");
    tile->add_option("--test-frac", tile_args.test_frac, "fraction of tiles tagged test");
    tile->add_option("--seed", tile_args.seed, "split assignment seed");

    std::string synth_config, synth_out;
    bool synth_print_default = false;
    auto* synth = app.add_subcommand("synth", "render the two-domain synthetic corpus");
    synth->add_option("--config", synth_config, "scene config json (default: built-in scene)");
    synth->add_option("--out", synth_out, "output directory");
    synth->add_flag("--print-default", synth_print_default, "print the built-in scene config");

    std::string config_path;
    std::vector<std::string> sets;
    int parallel = 1;
    const char* stage_names[] = {"train-a", "translate", "train-b", "eval", "pipeline", "sweep"};
    const char* stage_help[] = {"stage-a translation training",
                                "translate the source tiles with the stage-a generator",
                                "stage-b segmentation training",
                                "evaluate the best stage-b checkpoint",
                                "all four stages in order",
                                "grid sweep over config axes"};
    std::vector<CLI::App*> stages;
    for (int i = 0; i < 6; ++i) {
        auto* sub = app.add_subcommand(stage_names[i], stage_help[i]);
        sub->add_option("--config", config_path, "experiment config json")->required();
        sub->add_option("--set", sets, "dotted-key override, e.g. stage_a.epochs=2");
        if (std::string(stage_names[i]) == "sweep")
            sub->add_option("--parallel", parallel, "max concurrent sweep runs");
        stages.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (tile->parsed()) return cmd_tile(tile_args);
        if (synth->parsed()) {
            if (!synth_print_default && synth_out.empty())
                throw ValidationError("synth needs --out (or --print-default)");
            return cmd_synth(synth_config, synth_out, synth_print_default);
        }
        if (stages[5]->parsed()) return cmd_sweep(config_path, sets, parallel, self_path(argv[0]));

        auto cfg = experiment::ExperimentConfig::load(config_path, sets);
        if (stages[0]->parsed()) {
            experiment::run_train_a(cfg);
        } else if (stages[1]->parsed()) {
            experiment::run_translate(cfg);
        } else if (stages[2]->parsed()) {
            experiment::run_train_b(cfg);
        } else if (stages[3]->parsed()) {
            auto report = experiment::run_eval(cfg);
            std::cout << metrics::format_report(report, metrics::ReportStyle::paper_table);
        } else if (stages[4]->parsed()) {
            auto report = experiment::run_pipeline(cfg);
            std::cout << metrics::format_report(report, metrics::ReportStyle::paper_table);
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error category=validation message=" << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error category=io message=" << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error category=format message=" << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "error category=numeric message=" << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error category=internal message=" << e.what() << "\n";
        return 1;
    }
}
