#include "rdg/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

namespace rdg::experiment {

using nlohmann::json;
using datakit::Split;
using datakit::TileManifest;

void AblationSwitches::validate() const {
    if (resize_placement != "in_network" && resize_placement != "pre" && resize_placement != "none")
        throw ValidationError("resize_placement must be in_network|pre|none, got " + resize_placement);
}

// ---------------------------------------------------------------- config I/O

namespace {

void get_if(const json& j, const char* key, double& out) {
    if (j.contains(key)) out = j.at(key).get<double>();
}
void get_if(const json& j, const char* key, int& out) {
    if (j.contains(key)) out = j.at(key).get<int>();
}
void get_if(const json& j, const char* key, bool& out) {
    if (j.contains(key)) out = j.at(key).get<bool>();
}
void get_if(const json& j, const char* key, std::string& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
}
void get_if(const json& j, const char* key, std::uint64_t& out) {
    if (j.contains(key)) out = j.at(key).get<std::uint64_t>();
}

std::string read_git_revision() {
    fs::path head = ".git/HEAD";
    try {
        if (!fs::exists(head)) return "unknown";
        std::string txt = read_file(head);
        while (!txt.empty() && (txt.back() == '\n' || txt.back() == '\r')) txt.pop_back();
        if (txt.rfind("ref: ", 0) == 0) {
            fs::path ref = fs::path(".git") / txt.substr(5);
            if (!fs::exists(ref)) return "unknown";
            std::string sha = read_file(ref);
            while (!sha.empty() && (sha.back() == '\n' || sha.back() == '\r')) sha.pop_back();
            return sha;
        }
        return txt;
    } catch (...) {
        return "unknown";
    }
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["paths"] = {{"source_manifest", source_manifest.string()},
                  {"target_manifest", target_manifest.string()},
                  {"val_manifest", val_manifest.string()},
                  {"out_dir", out_dir.string()}};
    j["stage_a"] = {{"epochs", stage_a.epochs},
                    {"batch_size", stage_a.batch_size},
                    {"critic_iters", stage_a.critic_iters},
                    {"lr_gen", stage_a.lr_gen},
                    {"lr_disc", stage_a.lr_disc},
                    {"lambda_cyc", stage_a.weights.lambda_cyc},
                    {"lambda_adv", stage_a.weights.lambda_adv},
                    {"gp_weight", stage_a.weights.gp_weight},
                    {"k_init", stage_a.gen.k_init},
                    {"gen_base_width", stage_a.gen.base_width},
                    {"gen_depth", stage_a.gen.depth},
                    {"disc_base_width", stage_a.disc_base_width},
                    {"scale_rel_tol", stage_a.scale_rel_tol},
                    {"log_every", stage_a.log_every}};
    j["stage_b"] = {{"epochs", stage_b.epochs},
                    {"batch_size", stage_b.batch_size},
                    {"lr", stage_b.lr},
                    {"lambda_seg", stage_b.weights.lambda_seg},
                    {"lambda_adv_o", stage_b.weights.lambda_adv_o},
                    {"encoder", nets::encoder_scale_name(stage_b.encoder)},
                    {"disc_base_width", stage_b.disc_base_width},
                    {"plateau_factor", stage_b.plateau_factor},
                    {"plateau_patience", stage_b.plateau_patience},
                    {"min_lr", stage_b.min_lr},
                    {"nonsaturating_adv", stage_b.nonsaturating_adv},
                    {"log_every", stage_b.log_every}};
    j["ablation"] = {{"resize_placement", ablation.resize_placement},
                     {"resizer_fn", nets::resizer_name(ablation.resizer_fn)},
                     {"backbone", nets::backbone_name(ablation.backbone)},
                     {"residual", ablation.residual ? "on" : "off"},
                     {"k_mode", nets::k_mode_name(ablation.k_mode)}};
    j["metrics"] = {{"strict_absent", strict_absent_metrics}, {"split", report_split}};
    j["seed"] = seed;
    j["deterministic"] = deterministic;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    try {
        ExperimentConfig cfg;
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            std::string s;
            if (p.contains("source_manifest")) cfg.source_manifest = p.at("source_manifest").get<std::string>();
            if (p.contains("target_manifest")) cfg.target_manifest = p.at("target_manifest").get<std::string>();
            if (p.contains("val_manifest")) cfg.val_manifest = p.at("val_manifest").get<std::string>();
            if (p.contains("out_dir")) cfg.out_dir = p.at("out_dir").get<std::string>();
            (void)s;
        }
        if (j.contains("stage_a")) {
            const auto& a = j.at("stage_a");
            get_if(a, "epochs", cfg.stage_a.epochs);
            get_if(a, "batch_size", cfg.stage_a.batch_size);
            get_if(a, "critic_iters", cfg.stage_a.critic_iters);
            get_if(a, "lr_gen", cfg.stage_a.lr_gen);
            get_if(a, "lr_disc", cfg.stage_a.lr_disc);
            get_if(a, "lambda_cyc", cfg.stage_a.weights.lambda_cyc);
            get_if(a, "lambda_adv", cfg.stage_a.weights.lambda_adv);
            get_if(a, "gp_weight", cfg.stage_a.weights.gp_weight);
            get_if(a, "k_init", cfg.stage_a.gen.k_init);
            get_if(a, "gen_base_width", cfg.stage_a.gen.base_width);
            get_if(a, "gen_depth", cfg.stage_a.gen.depth);
            get_if(a, "disc_base_width", cfg.stage_a.disc_base_width);
            get_if(a, "scale_rel_tol", cfg.stage_a.scale_rel_tol);
            get_if(a, "log_every", cfg.stage_a.log_every);
        }
        if (j.contains("stage_b")) {
            const auto& b = j.at("stage_b");
            get_if(b, "epochs", cfg.stage_b.epochs);
            get_if(b, "batch_size", cfg.stage_b.batch_size);
            get_if(b, "lr", cfg.stage_b.lr);
            get_if(b, "lambda_seg", cfg.stage_b.weights.lambda_seg);
            get_if(b, "lambda_adv_o", cfg.stage_b.weights.lambda_adv_o);
            std::string enc = nets::encoder_scale_name(cfg.stage_b.encoder);
            get_if(b, "encoder", enc);
            cfg.stage_b.encoder = nets::encoder_scale_from_name(enc);
            get_if(b, "disc_base_width", cfg.stage_b.disc_base_width);
            get_if(b, "plateau_factor", cfg.stage_b.plateau_factor);
            get_if(b, "plateau_patience", cfg.stage_b.plateau_patience);
            get_if(b, "min_lr", cfg.stage_b.min_lr);
            get_if(b, "nonsaturating_adv", cfg.stage_b.nonsaturating_adv);
            get_if(b, "log_every", cfg.stage_b.log_every);
        }
        if (j.contains("ablation")) {
            const auto& ab = j.at("ablation");
            get_if(ab, "resize_placement", cfg.ablation.resize_placement);
            std::string rz = nets::resizer_name(cfg.ablation.resizer_fn);
            get_if(ab, "resizer_fn", rz);
            cfg.ablation.resizer_fn = nets::resizer_from_name(rz);
            std::string bb = nets::backbone_name(cfg.ablation.backbone);
            get_if(ab, "backbone", bb);
            cfg.ablation.backbone = nets::backbone_from_name(bb);
            std::string res = cfg.ablation.residual ? "on" : "off";
            get_if(ab, "residual", res);
            if (res != "on" && res != "off") throw ValidationError("residual must be on|off");
            cfg.ablation.residual = res == "on";
            std::string km = nets::k_mode_name(cfg.ablation.k_mode);
            get_if(ab, "k_mode", km);
            cfg.ablation.k_mode = nets::k_mode_from_name(km);
        }
        if (j.contains("metrics")) {
            const auto& m = j.at("metrics");
            get_if(m, "strict_absent", cfg.strict_absent_metrics);
            get_if(m, "split", cfg.report_split);
        }
        get_if(j, "seed", cfg.seed);
        get_if(j, "deterministic", cfg.deterministic);
        cfg.ablation.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad experiment config: ") + e.what());
    }
}

namespace {

// Folds the ablation switches and shared run settings into the stage configs.
void finalize(ExperimentConfig& cfg) {
    cfg.ablation.validate();
    auto& gen = cfg.stage_a.gen;
    gen.backbone = cfg.ablation.backbone;
    gen.k_mode = cfg.ablation.k_mode;
    if (!cfg.ablation.residual) {
        gen.k_init = 0.0;
        gen.k_mode = nets::KMode::fixed;
    }
    if (cfg.ablation.resize_placement == "in_network") {
        gen.resizer = cfg.ablation.resizer_fn;
    } else {
        gen.resizer = nets::Resizer::none;
    }
    cfg.stage_a.enforce_scale_check = cfg.ablation.resize_placement != "none";

    cfg.stage_a.seed = derive_seed(cfg.seed, 0xA);
    cfg.stage_b.seed = derive_seed(cfg.seed, 0xB);
    cfg.stage_a.deterministic = cfg.deterministic;
    cfg.stage_b.deterministic = cfg.deterministic;
    cfg.stage_a.out_dir = cfg.stage_a_dir();
    cfg.stage_b.out_dir = cfg.stage_b_dir();
}

ExperimentConfig materialize(const json& j) {
    auto cfg = ExperimentConfig::from_json(j);
    finalize(cfg);
    return cfg;
}

void set_dotted(json& j, const std::string& dotted, const json& value) {
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        auto dot = dotted.find('.', start);
        std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw FormatError("bad override key: " + dotted);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace

void apply_override(json& j, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw FormatError("override must look like key.path=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;  // plain string
    }
    set_dotted(j, key, value);
}

ExperimentConfig ExperimentConfig::load(const fs::path& path,
                                        const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad config file: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    auto cfg = from_json(j);
    if (const char* root = std::getenv("RDG_OUTPUT_ROOT"); root && *root && cfg.out_dir.is_relative())
        cfg.out_dir = fs::path(root) / cfg.out_dir;
    finalize(cfg);
    return cfg;
}

void record_stage(const ExperimentConfig& cfg, const std::string& stage, const json& details) {
    const fs::path path = cfg.out_dir / "run.json";
    json record;
    if (fs::exists(path)) {
        try {
            record = json::parse(read_file(path));
        } catch (const json::exception&) {
            record = json::object();
        }
    }
    record["config"] = cfg.to_json();
    record["revision"] = read_git_revision();
    record["seed"] = cfg.seed;
    record["stages"][stage] = details;
    fs::create_directories(cfg.out_dir);
    write_file_atomic(path, record.dump(2) + "\n");
}

// ---------------------------------------------------------------- pipeline

namespace {

void apply_determinism(const ExperimentConfig& cfg) {
    if (cfg.deterministic) {
        torch::set_num_threads(1);
        torch::manual_seed(cfg.seed);
    }
}

TileManifest manifest_subset(const TileManifest& m, Split split) {
    TileManifest out;
    out.domain = m.domain;
    out.base_dir = m.base_dir;
    out.tiles = m.subset(split);
    return out;
}

// Bilinear pre-resize of a manifest's images (labels: nearest) to out_px.
TileManifest pre_resize_manifest(const TileManifest& src, int out_px, const fs::path& out_dir) {
    TileManifest out;
    out.domain = src.domain;
    out.domain.name = src.domain.name + "_preresized";
    out.domain.tile_px = out_px;
    out.domain.gsd_cm = src.domain.gsd_cm * src.domain.tile_px / out_px;
    out.base_dir = out_dir;
    fs::create_directories(out_dir / "images");
    const bool labeled = !src.tiles.empty() && !src.tiles.front().label_path.empty();
    if (labeled) fs::create_directories(out_dir / "labels");
    std::size_t index = 0;
    for (const auto& rec : src.tiles) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.png", index++);
        auto x = datakit::to_unit_range(datakit::load_png(src.resolve(rec.image_path)));
        auto y = nets::resize_image(x, out_px, nets::Resizer::bilinear);
        datakit::save_png(out_dir / "images" / name, datakit::from_unit_range(y));
        auto trec = rec;
        trec.image_path = std::string("images/") + name;
        trec.label_path.clear();
        if (!rec.label_path.empty()) {
            auto ids = datakit::encode_labels(datakit::load_png(src.resolve(rec.label_path)),
                                              src.domain.palette);
            datakit::save_png(out_dir / "labels" / name,
                              datakit::decode_labels(datakit::resize_labels_nearest(ids, out_px),
                                                     src.domain.palette));
            trec.label_path = std::string("labels/") + name;
        }
        out.tiles.push_back(std::move(trec));
    }
    datakit::save_manifest(out, out_dir / "manifest.jsonl");
    return out;
}

void require_path(const fs::path& p, const std::string& key) {
    if (p.empty()) throw ValidationError("config sets no paths." + key);
}

// The manifest Stage A actually trains on (and translation reads from).
TileManifest stage_a_source(const ExperimentConfig& cfg) {
    require_path(cfg.source_manifest, "source_manifest");
    require_path(cfg.target_manifest, "target_manifest");
    auto src = datakit::load_manifest(cfg.source_manifest);
    if (cfg.ablation.resize_placement != "pre") return src;
    auto tgt = datakit::load_manifest(cfg.target_manifest);
    const fs::path dir = cfg.out_dir / "pre_resized";
    if (fs::exists(dir / "manifest.jsonl")) return datakit::load_manifest(dir / "manifest.jsonl");
    return pre_resize_manifest(src, tgt.domain.tile_px, dir);
}

}  // namespace

void run_train_a(const ExperimentConfig& cfg) {
    apply_determinism(cfg);
    auto src = stage_a_source(cfg);
    auto tgt = datakit::load_manifest(cfg.target_manifest);
    if (cfg.ablation.resize_placement == "none")
        std::cerr << "[stage_a] warning: resize disabled; domain scale compatibility "
                     "is not enforced for this run\n";
    train_a::StageATrainer trainer(cfg.stage_a, src, tgt);
    trainer.run();
    record_stage(cfg, "stage_a",
                 {{"checkpoint", (cfg.stage_a_dir() / "latest.ckpt").string()},
                  {"epochs", trainer.epochs_done()},
                  {"generator_steps", trainer.generator_steps()},
                  {"critic_steps", trainer.critic_steps()},
                  {"epoch_cycle_means", trainer.epoch_cycle_means()}});
}

TileManifest run_translate(const ExperimentConfig& cfg) {
    apply_determinism(cfg);
    const fs::path ckpt_path = cfg.stage_a_dir() / "latest.ckpt";
    if (!fs::exists(ckpt_path))
        throw ValidationError("no stage-a checkpoint at " + ckpt_path.string() +
                              "; run train-a first");
    auto archive = ckpt::Archive::load(ckpt_path);
    auto src = stage_a_source(cfg);
    auto manifest = train_a::translate_dataset(archive, src, train_a::Direction::s2t,
                                               cfg.translated_dir());
    record_stage(cfg, "translate",
                 {{"manifest", (cfg.translated_dir() / "manifest.jsonl").string()},
                  {"tiles", manifest.tiles.size()}});
    return manifest;
}

void run_train_b(const ExperimentConfig& cfg) {
    apply_determinism(cfg);
    const fs::path translated_manifest = cfg.translated_dir() / "manifest.jsonl";
    if (!fs::exists(translated_manifest))
        throw ValidationError("no translated manifest at " + translated_manifest.string() +
                              "; run translate first");
    auto translated = datakit::load_manifest(translated_manifest);
    require_path(cfg.target_manifest, "target_manifest");
    auto target = datakit::load_manifest(cfg.target_manifest);
    auto val = cfg.val_manifest.empty() ? target : datakit::load_manifest(cfg.val_manifest);
    train_b::StageBTrainer trainer(cfg.stage_b, translated, target, val);
    trainer.run();
    record_stage(cfg, "stage_b",
                 {{"checkpoint", (cfg.stage_b_dir() / "best.ckpt").string()},
                  {"epochs", trainer.epochs_done()},
                  {"best_val_miou", trainer.best_miou()},
                  {"val_history", trainer.val_history()},
                  {"osa_enabled", trainer.osa_enabled()}});
}

metrics::MetricsReport run_eval(const ExperimentConfig& cfg) {
    apply_determinism(cfg);
    const fs::path best = cfg.stage_b_dir() / "best.ckpt";
    if (!fs::exists(best))
        throw ValidationError("no stage-b checkpoint at " + best.string() + "; run train-b first");
    auto archive = ckpt::Archive::load(best);
    require_path(cfg.target_manifest, "target_manifest");
    auto target = datakit::load_manifest(cfg.target_manifest);
    auto subset = manifest_subset(target, datakit::split_from_name(cfg.report_split));
    if (subset.tiles.empty())
        throw ValidationError("target manifest has no tiles in split " + cfg.report_split);
    auto report = train_b::evaluate(archive, subset, cfg.strict_absent_metrics);

    fs::create_directories(cfg.eval_dir());
    write_file_atomic(cfg.eval_dir() / "report.txt",
                      metrics::format_report(report, metrics::ReportStyle::paper_table));
    write_file_atomic(cfg.eval_dir() / "report.json",
                      metrics::format_report(report, metrics::ReportStyle::json));
    write_file_atomic(cfg.eval_dir() / "report.csv",
                      metrics::format_report(report, metrics::ReportStyle::csv));
    record_stage(cfg, "eval",
                 {{"split", cfg.report_split},
                  {"miou", report.miou},
                  {"overall_f1", report.overall_f1},
                  {"report", cfg.eval_dir().string()}});
    return report;
}

metrics::MetricsReport run_pipeline(const ExperimentConfig& cfg) {
    run_train_a(cfg);
    run_translate(cfg);
    run_train_b(cfg);
    return run_eval(cfg);
}

// ---------------------------------------------------------------- sweeps

std::vector<json> expand_grid(const json& base_config, const json& axes,
                              std::vector<std::string>* warnings) {
    if (!axes.is_object()) throw FormatError("sweep axes must be an object of key -> [values]");
    std::vector<std::pair<std::string, std::vector<json>>> dims;
    for (const auto& [key, values] : axes.items()) {
        if (!values.is_array() || values.empty())
            throw FormatError("sweep axis " + key + " must be a nonempty array");
        dims.emplace_back(key, std::vector<json>(values.begin(), values.end()));
    }
    std::sort(dims.begin(), dims.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<json> points;
    std::set<std::string> seen;
    std::vector<std::size_t> idx(dims.size(), 0);
    while (true) {
        json point = base_config;
        for (std::size_t d = 0; d < dims.size(); ++d)
            set_dotted(point, dims[d].first, dims[d].second[idx[d]]);
        auto key = point.dump();
        if (seen.insert(key).second) {
            points.push_back(std::move(point));
        } else if (warnings) {
            std::string w = "duplicate grid point skipped:";
            for (std::size_t d = 0; d < dims.size(); ++d)
                w += " " + dims[d].first + "=" + dims[d].second[idx[d]].dump();
            warnings->push_back(w);
        }
        std::size_t d = 0;
        for (; d < dims.size(); ++d) {
            if (++idx[d] < dims[d].second.size()) break;
            idx[d] = 0;
        }
        if (d == dims.size()) break;
        if (dims.empty()) break;
    }
    return points;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const json& axes) {
    std::vector<std::string> warnings;
    auto points = expand_grid(base.to_json(), axes, &warnings);
    for (const auto& w : warnings) std::cerr << "[sweep] " << w << "\n";

    std::vector<SweepRow> rows;
    int index = 0;
    for (auto& point : points) {
        char name[32];
        std::snprintf(name, sizeof(name), "sweep_%03d", index++);
        set_dotted(point, "paths.out_dir", (base.out_dir / name).string());
        auto cfg = materialize(point);
        auto report = run_pipeline(cfg);
        SweepRow row;
        row.config = point;
        row.run_dir = cfg.out_dir;
        row.miou = report.miou;
        row.overall_f1 = report.overall_f1;
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const SweepRow& a, const SweepRow& b) { return a.miou > b.miou; });

    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"run_dir", r.run_dir.string()},
                       {"miou", r.miou},
                       {"overall_f1", r.overall_f1},
                       {"config", r.config}});
    fs::create_directories(base.out_dir);
    write_file_atomic(base.out_dir / "sweep_results.json", out.dump(2) + "\n");
    write_file_atomic(base.out_dir / "sweep_results.txt", format_sweep_table(rows));
    return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "rank\tmiou\toverall_f1\trun_dir\n";
    int rank = 1;
    for (const auto& r : rows) {
        char line[512];
        std::snprintf(line, sizeof(line), "%d\t%.2f\t%.2f\t%s\n", rank++, r.miou * 100.0,
                      r.overall_f1 * 100.0, r.run_dir.string().c_str());
        out << line;
    }
    return out.str();
}

}  // namespace rdg::experiment
