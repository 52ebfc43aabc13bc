#ifndef RDG_EXPERIMENT_HPP
#define RDG_EXPERIMENT_HPP

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdg/common.hpp"
#include "rdg/datakit.hpp"
#include "rdg/metrics.hpp"
#include "rdg/train_a.hpp"
#include "rdg/train_b.hpp"

namespace rdg::experiment {

// The switch space of the translation ablations.
struct AblationSwitches {
    std::string resize_placement = "in_network";  // in_network | pre | none
    nets::Resizer resizer_fn = nets::Resizer::bilinear;
    nets::Backbone backbone = nets::Backbone::unet;
    bool residual = true;
    nets::KMode k_mode = nets::KMode::fixed;

    void validate() const;
};

struct ExperimentConfig {
    fs::path source_manifest;
    fs::path target_manifest;
    fs::path val_manifest;  // empty -> target manifest's val split
    fs::path out_dir;
    train_a::StageAConfig stage_a;
    train_b::StageBConfig stage_b;
    AblationSwitches ablation;
    bool strict_absent_metrics = false;
    std::string report_split = "test";
    std::uint64_t seed = 1;
    bool deterministic = true;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    // Parses the file, applies dotted-key overrides ("stage_a.epochs=2"),
    // resolves out_dir against $RDG_OUTPUT_ROOT, and folds the ablation
    // switches into the stage configs.
    static ExperimentConfig load(const fs::path& path,
                                 const std::vector<std::string>& overrides = {});

    fs::path stage_a_dir() const { return out_dir / "stage_a"; }
    fs::path translated_dir() const { return out_dir / "translated"; }
    fs::path stage_b_dir() const { return out_dir / "stage_b"; }
    fs::path eval_dir() const { return out_dir / "eval"; }
};

// Sets a value at a dotted path; the value text is parsed as JSON when
// possible, kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Self-describing run artifact: merged-in stage entries accumulate in
// out_dir/run.json.
void record_stage(const ExperimentConfig& cfg, const std::string& stage,
                  const nlohmann::json& details);

// Pipeline stages. Each returns after writing its artifacts; each resumes
// from its latest checkpoint when re-run.
void run_train_a(const ExperimentConfig& cfg);
datakit::TileManifest run_translate(const ExperimentConfig& cfg);
void run_train_b(const ExperimentConfig& cfg);
metrics::MetricsReport run_eval(const ExperimentConfig& cfg);
metrics::MetricsReport run_pipeline(const ExperimentConfig& cfg);

// Cartesian grid over {dotted key -> [values]}; duplicate points are dropped
// with a note in `warnings`.
std::vector<nlohmann::json> expand_grid(const nlohmann::json& base_config,
                                        const nlohmann::json& axes,
                                        std::vector<std::string>* warnings = nullptr);

struct SweepRow {
    nlohmann::json config;
    fs::path run_dir;
    double miou = 0.0;
    double overall_f1 = 0.0;
};

// Runs every grid point sequentially; rows come back sorted by mIoU (desc).
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const nlohmann::json& axes);

std::string format_sweep_table(const std::vector<SweepRow>& rows);

}  // namespace rdg::experiment

#endif
