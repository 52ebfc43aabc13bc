// Acceptance harness: one pass/fail line per criterion, exit code = #failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdg/datakit.hpp"
#include "rdg/experiment.hpp"
#include "rdg/losses.hpp"
#include "rdg/metrics.hpp"
#include "rdg/nets.hpp"
#include "rdg/train_a.hpp"
#include "rdg/train_b.hpp"

using namespace rdg;
using datakit::SyntheticSceneConfig;
using datakit::TileManifest;
using nlohmann::json;

namespace {

// Pinned tolerances.
constexpr double kClosedFormTol = 1e-6;
constexpr double kGradCheckTol = 1e-3;   // relative, central differences
constexpr double kIdentityTol = 1e-6;
constexpr double kF1IouIdentityTol = 1e-9;
constexpr int kOracleTrials = 200;
// Single-seed smoke-scale ablations: the in-network and pre-resize arms train
// on nearly identical effective data (residual k=1), so their ordering carries
// run-to-run noise; the collapse gates (no-resize, no-residual) stay strict.
constexpr double kArmNoiseSlack = 0.02;
constexpr std::uint64_t kSeed = 20220614;

std::string g_cli;  // path to the command-line binary (argv[1])

fs::path work_root() {
    auto p = fs::temp_directory_path() / "rdg_acceptance";
    fs::create_directories(p);
    return p;
}

fs::path fresh_dir(const std::string& leaf) {
    auto p = work_root() / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Failure {
    std::string detail;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

void require_close(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol))
        throw Failure{what + ": got " + std::to_string(got) + ", want " + std::to_string(want)};
}

double item(const torch::Tensor& t) { return t.item<double>(); }

// ------------------------------------------------------------- criterion 1

std::string criterion_losses() {
    using namespace rdg::losses;
    auto real = torch::full({4}, 2.0, torch::kFloat64);
    auto fake = torch::full({4}, -1.0, torch::kFloat64);
    require_close(item(adv_loss_wgan(real, fake)), 3.0, kClosedFormTol, "wgan 2/-1");
    auto same = torch::full({5}, 0.3, torch::kFloat64);
    require_close(item(adv_loss_wgan(same, same)), 0.0, kClosedFormTol, "wgan equal scores");

    // linear critic: per-sample gradient of all ones, norm sqrt(N)
    auto critic = [](const torch::Tensor& x) { return x.flatten(1).sum(1); };
    auto a = torch::rand({2, 3, 4, 4}, torch::kFloat64);
    auto b = torch::rand({2, 3, 4, 4}, torch::kFloat64);
    const double n = 3 * 4 * 4;
    require_close(item(gradient_penalty(critic, a, b, 10.0, 5)),
                  10.0 * std::pow(std::sqrt(n) - 1.0, 2.0), kClosedFormTol, "gp linear critic");
    auto flat = [](const torch::Tensor& x) { return x.flatten(1).sum(1) * 0.0; };
    require_close(item(gradient_penalty(flat, a, b, 10.0, 5)), 10.0, kClosedFormTol,
                  "gp constant critic");
    require_close(item(gradient_penalty(critic, a, b, 0.0)), 0.0, kClosedFormTol, "gp weight 0");

    require_close(item(cycle_loss(a, a, b, b)), 0.0, kClosedFormTol, "cycle perfect");
    require_close(item(cycle_loss(a, a + 0.5, b, b)), 0.5, kClosedFormTol, "cycle offset");

    StageAWeights wa;
    require_close(item(stage_a_total(torch::tensor(1.0), torch::tensor(2.0), torch::tensor(0.5), wa)),
                  8.0, kClosedFormTol, "stage-a total");

    auto half = torch::full({2, 1, 3, 3}, 0.5, torch::kFloat64);
    require_close(item(osa_disc_loss(half, half)), 2.0 * std::log(2.0), kClosedFormTol,
                  "osa 0.5/0.5");
    auto uniform = torch::zeros({1, 6, 4, 4}, torch::kFloat64);
    auto labels = torch::randint(0, 6, {1, 4, 4}, torch::kInt64);
    require_close(item(seg_ce_loss(uniform, labels)), std::log(6.0), kClosedFormTol, "ce log6");
    require_close(item(seg_adv_loss(half)), std::log(0.5), kClosedFormTol, "seg adv 0.5");
    StageBWeights wb;
    require_close(item(stage_b_total(torch::tensor(1.0), torch::tensor(-0.693), wb)), 0.98614,
                  kClosedFormTol, "stage-b total");

    // gradient-penalty finite-difference check on a tiny critic
    torch::manual_seed(3);
    auto weight = torch::randn({1, 3, 3, 3}, torch::kFloat64).set_requires_grad(true);
    auto tiny = [&weight](const torch::Tensor& x) {
        return torch::nn::functional::conv2d(x, weight).flatten(1).sum(1);
    };
    auto real2 = torch::rand({2, 3, 3, 3}, torch::kFloat64);
    auto fake2 = torch::rand({2, 3, 3, 3}, torch::kFloat64);
    auto gp = gradient_penalty(tiny, real2, fake2, 10.0, 11);
    gp.backward();
    auto analytic = weight.grad().clone().flatten();
    const double h = 1e-5;
    double worst = 0.0;
    for (std::int64_t i : {0L, 9L, 17L, 26L}) {
        auto probe = [&](double delta) {
            auto w = weight.detach().clone();
            w.flatten()[i] += delta;
            auto fn = [&w](const torch::Tensor& x) {
                return torch::nn::functional::conv2d(x, w).flatten(1).sum(1);
            };
            return item(gradient_penalty(fn, real2, fake2, 10.0, 11));
        };
        const double numeric = (probe(h) - probe(-h)) / (2.0 * h);
        const double exact = analytic[i].item<double>();
        worst = std::max(worst, std::abs(numeric - exact) / std::max(1.0, std::abs(exact)));
    }
    require(worst < kGradCheckTol, "gp finite-difference worst rel err " + std::to_string(worst));
    return "closed forms within 1e-6; gradient check rel err " + std::to_string(worst);
}

// ------------------------------------------------------------- criterion 2

std::string criterion_identities() {
    // zero backbone, k = 1: forward equals plain bilinear resize
    nets::ResiGeneratorConfig cfg;
    cfg.in_px = 64;
    cfg.out_px = 32;
    cfg.base_width = 4;
    cfg.depth = 3;
    cfg.k_init = 1.0;
    torch::manual_seed(1);
    auto g = nets::build_resi_generator(cfg);
    for (auto& p : g->named_parameters())
        if (p.key().rfind("backbone.", 0) == 0) {
            torch::NoGradGuard ng;
            p.value().zero_();
        }
    g->eval();
    auto x = torch::rand({2, 3, 64, 64}) * 2.0 - 1.0;
    auto got = g->forward(x);
    auto want = nets::resize_image(x, 32, nets::Resizer::bilinear);
    const double ident_err = item((got - want).abs().max());
    require(ident_err < kIdentityTol, "zero-backbone identity err " + std::to_string(ident_err));

    // bilinear linearity and constant preservation
    auto u = torch::rand({1, 3, 16, 16});
    auto v = torch::rand({1, 3, 16, 16});
    auto lin = nets::resize_image(u * 2.0 + v * 3.0, 32, nets::Resizer::bilinear);
    auto parts = nets::resize_image(u, 32, nets::Resizer::bilinear) * 2.0 +
                 nets::resize_image(v, 32, nets::Resizer::bilinear) * 3.0;
    const double lin_err = item((lin - parts).abs().max());
    require(lin_err < kIdentityTol, "bilinear linearity err " + std::to_string(lin_err));
    auto constant = torch::full({1, 3, 16, 16}, 0.7);
    const double const_err =
        item((nets::resize_image(constant, 48, nets::Resizer::bilinear) - 0.7).abs().max());
    require(const_err < kIdentityTol, "bilinear constant err " + std::to_string(const_err));

    // nearest value-set closure on an index-like map
    auto ids = torch::randint(0, 6, {1, 1, 37, 37}, torch::kFloat32);
    auto shrunk = nets::resize_image(ids, 13, nets::Resizer::nearest);
    std::set<float> in_vals, out_vals;
    auto ia = ids.flatten();
    auto oa = shrunk.flatten();
    for (std::int64_t i = 0; i < ia.size(0); ++i) in_vals.insert(ia[i].item<float>());
    for (std::int64_t i = 0; i < oa.size(0); ++i) out_vals.insert(oa[i].item<float>());
    for (float vv : out_vals)
        require(in_vals.count(vv) == 1, "nearest closure: new value appeared");
    return "identity/linearity/constancy within 1e-6; nearest closed over values";
}

// ------------------------------------------------------------- criterion 3

std::string criterion_metrics_oracle() {
    std::mt19937_64 rng(kSeed);
    double worst_identity = 0.0;
    for (int trial = 0; trial < kOracleTrials; ++trial) {
        const int classes = 2 + static_cast<int>(rng() % 3);
        const int side = 1 + static_cast<int>(rng() % 8);
        const std::size_t n = static_cast<std::size_t>(side) * side;
        std::vector<std::int32_t> truth(n), pred(n);
        for (auto& v : truth) v = static_cast<std::int32_t>(rng() % classes);
        for (auto& v : pred) v = static_cast<std::int32_t>(rng() % classes);
        auto cm = metrics::confusion(truth, pred, classes);
        auto iou = metrics::iou_per_class(cm);
        auto f1 = metrics::f1_per_class(cm);
        for (int c = 0; c < classes; ++c) {
            std::size_t inter = 0, in_t = 0, in_p = 0;
            for (std::size_t i = 0; i < n; ++i) {
                inter += truth[i] == c && pred[i] == c;
                in_t += truth[i] == c;
                in_p += pred[i] == c;
            }
            const std::size_t uni = in_t + in_p - inter;
            const double ref_iou = uni == 0 ? 1.0 : double(inter) / double(uni);
            const double ref_f1 =
                in_t + in_p == 0 ? 1.0 : 2.0 * double(inter) / double(in_t + in_p);
            require(iou[c] == ref_iou, "IoU differs from set oracle");
            require(f1[c] == ref_f1, "F1 differs from set oracle");
            if (uni != 0)
                worst_identity =
                    std::max(worst_identity, std::abs(f1[c] - 2.0 * iou[c] / (1.0 + iou[c])));
        }
    }
    require(worst_identity < kF1IouIdentityTol,
            "F1-IoU identity err " + std::to_string(worst_identity));
    return "200 random maps match the set oracle exactly; identity err < 1e-9";
}

// ------------------------------------------------------------- data helpers

SyntheticSceneConfig equal_scale_scene(int train_src, int train_tgt, int val_tgt, int test_tgt) {
    auto cfg = datakit::default_synthetic_config();
    cfg.source.tile_px = 64;
    cfg.source.gsd_cm = 36.0;
    cfg.target.tile_px = 64;
    cfg.target.gsd_cm = 36.0;
    cfg.source_counts = {train_src, 0, 0};
    cfg.target_counts = {train_tgt, val_tgt, test_tgt};
    cfg.seed = kSeed;
    return cfg;
}

// ------------------------------------------------------------- criterion 4

std::string criterion_schedule() {
    auto dir = fresh_dir("schedule");
    auto [src, tgt] = datakit::generate_synthetic_pair(equal_scale_scene(40, 4, 0, 0), dir / "data");

    train_a::StageAConfig cfg;
    cfg.gen.base_width = 4;
    cfg.gen.depth = 3;
    cfg.disc_base_width = 4;
    cfg.epochs = 1;
    cfg.critic_iters = 5;
    cfg.seed = kSeed;
    cfg.deterministic = true;
    cfg.out_dir = dir / "out";
    train_a::StageATrainer t(cfg, src, tgt);
    t.run();
    require(t.generator_steps() == 40, "generator steps: " + std::to_string(t.generator_steps()));
    require(t.critic_steps() == 5 * t.generator_steps(),
            "critic/generator ratio: " + std::to_string(t.critic_steps()) + "/" +
                std::to_string(t.generator_steps()));
    require(t.critic_steps() + t.generator_steps() >= 200, "smoke run shorter than 200 steps");

    // parameter isolation, stage A
    auto x_s = t.sample_source();
    auto x_t = t.sample_target();
    auto g_hash = nets::parameter_hash(*t.gen_s2t());
    t.critic_step(x_s, x_t);
    require(nets::parameter_hash(*t.gen_s2t()) == g_hash, "critic step moved the generator");
    auto d_hash = nets::parameter_hash(*t.disc_t());
    t.generator_step(x_s, x_t);
    require(nets::parameter_hash(*t.disc_t()) == d_hash, "generator step moved the critic");

    // parameter isolation, stage B
    train_b::StageBConfig bcfg;
    bcfg.encoder = nets::EncoderScale::tiny;
    bcfg.disc_base_width = 4;
    bcfg.batch_size = 2;
    bcfg.epochs = 0;
    bcfg.seed = kSeed;
    bcfg.out_dir = dir / "out_b";
    train_b::StageBTrainer tb(bcfg, src, tgt, tgt);
    datakit::TileTensorSet tr(src, datakit::Split::train), tg(tgt, datakit::Split::train);
    auto xb = tr.image_batch({0, 1});
    auto yb = tr.label_batch({0, 1});
    auto xt = tg.image_batch({0, 1});
    auto seg_hash = nets::parameter_hash(*tb.segmenter());
    tb.disc_step(xb, xt);
    require(nets::parameter_hash(*tb.segmenter()) == seg_hash, "D_out step moved the segmenter");
    auto dout_hash = nets::parameter_hash(*tb.disc());
    tb.seg_step(xb, yb, xt);
    require(nets::parameter_hash(*tb.disc()) == dout_hash, "segmenter step moved D_out");

    return "40 generator / 200 critic steps (5:1); parameter isolation holds in both stages";
}

// ------------------------------------------------------------- criterion 5

experiment::ExperimentConfig arm_config(const fs::path& data, const fs::path& out,
                                        const std::string& placement, bool residual) {
    experiment::ExperimentConfig cfg;
    cfg.source_manifest = data / "source" / "manifest.jsonl";
    cfg.target_manifest = data / "target" / "manifest.jsonl";
    cfg.out_dir = out;
    cfg.seed = kSeed;
    cfg.deterministic = true;
    cfg.report_split = "test";

    cfg.stage_a.epochs = 30;
    cfg.stage_a.gen.base_width = 8;
    cfg.stage_a.gen.depth = 4;
    cfg.stage_a.disc_base_width = 8;
    cfg.stage_a.log_every = 200;

    // pure supervised stage B isolates the translation ablation axes
    cfg.stage_b.weights.lambda_adv_o = 0.0;
    cfg.stage_b.epochs = 150;
    cfg.stage_b.encoder = nets::EncoderScale::tiny;
    cfg.stage_b.disc_base_width = 8;
    cfg.stage_b.batch_size = 8;
    cfg.stage_b.log_every = 200;

    cfg.ablation.resize_placement = placement;
    cfg.ablation.residual = residual;

    // fold the switches through the real config loader
    auto file = out;
    fs::create_directories(out);
    file /= "config.json";
    write_file_atomic(file, cfg.to_json().dump(2));
    return experiment::ExperimentConfig::load(file);
}

std::string criterion_scale_reproduction() {
    auto dir = fresh_dir("scale_arms");
    auto scene = datakit::default_synthetic_config();  // 128 @ 36 -> 64 @ 72
    scene.source_counts = {20, 0, 0};
    scene.target_counts = {20, 8, 24};
    scene.seed = kSeed;
    for (auto& obj : scene.objects) {
        if (obj.class_name == "car") {
            // vehicles resolvable at the coarse domain (10x5 px at 72 cm)
            obj.length_cm = 720.0;
            obj.width_cm = 360.0;
            obj.per_tile = 7.0;
            obj.texture_sigma = 3.0;
        }
        if (obj.class_name == "clutter_background") {
            // same color/texture/aspect as cars at twice the physical size, so
            // apparent pixel size is the only cue separating the two classes —
            // a segmenter trained at the wrong scale confuses them
            obj.length_cm = 1440.0;
            obj.width_cm = 720.0;
            obj.per_tile = 2.5;
            obj.color = {224.0, 222.0, 232.0};
            obj.texture_sigma = 3.0;
        }
    }
    datakit::generate_synthetic_pair(scene, dir / "data");

    auto run_arm = [&](const std::string& name, const std::string& placement, bool residual) {
        auto cfg = arm_config(dir / "data", dir / name, placement, residual);
        return experiment::run_pipeline(cfg);
    };
    auto in_net = run_arm("in_network", "in_network", true);
    auto no_rs = run_arm("no_resize", "none", true);
    auto pre_rs = run_arm("pre_resize", "pre", true);
    auto no_res = run_arm("residual_off", "in_network", false);

    const int car = 2;
    std::ostringstream detail;
    detail.precision(4);
    detail << "car IoU in_network " << in_net.iou[car] << " vs no_resize " << no_rs.iou[car]
           << " vs pre_resize " << pre_rs.iou[car] << "; mIoU residual on " << in_net.miou
           << " vs off " << no_res.miou;
    require(in_net.iou[car] > no_rs.iou[car],
            "car IoU: in-network resize did not beat no-resize (" + detail.str() + ")");
    require(in_net.iou[car] >= pre_rs.iou[car] - kArmNoiseSlack,
            "car IoU: in-network resize fell below pre-resize (" + detail.str() + ")");
    require(in_net.miou > no_res.miou,
            "mIoU: residual connection gave no gain (" + detail.str() + ")");
    return detail.str();
}

// ------------------------------------------------------------- criterion 6

std::string criterion_osa_wiring() {
    auto dir = fresh_dir("osa");
    auto [src, tgt] = datakit::generate_synthetic_pair(equal_scale_scene(8, 8, 2, 2), dir / "data");

    auto run_b = [&](double lambda_adv_o, const fs::path& out) {
        train_b::StageBConfig cfg;
        cfg.weights.lambda_adv_o = lambda_adv_o;
        cfg.encoder = nets::EncoderScale::tiny;
        cfg.disc_base_width = 4;
        cfg.batch_size = 4;
        cfg.epochs = 2;
        cfg.seed = kSeed;
        cfg.deterministic = true;
        cfg.log_every = 1;
        cfg.out_dir = out;
        train_b::StageBTrainer t(cfg, src, tgt, tgt);
        t.run();
        return t.best_miou();
    };
    const double with_osa = run_b(0.02, dir / "with");
    const double without = run_b(0.0, dir / "without");
    require(std::isfinite(with_osa) && std::isfinite(without), "non-finite validation metric");

    // the adversarial terms actually logged nonzero values
    auto log_text = read_file(dir / "with" / "loss_log.tsv");
    bool d_term = false, g_term = false;
    std::istringstream lines(log_text);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream f(line);
        std::string step, name, value;
        std::getline(f, step, '\t');
        std::getline(f, name, '\t');
        std::getline(f, value, '\t');
        if (name == "d_out_bce" && std::abs(std::stod(value)) > 0.0) d_term = true;
        if (name == "seg_adv" && std::abs(std::stod(value)) > 0.0) g_term = true;
    }
    require(d_term, "discriminator BCE term missing/zero in the loss log");
    require(g_term, "segmenter adversarial term missing/zero in the loss log");

    std::ostringstream detail;
    detail.precision(4);
    detail << "finite runs; adversarial terms logged nonzero; val mIoU with OSA " << with_osa
           << " vs without " << without << " (reported, not gated)";
    return detail.str();
}

// ------------------------------------------------------------- criterion 7

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = "'" + g_cli + "' " + args + " >>'" + log.string() + "' 2>&1";
    return std::system(cmd.c_str());
}

std::string criterion_end_to_end() {
    require(!g_cli.empty() && fs::exists(g_cli), "CLI binary path not supplied");
    const auto t0 = std::chrono::steady_clock::now();

    auto once = [&](const fs::path& dir) {
        fs::create_directories(dir);
        const fs::path log = dir / "cli.log";

        auto scene = equal_scale_scene(6, 6, 2, 2);
        write_file_atomic(dir / "scene.json", scene.to_json());
        require(run_cli("synth --config '" + (dir / "scene.json").string() + "' --out '" +
                            (dir / "data").string() + "'",
                        log) == 0,
                "synth failed (see " + log.string() + ")");

        experiment::ExperimentConfig cfg;
        cfg.source_manifest = dir / "data" / "source" / "manifest.jsonl";
        cfg.target_manifest = dir / "data" / "target" / "manifest.jsonl";
        cfg.out_dir = dir / "run";
        cfg.seed = kSeed;
        cfg.deterministic = true;
        cfg.report_split = "test";
        cfg.stage_a.epochs = 2;
        cfg.stage_a.gen.base_width = 4;
        cfg.stage_a.gen.depth = 3;
        cfg.stage_a.disc_base_width = 4;
        cfg.stage_b.epochs = 2;
        cfg.stage_b.encoder = nets::EncoderScale::tiny;
        cfg.stage_b.disc_base_width = 4;
        cfg.stage_b.batch_size = 4;
        write_file_atomic(dir / "experiment.json", cfg.to_json().dump(2));

        const std::string conf = " --config '" + (dir / "experiment.json").string() + "'";
        require(run_cli("train-a" + conf, log) == 0, "train-a failed (see " + log.string() + ")");
        require(run_cli("translate" + conf, log) == 0, "translate failed");
        require(run_cli("train-b" + conf, log) == 0, "train-b failed");
        require(run_cli("eval" + conf, log) == 0, "eval failed");
        return read_file(dir / "run" / "eval" / "report.json");
    };

    auto report1 = once(fresh_dir("e2e_run1"));
    auto report2 = once(fresh_dir("e2e_run2"));

    // schema-valid: parses back into a complete report
    auto parsed = metrics::parse_report_json(report1);
    require(parsed.class_names.size() == 6, "report lacks the six classes");
    require(parsed.iou.size() == 6 && parsed.f1.size() == 6, "report lacks per-class metrics");
    require(parsed.miou >= 0.0 && parsed.miou <= 1.0, "mIoU out of range");

    require(report1 == report2, "deterministic reruns produced different reports");

    const double minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    require(minutes < 15.0, "pipeline exceeded 15 minutes");
    std::ostringstream detail;
    detail.precision(3);
    detail << "two full pipelines in " << minutes << " min; reports bit-identical; mIoU "
           << parsed.miou;
    return detail.str();
}

// ------------------------------------------------------------- criterion 8

std::string criterion_report_format() {
    metrics::MetricsReport ref;
    ref.class_names = {"clutter_background", "impervious_surface", "car",
                       "tree",               "low_vegetation",     "building"};
    ref.iou = {0.2690, 0.5613, 0.4938, 0.6020, 0.4673, 0.9564};
    ref.f1 = {0.3906, 0.7147, 0.6563, 0.7473, 0.6315, 0.9777};
    ref.present.assign(6, true);
    ref.miou = 0.5583;
    ref.overall_f1 = 0.6804;
    auto table = metrics::format_report(ref, metrics::ReportStyle::paper_table);
    require(table.find("55.83") != std::string::npos, "mIoU string 55.83 missing");
    require(table.find("68.04") != std::string::npos, "overall F1 string 68.04 missing");
    require(table.find("Overall & 55.83 & 68.04") != std::string::npos,
            "overall row not rendered in table form");
    return "reference row renders as 55.83 / 68.04";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    const int only = argc > 2 ? std::atoi(argv[2]) : 0;  // 0 = run all
    torch::set_num_threads(1);

    struct Criterion {
        int id;
        const char* name;
        std::function<std::string()> body;
    };
    const std::vector<Criterion> criteria = {
        {1, "loss closed forms + gradient check", criterion_losses},
        {2, "residual/resize identities", criterion_identities},
        {3, "metrics oracle equivalence", criterion_metrics_oracle},
        {4, "schedule + parameter isolation", criterion_schedule},
        {5, "synthetic scale-discrepancy reproduction", criterion_scale_reproduction},
        {6, "output-space adaptation wiring", criterion_osa_wiring},
        {7, "end-to-end pipeline determinism", criterion_end_to_end},
        {8, "report formatting", criterion_report_format},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        std::string detail;
        bool ok = true;
        try {
            detail = c.body();
        } catch (const Failure& f) {
            ok = false;
            detail = f.detail;
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        std::printf("%s  criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}
