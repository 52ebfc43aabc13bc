#ifndef RDG_TRAIN_B_HPP
#define RDG_TRAIN_B_HPP

#include <memory>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "rdg/checkpoint.hpp"
#include "rdg/common.hpp"
#include "rdg/datakit.hpp"
#include "rdg/losses.hpp"
#include "rdg/metrics.hpp"
#include "rdg/nets.hpp"

namespace rdg::train_b {

struct StageBConfig {
    losses::StageBWeights weights;
    double lr = 2e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int batch_size = 16;
    int epochs = 20;
    nets::EncoderScale encoder = nets::EncoderScale::paper;
    int disc_base_width = 64;
    double plateau_factor = 0.5;
    int plateau_patience = 3;
    double min_lr = 1e-6;
    bool nonsaturating_adv = false;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int log_every = 10;
    fs::path out_dir;

    void validate() const;
};

// Segmentation training on translated tiles with output-space adversarial
// alignment against unlabeled target tiles.
class StageBTrainer {
public:
    StageBTrainer(StageBConfig cfg, const datakit::TileManifest& translated,
                  const datakit::TileManifest& target, const datakit::TileManifest& val);

    losses::LossBundle disc_step(const torch::Tensor& x_translated, const torch::Tensor& x_target);
    losses::LossBundle seg_step(const torch::Tensor& x_translated, const torch::Tensor& y_translated,
                                const torch::Tensor& x_target);

    void run();

    double evaluate_miou();                   // current segmenter on the val split
    void observe_validation(double miou);     // best tracking + plateau decay

    bool osa_enabled() const { return osa_enabled_; }
    std::int64_t disc_steps() const { return disc_steps_; }
    std::int64_t seg_steps() const { return seg_steps_; }
    int epochs_done() const { return epochs_done_; }
    double best_miou() const { return best_miou_; }
    const std::vector<double>& val_history() const { return val_history_; }
    double current_lr() const { return current_lr_; }

    nets::Segmenter& segmenter() { return seg_; }
    nets::OutputSpaceDiscriminator& disc() { return d_out_; }

    ckpt::Archive archive() const;
    void restore(const ckpt::Archive& a);
    void save(const fs::path& path) const;
    const ckpt::Archive& best_archive() const;

    const StageBConfig& config() const { return cfg_; }

private:
    void abort_with_checkpoint(const std::string& why);

    StageBConfig cfg_;
    int num_classes_ = 0;
    datakit::TileTensorSet translated_, target_, val_;
    bool osa_enabled_ = true;
    nets::Segmenter seg_{nullptr};
    nets::OutputSpaceDiscriminator d_out_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_seg_;
    std::unique_ptr<torch::optim::Adam> opt_disc_;
    std::mt19937_64 rng_;
    std::int64_t disc_steps_ = 0;
    std::int64_t seg_steps_ = 0;
    int epochs_done_ = 0;
    double best_miou_ = -1.0;
    int stall_epochs_ = 0;
    double current_lr_ = 0.0;
    std::vector<double> val_history_;
    std::unique_ptr<ckpt::Archive> best_archive_;
    losses::LossLog log_;
};

// Argmax class maps (int32 [H,W]) for every tile in the manifest.
std::vector<torch::Tensor> predict(const ckpt::Archive& archive, const datakit::TileManifest& tiles);

// Writes one indexed-color PNG per tile plus a palette sidecar; returns the
// prediction file paths in manifest order.
std::vector<fs::path> export_predictions(const ckpt::Archive& archive,
                                         const datakit::TileManifest& tiles,
                                         const fs::path& out_dir);

// Confusion-based report of checkpointed predictions against manifest labels.
metrics::MetricsReport evaluate(const ckpt::Archive& archive, const datakit::TileManifest& tiles,
                                bool strict_absent = false);

}  // namespace rdg::train_b

#endif
