#ifndef RDG_TRAIN_A_HPP
#define RDG_TRAIN_A_HPP

#include <memory>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "rdg/checkpoint.hpp"
#include "rdg/common.hpp"
#include "rdg/datakit.hpp"
#include "rdg/losses.hpp"
#include "rdg/nets.hpp"

namespace rdg::train_a {

struct StageAConfig {
    nets::ResiGeneratorConfig gen;  // in_px/out_px are filled from the domain pair
    losses::StageAWeights weights;
    double lr_gen = 5e-4;
    double lr_disc = 5e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double rmsprop_alpha = 0.99;
    int disc_base_width = 64;
    int batch_size = 1;
    int critic_iters = 5;
    int epochs = 100;
    double scale_rel_tol = 0.05;
    bool enforce_scale_check = true;  // off only for the same-size "no resize" arm
    std::uint64_t seed = 0;
    bool deterministic = false;
    int log_every = 10;
    fs::path out_dir;

    void validate() const;
};

// Alternating critic/generator training over an unpaired domain pair.
class StageATrainer {
public:
    StageATrainer(StageAConfig cfg, const datakit::TileManifest& src,
                  const datakit::TileManifest& tgt);

    // Exposed individually so schedule/isolation invariants are testable.
    losses::LossBundle critic_step(const torch::Tensor& x_s, const torch::Tensor& x_t);
    losses::LossBundle generator_step(const torch::Tensor& x_s, const torch::Tensor& x_t);

    // Full loop with per-epoch checkpoints; resumes from latest.ckpt in
    // out_dir when present.
    void run();

    torch::Tensor sample_source();
    torch::Tensor sample_target();

    std::int64_t critic_steps() const { return critic_steps_; }
    std::int64_t generator_steps() const { return generator_steps_; }
    int epochs_done() const { return epochs_done_; }
    const std::vector<double>& epoch_cycle_means() const { return epoch_cycle_means_; }

    nets::ResiGenerator& gen_s2t() { return g_s2t_; }
    nets::ResiGenerator& gen_t2s() { return g_t2s_; }
    nets::Discriminator& disc_s() { return d_s_; }
    nets::Discriminator& disc_t() { return d_t_; }

    ckpt::Archive archive() const;
    void restore(const ckpt::Archive& archive);
    void save(const fs::path& path) const;

    const StageAConfig& config() const { return cfg_; }

private:
    void abort_with_checkpoint(const std::string& why);

    StageAConfig cfg_;
    datakit::TileTensorSet src_, tgt_;
    datakit::DomainSpec src_domain_, tgt_domain_;
    nets::ResiGenerator g_s2t_{nullptr}, g_t2s_{nullptr};
    nets::Discriminator d_s_{nullptr}, d_t_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g_;
    std::unique_ptr<torch::optim::RMSprop> opt_d_;
    std::mt19937_64 rng_;
    std::int64_t critic_steps_ = 0;
    std::int64_t generator_steps_ = 0;
    int epochs_done_ = 0;
    std::vector<double> epoch_cycle_means_;
    losses::LossLog log_;
};

enum class Direction { s2t, t2s };
Direction direction_from_name(const std::string& s);
std::string direction_name(Direction d);

// Maps every tile of `src` through the checkpointed generator (eval mode,
// no grad); labels, when present, are nearest-resized to the output size.
// Writes images/labels/manifest under out_dir and returns the new manifest.
datakit::TileManifest translate_dataset(const ckpt::Archive& archive,
                                        const datakit::TileManifest& src, Direction direction,
                                        const fs::path& out_dir);

}  // namespace rdg::train_a

#endif
