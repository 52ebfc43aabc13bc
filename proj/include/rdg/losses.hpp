#ifndef RDG_LOSSES_HPP
#define RDG_LOSSES_HPP

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "rdg/common.hpp"

namespace rdg::losses {

struct StageAWeights {
    double lambda_cyc = 10.0;
    double lambda_adv = 1.0;
    double gp_weight = 10.0;

    void validate() const;
};

struct StageBWeights {
    double lambda_seg = 1.0;
    double lambda_adv_o = 0.02;

    void validate() const;
};

// Named scalar terms plus their weighted total, all graph tensors.
struct LossBundle {
    std::vector<std::pair<std::string, torch::Tensor>> terms;
    torch::Tensor total;

    void add(std::string name, torch::Tensor value) { terms.emplace_back(std::move(name), std::move(value)); }
    bool finite() const;
};

// Earth-Mover surrogate the critic maximizes: mean(real) - mean(fake).
// The generator minimizes the same quantity.
torch::Tensor adv_loss_wgan(const torch::Tensor& d_real_scores, const torch::Tensor& d_fake_scores);

// Generator-side term with the real-score constant dropped: -mean(fake).
torch::Tensor wgan_generator_loss(const torch::Tensor& d_fake_scores);

// Penalty on the critic gradient norm at per-sample convex mixtures of
// real/fake: gp_weight * mean((||grad D(x_hat)|| - 1)^2). `critic` must be
// differentiable through autograd (double backward).
torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake,
                               double gp_weight, std::optional<std::uint64_t> seed = std::nullopt);

// L1 reconstruction over both cycle directions.
torch::Tensor cycle_loss(const torch::Tensor& x_src, const torch::Tensor& x_cycled,
                         const torch::Tensor& x_tgt, const torch::Tensor& x_tgt_cycled);

torch::Tensor stage_a_total(const torch::Tensor& adv_st, const torch::Tensor& adv_ts,
                            const torch::Tensor& cyc, const StageAWeights& w);

// Output-space discriminator loss over probabilities in (0,1):
// translated-source labeled 1, target labeled 0.
torch::Tensor osa_disc_loss(const torch::Tensor& d_out_on_translated,
                            const torch::Tensor& d_out_on_target);

// Per-pixel categorical cross-entropy. logits [B,C,H,W] (or [C,H,W]),
// labels int64 [B,H,W] (or [H,W]).
torch::Tensor seg_ce_loss(const torch::Tensor& logits, const torch::Tensor& labels,
                          std::optional<std::int64_t> ignore_index = std::nullopt);

// Adversarial term the segmenter minimizes on target probabilities:
// E[log(1 - D)] as printed, or -E[log D] with nonsaturating=true.
torch::Tensor seg_adv_loss(const torch::Tensor& d_out_on_target, bool nonsaturating = false);

torch::Tensor stage_b_total(const torch::Tensor& seg, const torch::Tensor& adv_o,
                            const StageBWeights& w);

// Line-delimited loss log: one "step\tname\tvalue" record per term.
class LossLog {
public:
    LossLog() = default;
    explicit LossLog(const fs::path& path);
    void append(std::int64_t step, const std::string& name, double value);
    void append(std::int64_t step, const LossBundle& bundle);
    void flush();

private:
    fs::path path_;
    std::string buffer_;
};

}  // namespace rdg::losses

#endif
