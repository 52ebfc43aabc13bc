#include "rdg/losses.hpp"

#include <fstream>

namespace rdg::losses {

namespace {

constexpr double kProbEps = 1e-7;

void require_nonempty(const torch::Tensor& t, const char* what) {
    if (!t.defined() || t.numel() == 0) throw ValidationError(std::string(what) + " is empty");
}

void require_finite(const torch::Tensor& t, const char* what) {
    if (!torch::isfinite(t).all().item<bool>())
        throw NumericError(std::string(what) + " contains non-finite values");
}

}  // namespace

void StageAWeights::validate() const {
    if (lambda_cyc < 0 || lambda_adv < 0 || gp_weight < 0)
        throw ValidationError("stage-a loss weights must be non-negative");
}

void StageBWeights::validate() const {
    if (lambda_seg < 0 || lambda_adv_o < 0)
        throw ValidationError("stage-b loss weights must be non-negative");
}

bool LossBundle::finite() const {
    for (const auto& [name, value] : terms)
        if (!torch::isfinite(value).all().item<bool>()) return false;
    return !total.defined() || torch::isfinite(total).all().item<bool>();
}

torch::Tensor adv_loss_wgan(const torch::Tensor& d_real_scores, const torch::Tensor& d_fake_scores) {
    require_nonempty(d_real_scores, "real score batch");
    require_nonempty(d_fake_scores, "fake score batch");
    require_finite(d_real_scores, "real scores");
    require_finite(d_fake_scores, "fake scores");
    return d_real_scores.mean() - d_fake_scores.mean();
}

torch::Tensor wgan_generator_loss(const torch::Tensor& d_fake_scores) {
    require_nonempty(d_fake_scores, "fake score batch");
    require_finite(d_fake_scores, "fake scores");
    return -d_fake_scores.mean();
}

torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake,
                               double gp_weight, std::optional<std::uint64_t> seed) {
    if (!real.sizes().equals(fake.sizes()))
        throw ValidationError("gradient penalty needs same-shape real/fake batches");
    if (gp_weight < 0) throw ValidationError("gp_weight must be non-negative");
    if (gp_weight == 0.0) return torch::zeros({}, real.options());

    const auto b = real.size(0);
    std::vector<std::int64_t> eps_shape(real.dim(), 1);
    eps_shape[0] = b;
    torch::Tensor eps;
    if (seed) {
        auto gen = torch::make_generator<at::CPUGeneratorImpl>(*seed);
        eps = torch::rand(eps_shape, gen, real.options());
    } else {
        eps = torch::rand(eps_shape, real.options());
    }

    auto interp = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(true);
    auto scores = critic(interp);
    auto grad = torch::autograd::grad({scores.sum()}, {interp},
                                      /*grad_outputs=*/{},
                                      /*retain_graph=*/true,
                                      /*create_graph=*/true)[0];
    auto norms = grad.reshape({b, -1}).norm(2, /*dim=*/1);
    return gp_weight * (norms - 1.0).square().mean();
}

torch::Tensor cycle_loss(const torch::Tensor& x_src, const torch::Tensor& x_cycled,
                         const torch::Tensor& x_tgt, const torch::Tensor& x_tgt_cycled) {
    if (!x_src.sizes().equals(x_cycled.sizes()) || !x_tgt.sizes().equals(x_tgt_cycled.sizes()))
        throw ValidationError("cycle loss needs cycled shapes to match the originals");
    return torch::l1_loss(x_cycled, x_src) + torch::l1_loss(x_tgt_cycled, x_tgt);
}

torch::Tensor stage_a_total(const torch::Tensor& adv_st, const torch::Tensor& adv_ts,
                            const torch::Tensor& cyc, const StageAWeights& w) {
    w.validate();
    return w.lambda_cyc * cyc + w.lambda_adv * (adv_st + adv_ts);
}

torch::Tensor osa_disc_loss(const torch::Tensor& d_out_on_translated,
                            const torch::Tensor& d_out_on_target) {
    require_nonempty(d_out_on_translated, "translated probability batch");
    require_nonempty(d_out_on_target, "target probability batch");
    auto p_tr = d_out_on_translated.clamp(kProbEps, 1.0 - kProbEps);
    auto p_tg = d_out_on_target.clamp(kProbEps, 1.0 - kProbEps);
    return -p_tr.log().mean() - (1.0 - p_tg).log().mean();
}

torch::Tensor seg_ce_loss(const torch::Tensor& logits, const torch::Tensor& labels,
                          std::optional<std::int64_t> ignore_index) {
    auto lg = logits.dim() == 3 ? logits.unsqueeze(0) : logits;
    auto lb = labels.dim() == 2 ? labels.unsqueeze(0) : labels;
    if (lg.dim() != 4 || lb.dim() != 3)
        throw ValidationError("seg_ce_loss expects [B,C,H,W] logits and [B,H,W] labels");
    lb = lb.to(torch::kInt64);
    namespace F = torch::nn::functional;
    auto opts = F::CrossEntropyFuncOptions();
    if (ignore_index) {
        opts = opts.ignore_index(*ignore_index);
        if ((lb != *ignore_index).sum().item<std::int64_t>() == 0)
            throw ValidationError("seg_ce_loss: every pixel is ignored");
    }
    return F::cross_entropy(lg, lb, opts);
}

torch::Tensor seg_adv_loss(const torch::Tensor& d_out_on_target, bool nonsaturating) {
    require_nonempty(d_out_on_target, "target probability batch");
    auto p = d_out_on_target.clamp(kProbEps, 1.0 - kProbEps);
    if (nonsaturating) return -p.log().mean();
    return (1.0 - p).log().mean();
}

torch::Tensor stage_b_total(const torch::Tensor& seg, const torch::Tensor& adv_o,
                            const StageBWeights& w) {
    w.validate();
    return w.lambda_seg * seg + w.lambda_adv_o * adv_o;
}

LossLog::LossLog(const fs::path& path) : path_(path) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    if (!fs::exists(path_)) {
        std::ofstream out(path_);
        if (!out) throw IoError("cannot open loss log: " + path_.string());
        out << "step\tname\tvalue\n";
    }
}

void LossLog::append(std::int64_t step, const std::string& name, double value) {
    if (path_.empty()) return;
    char line[160];
    std::snprintf(line, sizeof(line), "%lld\t%s\t%.8g\n", static_cast<long long>(step),
                  name.c_str(), value);
    buffer_ += line;
    if (buffer_.size() > 1 << 16) flush();
}

void LossLog::append(std::int64_t step, const LossBundle& bundle) {
    for (const auto& [name, value] : bundle.terms)
        append(step, name, value.item<double>());
    if (bundle.total.defined()) append(step, "total", bundle.total.item<double>());
}

void LossLog::flush() {
    if (path_.empty() || buffer_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to loss log: " + path_.string());
    out << buffer_;
    buffer_.clear();
}

}  // namespace rdg::losses
